"""Topology kernel dispatch: compiled extension if built, pure Python otherwise.

Set MATHTRANS_PURE_KERNELS=1 to force the fallback (used by the benchmark
and the kernel-equivalence tests).
"""

import os

if os.environ.get("MATHTRANS_PURE_KERNELS"):
    from . import pure as _impl
    BACKEND = "pure"
else:
    try:
        from . import _ext as _impl
        BACKEND = "ext"
    except ImportError:
        from . import pure as _impl
        BACKEND = "pure"

validate = _impl.validate
skip_subtree = _impl.skip_subtree
subsumes = _impl.subsumes
union = _impl.union
union_size = _impl.union_size
subsumes_many = _impl.subsumes_many
union_size_many = _impl.union_size_many
