"""Build script; compiles the topology kernels if Cython + a C compiler are present.

A failed extension build is not fatal: the package falls back to the pure
Python kernels in mathtrans.kernels.pure at import time.
"""

import sys

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "mathtrans.kernels._ext",
                ["src/mathtrans/kernels/_ext.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"warning: skipping compiled kernels ({exc}); pure Python fallback "
          "will be used", file=sys.stderr)
    extensions = []

setup(ext_modules=extensions)
