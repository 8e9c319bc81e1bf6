"""Pure-Python vs compiled topology kernels must agree everywhere."""

import numpy as np
from hypothesis import given, settings

from mathtrans import kernels
from mathtrans.kernels import pure

from conftest import topologies

try:
    from mathtrans.kernels import _ext
    BACKENDS = [pure, _ext]
except ImportError:
    BACKENDS = [pure]


def test_validate_rejects_garbage():
    for impl in BACKENDS:
        assert not impl.validate(b"")
        assert not impl.validate(b"\x01")
        assert not impl.validate(b"\x00\x00")
        assert not impl.validate(b"\x02")
        assert impl.validate(b"\x00")
        assert impl.validate(b"\x01\x00\x00")


@given(topologies(), topologies())
@settings(max_examples=200)
def test_backends_agree(a, b):
    results = set()
    for impl in BACKENDS:
        u = impl.union(a.struct, b.struct)
        results.add((impl.subsumes(a.struct, b.struct), u,
                     impl.union_size(a.struct, b.struct)))
        assert impl.validate(u)
    assert len(results) == 1


@given(topologies(), topologies())
@settings(max_examples=50)
def test_many_variants_match_scalar(a, b):
    pool = [a.struct, b.struct, b"\x00"]
    flat = b"".join(pool)
    offs = np.zeros(len(pool) + 1, dtype=np.int64)
    np.cumsum([len(p) for p in pool], out=offs[1:])
    for impl in BACKENDS:
        subs = np.empty(len(pool), dtype=bool)
        us = np.empty(len(pool), dtype=np.int64)
        impl.subsumes_many(a.struct, flat, offs, subs)
        impl.union_size_many(a.struct, flat, offs, us)
        for k, p in enumerate(pool):
            assert subs[k] == impl.subsumes(a.struct, p)
            assert us[k] == impl.union_size(a.struct, p)


@given(topologies())
@settings(max_examples=100)
def test_skip_subtree_spans_whole_tree(t):
    for impl in BACKENDS:
        assert impl.skip_subtree(t.struct, 0) == len(t.struct)
