import numpy as np
import pytest
from hypothesis import strategies as st

from mathtrans.trees import BinTree, Topology, bleaf, bnode

LABELS = ["x", "y", "2", "+", "\\frac", "\\sqrt", "a", "n"]


def topologies(max_leaves: int = 8) -> st.SearchStrategy[Topology]:
    return st.recursive(
        st.just(b"\x00"),
        lambda kids: st.tuples(kids, kids).map(lambda lr: b"\x01" + lr[0] + lr[1]),
        max_leaves=max_leaves,
    ).map(Topology)


def bintrees(max_leaves: int = 8) -> st.SearchStrategy[BinTree]:
    leaf = st.sampled_from(LABELS).map(bleaf)
    return st.recursive(
        leaf,
        lambda kids: st.tuples(kids, kids).map(lambda lr: bnode(lr[0], lr[1])),
        max_leaves=max_leaves,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
