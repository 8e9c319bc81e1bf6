import pytest
from hypothesis import given, settings

from mathtrans.trees import BinTree, NaryTree, Topology, TreeError, bleaf, bnode

from conftest import bintrees, topologies


def test_leaf_and_node_invariants():
    with pytest.raises(TreeError):
        NaryTree()  # internal node with no children
    with pytest.raises(TreeError):
        BinTree(label="x", left=bleaf("y"), right=bleaf("z"))
    with pytest.raises(TreeError):
        BinTree(left=bleaf("x"), right=None)
    with pytest.raises(TreeError):
        BinTree(label="x", swap=1)


def test_sizes():
    assert bleaf("x").size == 1
    assert bnode(bleaf("a"), bleaf("b")).size == 3
    assert Topology(b"\x01\x00\x00").size == 3


@given(bintrees())
@settings(max_examples=200)
def test_binary_json_round_trip(t):
    s = t.to_json()
    again = BinTree.from_json(s)
    assert again == t
    assert again.to_json() == s


@given(bintrees())
@settings(max_examples=100)
def test_topology_matches_preorder(t):
    topo = t.topology()
    assert topo.size == t.size
    nodes = list(t.preorder())
    assert len(nodes) == t.size
    assert [0 if n.is_leaf else 1 for n in nodes] == list(topo.struct)


@given(topologies())
@settings(max_examples=100)
def test_child_and_parent_arrays_consistent(topo):
    left, right = topo.child_arrays()
    parent, branch = topo.parent_arrays()
    assert parent[0] == -1
    for i in range(topo.size):
        if left[i] >= 0:
            assert parent[left[i]] == i and branch[left[i]] == 0
            assert parent[right[i]] == i and branch[right[i]] == 1
    post = topo.postorder()
    seen = set()
    for i in post:
        if left[i] >= 0:
            assert int(left[i]) in seen and int(right[i]) in seen
        seen.add(int(i))
    assert len(seen) == topo.size


def test_invalid_topology_rejected():
    with pytest.raises(TreeError):
        Topology(b"\x01\x00")
    with pytest.raises(TreeError):
        Topology(b"")
