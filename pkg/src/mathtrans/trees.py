"""Tree types shared by the whole pipeline.

Three views of a formula tree:

* NaryTree  -- parser output; only leaves carry labels, internal nodes are
  bare and have >= 1 child.
* BinTree   -- strictly binary, only-leaf-labeled, with a per-internal-node
  swap flag recording whether the right-child-biggest traversal exchanged
  the children.
* Topology  -- a BinTree with values erased; immutable, hashable, backed by
  the preorder structure bytes the kernels operate on.

Canonical JSON (bit-exact golden format):
  binary leaf     {"v": "<label>"}
  binary internal {"l": ..., "r": ..., "s": 0|1}
  n-ary leaf      {"v": "<label>"}
  n-ary internal  {"c": [...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class NaryTree:
    label: str | None = None
    children: tuple["NaryTree", ...] = ()

    def __post_init__(self):
        if self.label is None and not self.children:
            raise TreeError("internal n-ary node with zero children")
        if self.label is not None and self.children:
            raise TreeError("labeled n-ary node cannot have children")

    @property
    def is_leaf(self) -> bool:
        return self.label is not None

    @property
    def size(self) -> int:
        return 1 + sum(c.size for c in self.children)

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.label]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def to_obj(self):
        if self.is_leaf:
            return {"v": self.label}
        return {"c": [c.to_obj() for c in self.children]}

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)

    @classmethod
    def from_obj(cls, obj) -> "NaryTree":
        if "v" in obj:
            return cls(label=obj["v"])
        return cls(children=tuple(cls.from_obj(c) for c in obj["c"]))

    def to_sexpr(self) -> str:
        if self.is_leaf:
            return self.label
        return "(" + " ".join(c.to_sexpr() for c in self.children) + ")"


def nleaf(label: str) -> NaryTree:
    return NaryTree(label=label)


def nnode(children) -> NaryTree:
    return NaryTree(children=tuple(children))


@dataclass(frozen=True)
class BinTree:
    label: str | None = None
    left: "BinTree | None" = None
    right: "BinTree | None" = None
    swap: int = 0
    size: int = field(init=False, compare=False)

    def __post_init__(self):
        if self.label is None:
            if self.left is None or self.right is None:
                raise TreeError("internal binary node must have two children")
            object.__setattr__(self, "size", 1 + self.left.size + self.right.size)
        else:
            if self.left is not None or self.right is not None:
                raise TreeError("labeled binary node cannot have children")
            if self.swap:
                raise TreeError("leaf cannot carry a swap flag")
            object.__setattr__(self, "size", 1)

    @property
    def is_leaf(self) -> bool:
        return self.label is not None

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.label]
        return self.left.leaves() + self.right.leaves()

    def preorder(self):
        """Yield nodes in preorder (parent, left subtree, right subtree)."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def topology(self) -> "Topology":
        return Topology(bytes(0 if n.is_leaf else 1 for n in self.preorder()))

    def to_obj(self):
        if self.is_leaf:
            return {"v": self.label}
        return {"l": self.left.to_obj(), "r": self.right.to_obj(), "s": self.swap}

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)

    @classmethod
    def from_obj(cls, obj) -> "BinTree":
        if "v" in obj:
            return cls(label=obj["v"])
        return cls(left=cls.from_obj(obj["l"]), right=cls.from_obj(obj["r"]),
                   swap=int(obj.get("s", 0)))

    @classmethod
    def from_json(cls, s: str) -> "BinTree":
        return cls.from_obj(json.loads(s))


def bleaf(label: str) -> BinTree:
    return BinTree(label=label)


def bnode(left: BinTree, right: BinTree, swap: int = 0) -> BinTree:
    return BinTree(left=left, right=right, swap=swap)


class Topology:
    """Value-free strictly binary tree shape backed by preorder bytes."""

    __slots__ = ("struct",)

    def __init__(self, struct: bytes):
        if not kernels.validate(struct):
            raise TreeError(f"invalid topology structure {struct!r}")
        self.struct = struct

    @property
    def size(self) -> int:
        return len(self.struct)

    def __eq__(self, other):
        return isinstance(other, Topology) and self.struct == other.struct

    def __hash__(self):
        return hash(self.struct)

    def __repr__(self):
        return f"Topology({''.join(str(b) for b in self.struct)})"

    def child_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Preorder left/right child indices; -1 at leaves."""
        n = self.size
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        for i, b in enumerate(self.struct):
            if b:
                left[i] = i + 1
                right[i] = kernels.skip_subtree(self.struct, i + 1)
        return left, right

    def postorder(self) -> np.ndarray:
        """Preorder indices arranged so children precede their parent."""
        left, right = self.child_arrays()
        order = []
        stack = [(0, False)]
        while stack:
            i, expanded = stack.pop()
            if expanded or left[i] < 0:
                order.append(i)
            else:
                stack.append((i, True))
                stack.append((int(right[i]), False))
                stack.append((int(left[i]), False))
        return np.asarray(order, dtype=np.int64)

    def parent_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(parent index, branch) per preorder position; root gets (-1, 0).

        branch is 0 when the node is its parent's left child, 1 for right.
        """
        left, right = self.child_arrays()
        parent = np.full(self.size, -1, dtype=np.int64)
        branch = np.zeros(self.size, dtype=np.int64)
        for i in range(self.size):
            if left[i] >= 0:
                parent[left[i]] = i
                branch[left[i]] = 0
                parent[right[i]] = i
                branch[right[i]] = 1
        return parent, branch


SINGLE = Topology(b"\x00")


def tree_size(t) -> int:
    """Node count of any tree view (BinTree, NaryTree, or Topology)."""
    if isinstance(t, Topology):
        return t.size
    return t.size
