"""Vocabulary, integer tree encoding, and hull padding.

Reserved ids: 0 marks internal nodes, 1 (Y_END) marks hull positions absent
from the actual tree, 2 is the out-of-vocabulary id.  Corpus tokens start at
3, so every real leaf encodes to an id >= 2 and internal nodes are the only
positions valued 0.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .trees import BinTree, Topology, bleaf, bnode

INTERNAL_ID = 0
Y_END_ID = 1
UNK_ID = 2
FIRST_TOKEN_ID = 3

RESERVED_NAMES = {INTERNAL_ID: "<INTERNAL>", Y_END_ID: "<Y_END>", UNK_ID: "<UNK>"}


class EncodingError(ValueError):
    pass


class NotSubsumed(EncodingError):
    pass


class Vocabulary:
    def __init__(self, token_to_id: dict[str, int]):
        for tok, i in token_to_id.items():
            if i < FIRST_TOKEN_ID:
                raise EncodingError(f"token {tok!r} mapped to reserved id {i}")
        self.token_to_id = dict(token_to_id)
        self.id_to_token = {i: t for t, i in token_to_id.items()}
        if len(self.id_to_token) != len(self.token_to_id):
            raise EncodingError("vocabulary ids are not unique")

    def __len__(self):
        # number of ids the model must score, reserved ids included
        return FIRST_TOKEN_ID + len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, idx: int) -> str:
        if idx in RESERVED_NAMES:
            return RESERVED_NAMES[idx]
        return self.id_to_token[idx]

    def to_json(self) -> str:
        return json.dumps(self.token_to_id, sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)

    @classmethod
    def from_json(cls, s: str) -> "Vocabulary":
        return cls(json.loads(s))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def build_vocab(corpus, min_count: int = 1, canonical_sort: bool = False) -> Vocabulary:
    """Vocabulary over the leaf labels of an iterable of BinTrees.

    Ids are assigned in first-seen order starting at 3 (or sorted order when
    canonical_sort is set); labels below min_count are dropped and will
    encode to UNK.
    """
    counts: dict[str, int] = {}
    for tree in corpus:
        for label in tree.leaves():
            counts[label] = counts.get(label, 0) + 1
    if not counts:
        raise EncodingError("empty corpus")
    kept = [t for t in counts if counts[t] >= min_count]
    if canonical_sort:
        kept = sorted(kept)
    return Vocabulary({t: FIRST_TOKEN_ID + i for i, t in enumerate(kept)})


@dataclass(frozen=True)
class EncodedTree:
    """A BinTree as (shape, preorder value ids, preorder swap bits)."""

    topo: Topology
    values: np.ndarray
    swaps: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, EncodedTree) and self.topo == other.topo
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.swaps, other.swaps))


def encode_tree(t: BinTree, vocab: Vocabulary) -> EncodedTree:
    values = []
    swaps = []
    for node in t.preorder():
        if node.is_leaf:
            values.append(vocab.encode(node.label))
            swaps.append(0)
        else:
            values.append(INTERNAL_ID)
            swaps.append(node.swap)
    return EncodedTree(t.topology(), np.asarray(values, dtype=np.int64),
                       np.asarray(swaps, dtype=np.int64))


def decode_tree(enc: EncodedTree, vocab: Vocabulary) -> BinTree:
    left, right = enc.topo.child_arrays()

    def build(i: int) -> BinTree:
        if left[i] < 0:
            return bleaf(vocab.decode(int(enc.values[i])))
        return bnode(build(int(left[i])), build(int(right[i])),
                     swap=int(enc.swaps[i]))

    return build(0)


@dataclass(frozen=True)
class PaddedTree:
    """A tree aligned to a hull: value and swap per hull preorder position.

    Hull positions carrying the tree's nodes hold the node's id (0 for
    internal); positions absent from the tree hold Y_END.  A leaf sitting at
    an internal hull position keeps its id and everything below it is Y_END.
    """

    hull: Topology
    values: np.ndarray
    swaps: np.ndarray


def pad_to(hull: Topology, enc: EncodedTree) -> PaddedTree:
    hl, hr = hull.child_arrays()
    tl, tr = enc.topo.child_arrays()
    values = np.full(hull.size, Y_END_ID, dtype=np.int64)
    swaps = np.zeros(hull.size, dtype=np.int64)

    stack = [(0, 0)]
    while stack:
        ih, it = stack.pop()
        values[ih] = enc.values[it]
        swaps[ih] = enc.swaps[it]
        if tl[it] >= 0:
            if hl[ih] < 0:
                raise NotSubsumed(
                    f"hull lacks the children of tree position {it}")
            stack.append((int(hl[ih]), int(tl[it])))
            stack.append((int(hr[ih]), int(tr[it])))
    return PaddedTree(hull, values, swaps)


def strip(padded: PaddedTree) -> EncodedTree:
    """Remove Y_END padding; inverse of pad_to.

    Also used on predicted value grids, where it additionally validates that
    the non-Y_END positions form a well-shaped tree.
    """
    hl, hr = padded.hull.child_arrays()
    struct = bytearray()
    values = []
    swaps = []

    def build(ih: int):
        v = int(padded.values[ih])
        if v == Y_END_ID:
            raise EncodingError(f"unexpected Y_END at kept position {ih}")
        pos = len(struct)
        struct.append(0)
        values.append(v)
        swaps.append(int(padded.swaps[ih]))
        if v == INTERNAL_ID:
            if hl[ih] < 0 or padded.values[hl[ih]] == Y_END_ID \
                    or padded.values[hr[ih]] == Y_END_ID:
                raise EncodingError(
                    f"internal position {ih} is missing a child")
            struct[pos] = 1
            build(int(hl[ih]))
            build(int(hr[ih]))

    build(0)
    return EncodedTree(Topology(bytes(struct)),
                       np.asarray(values, dtype=np.int64),
                       np.asarray(swaps, dtype=np.int64))


def strip_prediction(hull: Topology, values: np.ndarray,
                     swaps: np.ndarray | None = None) -> EncodedTree | None:
    """Best-effort strip of a predicted value grid.

    Positions below a predicted leaf or Y_END are pruned; an internal
    prediction whose child was predicted Y_END cannot form a valid tree, so
    the position degrades to an UNK leaf and the result is always a valid
    binary tree.  A swap grid (the one fed to the decoder) is carried into
    the result so the traversal can be undone downstream.
    """
    hl, hr = hull.child_arrays()
    struct = bytearray()
    vals: list[int] = []
    sw: list[int] = []

    def build(ih: int) -> None:
        v = int(values[ih])
        pos = len(struct)
        struct.append(0)
        if v == INTERNAL_ID:
            if hl[ih] >= 0 and values[hl[ih]] != Y_END_ID \
                    and values[hr[ih]] != Y_END_ID:
                vals.append(v)
                sw.append(int(swaps[ih]) if swaps is not None else 0)
                struct[pos] = 1
                build(int(hl[ih]))
                build(int(hr[ih]))
            else:
                vals.append(UNK_ID)
                sw.append(0)
        else:
            vals.append(v)
            sw.append(0)

    if int(values[0]) == Y_END_ID:
        return None
    build(0)
    return EncodedTree(Topology(bytes(struct)),
                       np.asarray(vals, dtype=np.int64),
                       np.asarray(sw, dtype=np.int64))


@dataclass
class PaddedBatch:
    """A cluster's members padded to its hull pair; the training minibatch."""

    hull_in: Topology
    hull_out: Topology
    values_in: np.ndarray   # (B, size(hull_in)) int64
    swaps_in: np.ndarray    # (B, size(hull_in)) float64
    values_out: np.ndarray
    swaps_out: np.ndarray
    member_ids: list

    @property
    def n_members(self) -> int:
        return self.values_in.shape[0]


def build_batch(member_ids, encoded_pairs, hull_in: Topology,
                hull_out: Topology) -> PaddedBatch:
    """Pad every member pair to the cluster hulls and stack."""
    vin, sin_, vout, sout = [], [], [], []
    for mid in member_ids:
        enc_in, enc_out = encoded_pairs[mid]
        p_in = pad_to(hull_in, enc_in)
        p_out = pad_to(hull_out, enc_out)
        vin.append(p_in.values)
        sin_.append(p_in.swaps)
        vout.append(p_out.values)
        sout.append(p_out.swaps)
    return PaddedBatch(
        hull_in, hull_out,
        np.stack(vin), np.stack(sin_).astype(np.float64),
        np.stack(vout), np.stack(sout).astype(np.float64),
        list(member_ids))
