"""Pure-Python topology kernels.

A topology is a strictly binary tree shape encoded as its preorder structure
string: one byte per node, 1 for an internal node, 0 for a leaf.  Because
every internal node has exactly two children the encoding is unambiguous and
each subtree occupies a contiguous slice.

Position semantics: a "position" is the root-to-node path; two preorder
walks visit the same position iff they are aligned step for step, which is
what the simultaneous-walk loops below exploit.

The compiled twin of this module is _ext.pyx; both expose the same
functions and are interchangeable (tests assert equality on random inputs).
"""

import numpy as np

INTERNAL = 1
LEAF = 0


def validate(struct: bytes) -> bool:
    """True iff struct is the preorder encoding of one strictly binary tree."""
    if not struct:
        return False
    need = 1
    for i, b in enumerate(struct):
        if need == 0:
            return False
        if b == INTERNAL:
            need += 1
        elif b == LEAF:
            need -= 1
        else:
            return False
    return need == 0


def skip_subtree(struct, i: int) -> int:
    """Index one past the subtree rooted at preorder index i."""
    count = 1
    while count:
        if struct[i] == INTERNAL:
            count += 1
        else:
            count -= 1
        i += 1
    return i


def subsumes(a: bytes, b: bytes) -> bool:
    """True iff every position of b also exists in a."""
    ia = ib = 0
    open_pairs = 1
    while open_pairs:
        open_pairs -= 1
        if b[ib] == INTERNAL:
            if a[ia] == LEAF:
                return False
            open_pairs += 2
            ia += 1
        else:
            ia = skip_subtree(a, ia)
        ib += 1
    return True


def union(a: bytes, b: bytes) -> bytes:
    """Preorder encoding of the position-wise union of a and b."""
    out = bytearray()
    _union_into(a, 0, b, 0, out)
    return bytes(out)


def _union_into(a, ia, b, ib, out):
    x, y = a[ia], b[ib]
    if x == INTERNAL and y == INTERNAL:
        out.append(INTERNAL)
        ia2, ib2 = _union_children(a, ia + 1, b, ib + 1, out)
    elif x == INTERNAL:
        out.extend(a[ia:skip_subtree(a, ia)])
    elif y == INTERNAL:
        out.extend(b[ib:skip_subtree(b, ib)])
    else:
        out.append(LEAF)


def _union_children(a, ia, b, ib, out):
    for _ in range(2):
        _union_into(a, ia, b, ib, out)
        ia = skip_subtree(a, ia)
        ib = skip_subtree(b, ib)
    return ia, ib


def union_size(a: bytes, b: bytes) -> int:
    """len(union(a, b)) without materializing the union."""
    ia = ib = 0
    size = 0
    open_pairs = 1
    while open_pairs:
        open_pairs -= 1
        x, y = a[ia], b[ib]
        if x == INTERNAL and y == INTERNAL:
            size += 1
            open_pairs += 2
            ia += 1
            ib += 1
        elif x == INTERNAL:
            j = skip_subtree(a, ia)
            size += j - ia
            ia = j
            ib += 1
        elif y == INTERNAL:
            j = skip_subtree(b, ib)
            size += j - ib
            ib = j
            ia += 1
        else:
            size += 1
            ia += 1
            ib += 1
    return size


def subsumes_many(a: bytes, flat: bytes, offsets: np.ndarray, out: np.ndarray) -> None:
    """out[k] = subsumes(a, flat[offsets[k]:offsets[k+1]]) for every pool entry."""
    for k in range(len(offsets) - 1):
        out[k] = subsumes(a, flat[offsets[k]:offsets[k + 1]])


def union_size_many(a: bytes, flat: bytes, offsets: np.ndarray, out: np.ndarray) -> None:
    """out[k] = union_size(a, flat[offsets[k]:offsets[k+1]]) for every pool entry."""
    for k in range(len(offsets) - 1):
        out[k] = union_size(a, flat[offsets[k]:offsets[k + 1]])
