# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled topology kernels; see pure.py for the encoding and contracts."""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t

cnp.import_array()

DEF INTERNAL = 1


cdef inline Py_ssize_t _skip(const uint8_t* s, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t count = 1
    while count:
        if s[i] == INTERNAL:
            count += 1
        else:
            count -= 1
        i += 1
    return i


cdef bint _subsumes(const uint8_t* a, const uint8_t* b, Py_ssize_t nb) noexcept nogil:
    cdef Py_ssize_t ia = 0, ib = 0, open_pairs = 1
    while open_pairs:
        open_pairs -= 1
        if b[ib] == INTERNAL:
            if a[ia] != INTERNAL:
                return False
            open_pairs += 2
            ia += 1
        else:
            ia = _skip(a, ia)
        ib += 1
    return True


cdef Py_ssize_t _union_size(const uint8_t* a, const uint8_t* b) noexcept nogil:
    cdef Py_ssize_t ia = 0, ib = 0, size = 0, open_pairs = 1, j
    cdef uint8_t x, y
    while open_pairs:
        open_pairs -= 1
        x = a[ia]
        y = b[ib]
        if x == INTERNAL and y == INTERNAL:
            size += 1
            open_pairs += 2
            ia += 1
            ib += 1
        elif x == INTERNAL:
            j = _skip(a, ia)
            size += j - ia
            ia = j
            ib += 1
        elif y == INTERNAL:
            j = _skip(b, ib)
            size += j - ib
            ib = j
            ia += 1
        else:
            size += 1
            ia += 1
            ib += 1
    return size


def validate(bytes struct) -> bool:
    cdef const uint8_t* s = struct
    cdef Py_ssize_t n = len(struct), i
    cdef Py_ssize_t need = 1
    if n == 0:
        return False
    for i in range(n):
        if need == 0:
            return False
        if s[i] == INTERNAL:
            need += 1
        elif s[i] == 0:
            need -= 1
        else:
            return False
    return need == 0


def skip_subtree(bytes struct, Py_ssize_t i) -> int:
    cdef const uint8_t* s = struct
    return _skip(s, i)


def subsumes(bytes a, bytes b) -> bool:
    cdef const uint8_t* pa = a
    cdef const uint8_t* pb = b
    return _subsumes(pa, pb, len(b))


def union(bytes a, bytes b) -> bytes:
    cdef const uint8_t* pa = a
    cdef const uint8_t* pb = b
    cdef Py_ssize_t cap = len(a) + len(b)
    out = bytearray(cap)
    cdef uint8_t* po = out
    cdef Py_ssize_t n = _union_fill(pa, pb, po)
    return bytes(out[:n])


cdef Py_ssize_t _union_fill(const uint8_t* a, const uint8_t* b, uint8_t* out) noexcept nogil:
    cdef Py_ssize_t ia = 0, ib = 0, io = 0, open_pairs = 1, j
    cdef uint8_t x, y
    while open_pairs:
        open_pairs -= 1
        x = a[ia]
        y = b[ib]
        if x == INTERNAL and y == INTERNAL:
            out[io] = INTERNAL
            io += 1
            open_pairs += 2
            ia += 1
            ib += 1
        elif x == INTERNAL:
            j = _skip(a, ia)
            while ia < j:
                out[io] = a[ia]
                io += 1
                ia += 1
            ib += 1
        elif y == INTERNAL:
            j = _skip(b, ib)
            while ib < j:
                out[io] = b[ib]
                io += 1
                ib += 1
            ia += 1
        else:
            out[io] = 0
            io += 1
            ia += 1
            ib += 1
    return io


def union_size(bytes a, bytes b) -> int:
    cdef const uint8_t* pa = a
    cdef const uint8_t* pb = b
    return _union_size(pa, pb)


def subsumes_many(bytes a, bytes flat, cnp.ndarray[int64_t, ndim=1] offsets,
                  cnp.ndarray[cnp.npy_bool, ndim=1] out):
    cdef const uint8_t* pa = a
    cdef const uint8_t* pf = flat
    cdef Py_ssize_t k, n = offsets.shape[0] - 1
    with nogil:
        for k in range(n):
            out[k] = _subsumes(pa, pf + offsets[k], offsets[k + 1] - offsets[k])


def union_size_many(bytes a, bytes flat, cnp.ndarray[int64_t, ndim=1] offsets,
                    cnp.ndarray[int64_t, ndim=1] out):
    cdef const uint8_t* pa = a
    cdef const uint8_t* pf = flat
    cdef Py_ssize_t k, n = offsets.shape[0] - 1
    with nogil:
        for k in range(n):
            out[k] = _union_size(pa, pf + offsets[k])
