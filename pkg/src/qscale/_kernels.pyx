# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled coin kernels. Must agree bit-for-bit with _kernels_py."""

from libc.stdint cimport uint64_t, int64_t

import numpy as np
cimport numpy as cnp

cnp.import_array()

IMPL = "cython"

cdef uint64_t _OFFSET = 0x84222325CBF29CE4ULL
cdef uint64_t _LANE_MULT = 0xFF51AFD7ED558CCDULL
cdef uint64_t _MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _MIX2 = 0x94D049BB133111EBULL

MASK64 = (1 << 64) - 1


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * _MIX1
    z = (z ^ (z >> 27)) * _MIX2
    return z ^ (z >> 31)


def mix64(z):
    return int(_mix64(<uint64_t> (z & MASK64)))


def fold_prefix(bytes data):
    cdef uint64_t h = _OFFSET
    cdef uint64_t w
    cdef Py_ssize_t n = len(data)
    cdef Py_ssize_t off, j, end
    cdef const unsigned char[:] buf = data
    for off in range(0, n, 8):
        w = 0
        end = off + 8
        if end > n:
            end = n
        for j in range(off, end):
            w |= (<uint64_t> buf[j]) << ((j - off) * 8)
        h = (h ^ _mix64(w)) * _LANE_MULT
    return int(h), int(n)


def fold_digest(bytes data):
    cdef uint64_t h
    cdef Py_ssize_t n
    hi, n = fold_prefix(data)
    h = <uint64_t> hi
    return int(_mix64(h ^ (<uint64_t> n)))


def coin_one(prefix, prefix_len, subject, threshold):
    if threshold <= 0:
        return False
    if threshold > MASK64:
        return True
    cdef uint64_t h = (<uint64_t> prefix ^ _mix64(<uint64_t> subject)) * _LANE_MULT
    return bool(_mix64(h ^ (<uint64_t> prefix_len + 8)) < <uint64_t> threshold)


def coin_mask(prefix, prefix_len, n, threshold):
    cdef cnp.ndarray[cnp.npy_bool, ndim=1] out = np.empty(n, dtype=bool)
    cdef uint64_t pre = 0
    cdef uint64_t tail = 0
    cdef uint64_t thr = 0
    cdef uint64_t h
    cdef Py_ssize_t i, m = n
    if threshold <= 0:
        out[:] = False
        return out
    if threshold > MASK64:
        out[:] = True
        return out
    pre = <uint64_t> prefix
    tail = <uint64_t> prefix_len + 8
    thr = <uint64_t> threshold
    with nogil:
        for i in range(m):
            h = (pre ^ _mix64(<uint64_t> (i + 1))) * _LANE_MULT
            out[i] = _mix64(h ^ tail) < thr
    return out


def sample_pids(prefix, prefix_len, n, threshold):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] buf = np.empty(n, dtype=np.int64)
    cdef uint64_t pre = 0
    cdef uint64_t tail = 0
    cdef uint64_t thr = 0
    cdef uint64_t h
    cdef Py_ssize_t i, m = n
    cdef Py_ssize_t count = 0
    if threshold <= 0:
        return np.empty(0, dtype=np.int64)
    if threshold > MASK64:
        return np.arange(1, n + 1, dtype=np.int64)
    pre = <uint64_t> prefix
    tail = <uint64_t> prefix_len + 8
    thr = <uint64_t> threshold
    with nogil:
        for i in range(m):
            h = (pre ^ _mix64(<uint64_t> (i + 1))) * _LANE_MULT
            if _mix64(h ^ tail) < thr:
                buf[count] = i + 1
                count += 1
    return buf[:count].copy()
