# cython: language_level=3
"""Compiled hot loops. Must stay bit-identical to ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint32_t, uint64_t, int32_t, int64_t

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

# Bresenham circle of radius 3, clockwise from 12 o'clock.
cdef int CIRCLE_DX[16]
cdef int CIRCLE_DY[16]
CIRCLE_DX[:] = [0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1]
CIRCLE_DY[:] = [-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3]


cdef inline bint _has_arc(uint32_t mask, int arc) nogil:
    cdef uint32_t run = mask | (mask << 16)
    cdef int k
    for k in range(arc - 1):
        run &= run >> 1
    return run != 0


def fast_score_map(const uint8_t[:, ::1] img, int threshold, int margin, int arc=9):
    """Segment-test corner response for every pixel at least ``margin`` from the border."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    out_arr = np.zeros((h, w), dtype=np.int32)
    cdef int32_t[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef int k, c, v, hi, lo, s_bright, s_dark
    cdef uint32_t bright, dark
    if margin < 3:
        margin = 3
    with nogil:
        for y in range(margin, h - margin):
            for x in range(margin, w - margin):
                c = img[y, x]
                hi = c + threshold
                lo = c - threshold
                bright = 0
                dark = 0
                s_bright = 0
                s_dark = 0
                for k in range(16):
                    v = img[y + CIRCLE_DY[k], x + CIRCLE_DX[k]]
                    if v > hi:
                        bright |= (<uint32_t>1) << k
                        s_bright += v - hi
                    elif v < lo:
                        dark |= (<uint32_t>1) << k
                        s_dark += lo - v
                if _has_arc(bright, arc):
                    out[y, x] = s_bright
                elif _has_arc(dark, arc):
                    out[y, x] = s_dark
    return out_arr


def hamming_matrix(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b):
    """All-pairs popcount distance between packed binary descriptors."""
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], words = a.shape[1]
    if b.shape[1] != words:
        raise ValueError("descriptor widths differ")
    out_arr = np.empty((na, nb), dtype=np.int32)
    cdef int32_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef int d
    with nogil:
        for i in range(na):
            for j in range(nb):
                d = 0
                for k in range(words):
                    d += __builtin_popcountll(a[i, k] ^ b[j, k])
                out[i, j] = d
    return out_arr


def adc_scores(
    const uint8_t[:, ::1] codes,
    const int32_t[::1] owners,
    const int64_t[::1] cell_start,
    const double[:, :, ::1] tables,
    const int32_t[:, ::1] probes,
    Py_ssize_t n_images,
):
    """Accumulate 1 / (1 + asymmetric distance) per owning image over probed cells."""
    cdef Py_ssize_t nq = tables.shape[0], m = tables.shape[1], nprobe = probes.shape[1]
    scores_arr = np.zeros(n_images, dtype=np.float64)
    cdef double[::1] scores = scores_arr
    cdef Py_ssize_t q, r, p, j, start, stop
    cdef int32_t cell
    cdef double d
    with nogil:
        for q in range(nq):
            for r in range(nprobe):
                cell = probes[q, r]
                start = cell_start[cell]
                stop = cell_start[cell + 1]
                for p in range(start, stop):
                    d = 0.0
                    for j in range(m):
                        d += tables[q, j, codes[p, j]]
                    scores[owners[p]] += 1.0 / (1.0 + d)
    return scores_arr
