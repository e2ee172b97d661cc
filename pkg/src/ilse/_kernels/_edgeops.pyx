# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled edge aggregation for batched message passing.

Hot inner loop of the graph encoders: for every node, sum (optionally
weighted) neighbor feature rows across a batch. Segment sums run in ascending
edge order, identical to the numpy fallback, so both backends are bit-equal.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def edge_gather_sum(
    double[:, :, ::1] h,
    long long[::1] indptr,
    long long[::1] indices,
    weights,
    double[:, :, ::1] out,
):
    """out[b, v, :] = sum_e weights[e] * h[b, indices[e], :] over node v's edges."""
    cdef Py_ssize_t B = h.shape[0]
    cdef Py_ssize_t N = h.shape[1]
    cdef Py_ssize_t W = h.shape[2]
    cdef Py_ssize_t b, v, e, j, u
    cdef double we

    if weights is None:
        _gather_sum(h, indptr, indices, out)
    else:
        _gather_sum_weighted(h, indptr, indices, weights, out)
    return np.asarray(out)


cdef void _gather_sum(
    double[:, :, ::1] h,
    long long[::1] indptr,
    long long[::1] indices,
    double[:, :, ::1] out,
) noexcept nogil:
    cdef Py_ssize_t B = h.shape[0]
    cdef Py_ssize_t N = h.shape[1]
    cdef Py_ssize_t W = h.shape[2]
    cdef Py_ssize_t b, v, e, j, u
    for b in range(B):
        for v in range(N):
            for j in range(W):
                out[b, v, j] = 0.0
            for e in range(indptr[v], indptr[v + 1]):
                u = indices[e]
                for j in range(W):
                    out[b, v, j] += h[b, u, j]


cdef void _gather_sum_weighted(
    double[:, :, ::1] h,
    long long[::1] indptr,
    long long[::1] indices,
    double[::1] weights,
    double[:, :, ::1] out,
) noexcept nogil:
    cdef Py_ssize_t B = h.shape[0]
    cdef Py_ssize_t N = h.shape[1]
    cdef Py_ssize_t W = h.shape[2]
    cdef Py_ssize_t b, v, e, j, u
    cdef double we
    for b in range(B):
        for v in range(N):
            for j in range(W):
                out[b, v, j] = 0.0
            for e in range(indptr[v], indptr[v + 1]):
                u = indices[e]
                we = weights[e]
                for j in range(W):
                    out[b, v, j] += we * h[b, u, j]
