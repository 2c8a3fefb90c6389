# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rank-statistic kernels. Mirrors ``_auc_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport NAN

cnp.import_array()

ctypedef cnp.int64_t i64


cdef double _auc_pass(const i64[:] order, const i64[:] groups, const unsigned char[:, :] labels,
                      Py_ssize_t c, const i64[:] weights) noexcept nogil:
    cdef Py_ssize_t j, i, n = order.shape[0]
    cdef i64 w, g, cur = -1
    cdef i64 pos_g = 0, neg_g = 0, neg_below = 0, npos = 0, nneg = 0, u2 = 0
    for j in range(n):
        i = order[j]
        w = weights[i]
        if w == 0:
            continue
        g = groups[j]
        if g != cur:
            u2 += pos_g * (2 * neg_below + neg_g)
            neg_below += neg_g
            pos_g = 0
            neg_g = 0
            cur = g
        if labels[i, c]:
            pos_g += w
            npos += w
        else:
            neg_g += w
            nneg += w
    u2 += pos_g * (2 * neg_below + neg_g)
    if npos == 0 or nneg == 0:
        return NAN
    return <double>u2 / (2.0 * <double>npos * <double>nneg)


def auc_weighted(i64[:] order, i64[:] groups, unsigned char[:, :] labels, Py_ssize_t c, i64[:] weights):
    return _auc_pass(order, groups, labels, c, weights)


def bootstrap_auc(i64[:, :] order, i64[:, :] groups, unsigned char[:, :] labels, i64[:, :] resample_idx):
    cdef Py_ssize_t b, i, c
    cdef Py_ssize_t nb = resample_idx.shape[0], n = resample_idx.shape[1], nc = order.shape[0]
    out_arr = np.empty((nb, nc), dtype=np.float64)
    cdef double[:, :] out = out_arr
    counts_arr = np.zeros(labels.shape[0], dtype=np.int64)
    cdef i64[:] counts = counts_arr
    with nogil:
        for b in range(nb):
            counts[:] = 0
            for i in range(n):
                counts[resample_idx[b, i]] += 1
            for c in range(nc):
                out[b, c] = _auc_pass(order[c], groups[c], labels, c, counts)
    return out_arr
