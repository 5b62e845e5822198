# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Must stay numerically identical to ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.string cimport memcpy

cnp.import_array()


def average_ranks(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.intp_t, ndim=1] order = np.argsort(a, kind="mergesort")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i = 0, j, k
    cdef double r
    while i < n:
        j = i
        while j + 1 < n and a[order[j + 1]] == a[order[i]]:
            j += 1
        r = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            out[order[k]] = r
        i = j + 1
    return out


def signed_rank_counts(doubled_ranks):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] r = np.ascontiguousarray(doubled_ranks, dtype=np.int64)
    cdef Py_ssize_t n = r.shape[0], i, s, total = 0
    for i in range(n):
        total += r[i]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(total + 1, dtype=np.int64)
    cdef Py_ssize_t reach = 0
    counts[0] = 1
    for i in range(n):
        reach += r[i]
        for s in range(reach, r[i] - 1, -1):
            counts[s] += counts[s - r[i]]
    return counts


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double b1, double b2, double eps, double bc1, double bc2):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double c1 = 1.0 - b1, c2 = 1.0 - b2, mhat, vhat
    for i in range(n):
        m[i] = b1 * m[i] + c1 * g[i]
        v[i] = b2 * v[i] + c2 * g[i] * g[i]
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)


def gather_windows(series, target, Py_ssize_t lag, Py_ssize_t pred):
    cdef const double[:, ::1] x = np.ascontiguousarray(series, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(target, dtype=np.float64)
    cdef Py_ssize_t n_ch = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t count = n - lag - pred + 1
    if count < 1:
        return np.empty((0, n_ch * lag)), np.empty(0)
    feats = np.empty((count, n_ch * lag), dtype=np.float64)
    targs = np.empty(count, dtype=np.float64)
    cdef double[:, ::1] f = feats
    cdef double[::1] t = targs
    cdef Py_ssize_t w, c
    cdef size_t nbytes = lag * sizeof(double)
    for w in range(count):
        for c in range(n_ch):
            memcpy(&f[w, c * lag], &x[c, w], nbytes)
        t[w] = y[w + lag - 1 + pred]
    return feats, targs
