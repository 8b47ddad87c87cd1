# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
from libc.math cimport exp, log, INFINITY


def grid_max_batch(const double[:, ::1] A, const double[:, ::1] B,
                   a_off, Py_ssize_t b_off, Py_ssize_t stride, Py_ssize_t n_s,
                   w, double ca, double cb):
    cdef Py_ssize_t[::1] offs = np.ascontiguousarray(a_off, dtype=np.intp)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t R = A.shape[0], J = offs.shape[0]
    out_arr = np.empty(R, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t r, j, l, ia, ib
    cdef double best, row, v, wj
    with nogil:
        for r in range(R):
            best = -INFINITY
            for j in range(J):
                ia = offs[j]
                ib = b_off
                row = -INFINITY
                for l in range(n_s):
                    v = ca * A[r, ia] + cb * B[r, ib]
                    if v > row:
                        row = v
                    ia = ia + stride
                    ib = ib + stride
                wj = wv[j]
                if wj * row > best:
                    best = wj * row
            out[r] = best
    return out_arr


def pickands_stats(const double[:, ::1] B, powers, shift, double scale, strides):
    cdef const double[::1] P = np.ascontiguousarray(powers, dtype=np.float64)
    cdef const long long[::1] K = np.ascontiguousarray(shift, dtype=np.int64)
    cdef Py_ssize_t[::1] S = np.ascontiguousarray(strides, dtype=np.intp)
    cdef Py_ssize_t R = B.shape[0], N = B.shape[1], M = S.shape[0]
    max_arr = np.empty((R, M), dtype=np.float64)
    lse_arr = np.empty(R, dtype=np.float64)
    work_arr = np.empty(N, dtype=np.float64)
    cdef double[:, ::1] mx = max_arr
    cdef double[::1] lse = lse_arr
    cdef double[::1] work = work_arr
    cdef Py_ssize_t r, i, m, st, d
    cdef long long k
    cdef double top, acc, v, pk
    with nogil:
        for r in range(R):
            k = K[r]
            if k >= 0:
                pk = P[k]
            top = -INFINITY
            for i in range(N):
                if k >= 0:
                    d = i - k
                    if d < 0:
                        d = -d
                    v = scale * B[r, i] + (pk - P[d])
                else:
                    v = scale * B[r, i] - P[i]
                work[i] = v
                if v > top:
                    top = v
            acc = 0.0
            for i in range(N):
                acc = acc + exp(work[i] - top)
            lse[r] = top + log(acc)
            for m in range(M):
                st = S[m]
                v = -INFINITY
                i = 0
                while i < N:
                    if work[i] > v:
                        v = work[i]
                    i = i + st
                mx[r, m] = v
    return max_arr, lse_arr
