# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trellis kernels (forward, backward, Viterbi) in log space.

Transition matrices arrive dense; each call builds a compressed predecessor
list from the finite entries so the inner loops only visit real arcs.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _NEG_INF():
    return -INFINITY


cdef tuple _predecessors(const double[:, ::1] log_a):
    cdef Py_ssize_t n = log_a.shape[0]
    cdef Py_ssize_t i, j, k = 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ptr = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        for i in range(n):
            if log_a[i, j] > -INFINITY:
                k += 1
        ptr[j + 1] = k
    cdef cnp.ndarray[cnp.int64_t, ndim=1] src = np.empty(k, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wt = np.empty(k, dtype=np.float64)
    k = 0
    for j in range(n):
        for i in range(n):
            if log_a[i, j] > -INFINITY:
                src[k] = i
                wt[k] = log_a[i, j]
                k += 1
    return ptr, src, wt


cdef tuple _successors(const double[:, ::1] log_a):
    cdef Py_ssize_t n = log_a.shape[0]
    cdef Py_ssize_t i, j, k = 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if log_a[i, j] > -INFINITY:
                k += 1
        ptr[i + 1] = k
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dst = np.empty(k, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wt = np.empty(k, dtype=np.float64)
    k = 0
    for i in range(n):
        for j in range(n):
            if log_a[i, j] > -INFINITY:
                dst[k] = j
                wt[k] = log_a[i, j]
                k += 1
    return ptr, dst, wt


def forward(const double[:, ::1] log_b, const double[::1] log_pi,
            const double[:, ::1] log_a, const double[::1] log_final):
    cdef Py_ssize_t T = log_b.shape[0]
    cdef Py_ssize_t N = log_b.shape[1]
    cdef Py_ssize_t t, j, k
    cdef double m, s, v
    ptr_o, src_o, wt_o = _predecessors(log_a)
    cdef cnp.int64_t[::1] ptr = ptr_o
    cdef cnp.int64_t[::1] src = src_o
    cdef double[::1] wt = wt_o
    alpha_o = np.empty((T, N), dtype=np.float64)
    cdef double[:, ::1] alpha = alpha_o
    for j in range(N):
        alpha[0, j] = log_pi[j] + log_b[0, j]
    for t in range(1, T):
        for j in range(N):
            if log_b[t, j] == -INFINITY:
                alpha[t, j] = -INFINITY
                continue
            m = -INFINITY
            for k in range(ptr[j], ptr[j + 1]):
                v = alpha[t - 1, src[k]] + wt[k]
                if v > m:
                    m = v
            if m == -INFINITY:
                alpha[t, j] = -INFINITY
                continue
            s = 0.0
            for k in range(ptr[j], ptr[j + 1]):
                v = alpha[t - 1, src[k]] + wt[k]
                if v > -INFINITY:
                    s += exp(v - m)
            alpha[t, j] = m + log(s) + log_b[t, j]
    m = -INFINITY
    for j in range(N):
        v = alpha[T - 1, j] + log_final[j]
        if v > m:
            m = v
    if m == -INFINITY:
        return alpha_o, -INFINITY
    s = 0.0
    for j in range(N):
        v = alpha[T - 1, j] + log_final[j]
        if v > -INFINITY:
            s += exp(v - m)
    return alpha_o, m + log(s)


def backward(const double[:, ::1] log_b, const double[:, ::1] log_a,
             const double[::1] log_final):
    cdef Py_ssize_t T = log_b.shape[0]
    cdef Py_ssize_t N = log_b.shape[1]
    cdef Py_ssize_t t, i, k
    cdef double m, s, v
    ptr_o, dst_o, wt_o = _successors(log_a)
    cdef cnp.int64_t[::1] ptr = ptr_o
    cdef cnp.int64_t[::1] dst = dst_o
    cdef double[::1] wt = wt_o
    beta_o = np.empty((T, N), dtype=np.float64)
    cdef double[:, ::1] beta = beta_o
    for i in range(N):
        beta[T - 1, i] = log_final[i]
    for t in range(T - 2, -1, -1):
        for i in range(N):
            m = -INFINITY
            for k in range(ptr[i], ptr[i + 1]):
                v = wt[k] + log_b[t + 1, dst[k]] + beta[t + 1, dst[k]]
                if v > m:
                    m = v
            if m == -INFINITY:
                beta[t, i] = -INFINITY
                continue
            s = 0.0
            for k in range(ptr[i], ptr[i + 1]):
                v = wt[k] + log_b[t + 1, dst[k]] + beta[t + 1, dst[k]]
                if v > -INFINITY:
                    s += exp(v - m)
            beta[t, i] = m + log(s)
    return beta_o


def viterbi(const double[:, ::1] log_b, const double[::1] log_pi,
            const double[:, ::1] log_a, const double[::1] log_final):
    cdef Py_ssize_t T = log_b.shape[0]
    cdef Py_ssize_t N = log_b.shape[1]
    cdef Py_ssize_t t, j, k, best_i
    cdef double m, v
    ptr_o, src_o, wt_o = _predecessors(log_a)
    cdef cnp.int64_t[::1] ptr = ptr_o
    cdef cnp.int64_t[::1] src = src_o
    cdef double[::1] wt = wt_o
    delta_o = np.empty((T, N), dtype=np.float64)
    back_o = np.zeros((T, N), dtype=np.int64)
    cdef double[:, ::1] delta = delta_o
    cdef cnp.int64_t[:, ::1] back = back_o
    for j in range(N):
        delta[0, j] = log_pi[j] + log_b[0, j]
    for t in range(1, T):
        for j in range(N):
            m = -INFINITY
            best_i = 0
            # predecessors are stored in ascending source order, so strict
            # comparison keeps the lowest index on ties
            for k in range(ptr[j], ptr[j + 1]):
                v = delta[t - 1, src[k]] + wt[k]
                if v > m:
                    m = v
                    best_i = src[k]
            delta[t, j] = m + log_b[t, j]
            back[t, j] = best_i
    m = -INFINITY
    best_i = 0
    for j in range(N):
        v = delta[T - 1, j] + log_final[j]
        if v > m:
            m = v
            best_i = j
    path_o = np.empty(T, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_o
    if m == -INFINITY:
        return path_o, -INFINITY
    path[T - 1] = best_i
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_o, m
