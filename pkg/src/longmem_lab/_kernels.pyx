# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Must stay bit-compatible with _kernels_py."""
import numpy as np


def ar_recursion(const double[::1] phi, const double[::1] eps, const double[::1] init):
    cdef Py_ssize_t p = phi.shape[0]
    cdef Py_ssize_t n = eps.shape[0]
    cdef Py_ssize_t t, i
    cdef double acc
    out = np.empty(p + n, dtype=np.float64)
    cdef double[::1] b = out
    for i in range(p):
        b[i] = init[i]
    for t in range(n):
        acc = 0.0
        for i in range(p):
            acc = acc + phi[i] * b[p + t - 1 - i]
        b[p + t] = acc + eps[t]
    return out[p:].copy()


def step_process(const double[::1] s, const double[::1] F, double sigma_n):
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t i = 0, j, k
    cdef double nd = <double>n
    cdef double r, l, sup = 0.0
    right = np.empty(n, dtype=np.float64)
    left = np.empty(n, dtype=np.float64)
    cdef double[::1] rv = right
    cdef double[::1] lv = left
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        for k in range(i, j + 1):
            r = (<double>(j + 1) - nd * F[k]) / sigma_n
            l = (<double>i - nd * F[k]) / sigma_n
            rv[k] = r
            lv[k] = l
            if r < 0:
                r = -r
            if l < 0:
                l = -l
            if r > sup:
                sup = r
            if l > sup:
                sup = l
        i = j + 1
    return right, left, sup


def merge_counts(const double[::1] s, const double[::1] x):
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t k, lt = 0, le = 0
    le_out = np.empty(m, dtype=np.int64)
    lt_out = np.empty(m, dtype=np.int64)
    cdef long long[::1] a = le_out
    cdef long long[::1] b = lt_out
    for k in range(m):
        while lt < n and s[lt] < x[k]:
            lt += 1
        if le < lt:
            le = lt
        while le < n and s[le] <= x[k]:
            le += 1
        a[k] = le
        b[k] = lt
    return le_out, lt_out


def two_sample_ks(const double[::1] x, const double[::1] y):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = y.shape[0]
    cdef Py_ssize_t i = 0, j = 0
    cdef double v, diff, d = 0.0
    cdef double nd = <double>n, md = <double>m
    while i < n and j < m:
        v = x[i] if x[i] < y[j] else y[j]
        while i < n and x[i] <= v:
            i += 1
        while j < m and y[j] <= v:
            j += 1
        diff = <double>i / nd - <double>j / md
        if diff < 0:
            diff = -diff
        if diff > d:
            d = diff
    return d
