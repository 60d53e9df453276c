# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot simulation kernels.

Must stay arithmetically identical to sagdp._kernels_py; the parity test
suite compares both backends on random inputs.
"""

import numpy as np


def assign_slots(long long[::1] request, long long[::1] capacity, long long base):
    cdef Py_ssize_t n = request.shape[0]
    cdef Py_ssize_t m = capacity.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] assigned = out
    cdef Py_ssize_t k
    cdef long long q
    for k in range(n):
        q = request[k] - base
        if q < 0:
            q = 0
        while q < m and capacity[q] == 0:
            q += 1
        if q >= m:
            assigned[k] = -1
        else:
            capacity[q] -= 1
            assigned[k] = q + base
    return out


def count_held(long long[::1] start, long long[::1] end, long long horizon):
    cdef Py_ssize_t n = start.shape[0]
    diff_arr = np.zeros(horizon + 1, dtype=np.int64)
    cdef long long[::1] diff = diff_arr
    cdef Py_ssize_t k
    cdef long long lo, hi
    for k in range(n):
        lo = start[k]
        hi = end[k]
        if lo < 0:
            lo = 0
        if hi > horizon:
            hi = horizon
        if hi > lo:
            diff[lo] += 1
            diff[hi] -= 1
    out = np.empty(horizon, dtype=np.int64)
    cdef long long[::1] acc = out
    cdef long long running = 0
    for k in range(horizon):
        running += diff[k]
        acc[k] = running
    return out


def fold_queue(long long initial_nh, long long[::1] due, long long[::1] rate):
    cdef Py_ssize_t m = due.shape[0]
    act_arr = np.empty(m, dtype=np.int64)
    nh_arr = np.empty(m, dtype=np.int64)
    cdef long long[::1] act = act_arr
    cdef long long[::1] nh = nh_arr
    cdef long long stack = initial_nh
    cdef long long waiting, landed
    cdef Py_ssize_t q
    for q in range(m):
        waiting = stack + due[q]
        landed = waiting if waiting < rate[q] else rate[q]
        act[q] = landed
        stack = waiting - landed
        nh[q] = stack
    return act_arr, nh_arr, nh_arr.copy()


def count_by_quarter(long long[::1] values, long long base, long long m):
    out = np.zeros(m, dtype=np.int64)
    cdef long long[::1] counts = out
    cdef Py_ssize_t k
    cdef long long shifted
    for k in range(values.shape[0]):
        shifted = values[k] - base
        if 0 <= shifted < m:
            counts[shifted] += 1
    return out


def enroute_matrix(long long[::1] dep, long long[::1] eta,
                   long long t, long long n_look, long long last_q):
    out = np.zeros((n_look, n_look), dtype=np.int64)
    cdef long long[:, ::1] mat = out
    cdef long long hi = t + n_look
    if hi > last_q:
        hi = last_q
    cdef Py_ssize_t k
    cdef long long i, j, imin
    for k in range(eta.shape[0]):
        j = eta[k] - t
        if j < 1 or eta[k] > hi:
            continue
        imin = dep[k] - t
        if imin < 1:
            imin = 1
        for i in range(imin, j + 1):
            mat[i - 1, j - 1] += 1
    return out
