# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Grouped reductions over dense group ids (compiled)."""

import numpy as np
from libc.stdint cimport int64_t, uint8_t

ctypedef fused num_t:
    int64_t
    double


def group_count(const int64_t[::1] gid, Py_ssize_t ngroups, const uint8_t[::1] valid):
    cdef Py_ssize_t i, n = gid.shape[0]
    counts = np.zeros(ngroups, dtype=np.int64)
    cdef int64_t[::1] c = counts
    with nogil:
        for i in range(n):
            if valid[i]:
                c[gid[i]] += 1
    return counts


def group_sum(const int64_t[::1] gid, Py_ssize_t ngroups, const num_t[::1] values, const uint8_t[::1] valid):
    cdef Py_ssize_t i, n = gid.shape[0]
    if num_t is double:
        out = np.zeros(ngroups, dtype=np.float64)
    else:
        out = np.zeros(ngroups, dtype=np.int64)
    counts = np.zeros(ngroups, dtype=np.int64)
    cdef num_t[::1] o = out
    cdef int64_t[::1] c = counts
    with nogil:
        for i in range(n):
            if valid[i]:
                o[gid[i]] += values[i]
                c[gid[i]] += 1
    return out, counts


def group_min(const int64_t[::1] gid, Py_ssize_t ngroups, const num_t[::1] values, const uint8_t[::1] valid):
    cdef Py_ssize_t i, g, n = gid.shape[0]
    if num_t is double:
        out = np.zeros(ngroups, dtype=np.float64)
    else:
        out = np.zeros(ngroups, dtype=np.int64)
    counts = np.zeros(ngroups, dtype=np.int64)
    cdef num_t[::1] o = out
    cdef int64_t[::1] c = counts
    with nogil:
        for i in range(n):
            if valid[i]:
                g = gid[i]
                if c[g] == 0 or values[i] < o[g]:
                    o[g] = values[i]
                c[g] += 1
    return out, counts


def group_max(const int64_t[::1] gid, Py_ssize_t ngroups, const num_t[::1] values, const uint8_t[::1] valid):
    cdef Py_ssize_t i, g, n = gid.shape[0]
    if num_t is double:
        out = np.zeros(ngroups, dtype=np.float64)
    else:
        out = np.zeros(ngroups, dtype=np.int64)
    counts = np.zeros(ngroups, dtype=np.int64)
    cdef num_t[::1] o = out
    cdef int64_t[::1] c = counts
    with nogil:
        for i in range(n):
            if valid[i]:
                g = gid[i]
                if c[g] == 0 or values[i] > o[g]:
                    o[g] = values[i]
                c[g] += 1
    return out, counts
