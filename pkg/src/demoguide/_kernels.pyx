# cython: language_level=3
"""Compiled hot loops. Signatures mirror ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def gae(const double[::1] rewards, const double[::1] values, double last_value,
        const unsigned char[::1] dones, double gamma, double lam):
    cdef Py_ssize_t n = rewards.shape[0]
    cdef Py_ssize_t t
    cdef double next_value = last_value
    cdef double running = 0.0
    cdef double nonterminal, delta
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] adv = out
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return out


def discounted_returns(const double[::1] rewards, const unsigned char[::1] dones,
                       double last_value, double gamma):
    cdef Py_ssize_t n = rewards.shape[0]
    cdef Py_ssize_t t
    cdef double running = last_value
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ret = out
    for t in range(n - 1, -1, -1):
        running = rewards[t] + gamma * running * (1.0 - dones[t])
        ret[t] = running
    return out


def assign_nearest(const double[:, ::1] points, const double[:, ::1] centroids):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t k = centroids.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double best, acc, diff
    cdef Py_ssize_t best_j
    labels_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef double[::1] dist = dist_arr
    for i in range(n):
        best = 0.0
        best_j = -1
        for j in range(k):
            acc = 0.0
            for c in range(d):
                diff = points[i, c] - centroids[j, c]
                acc = acc + diff * diff
            # strict comparison keeps the lowest index on ties
            if best_j < 0 or acc < best:
                best = acc
                best_j = j
        labels[i] = best_j
        dist[i] = best
    return labels_arr, dist_arr


def centroid_sums(const double[:, ::1] points, const cnp.int64_t[::1] labels, Py_ssize_t k):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t i, c, lab
    sums_arr = np.zeros((k, d), dtype=np.float64)
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef double[:, ::1] sums = sums_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    for i in range(n):
        lab = labels[i]
        counts[lab] += 1
        for c in range(d):
            sums[lab, c] += points[i, c]
    return sums_arr, counts_arr
