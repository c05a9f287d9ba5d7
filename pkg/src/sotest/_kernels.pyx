# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (partition statistics, row sampling)."""
import numpy as np
from collections.abc import Mapping
from libc.math cimport sqrt, NAN

BACKEND = "cython"


def as_vector(accuracies):
    if isinstance(accuracies, np.ndarray) and accuracies.dtype == np.float64:
        return accuracies
    if isinstance(accuracies, Mapping):
        size = max(accuracies, default=-1) + 1
        vec = np.full(size, NAN, dtype=np.float64)
        for k, v in accuracies.items():
            vec[k] = v
        return vec
    return np.ascontiguousarray(accuracies, dtype=np.float64)


cdef inline double _part_sum(object part, const double[::1] acc):
    cdef double s = 0.0
    cdef Py_ssize_t a
    for a in part:
        s += acc[a]
    return s


def partition_means(parts, const double[::1] acc):
    cdef list out = []
    cdef Py_ssize_t n
    for p in parts:
        n = len(p)
        if n:
            out.append(_part_sum(p, acc) / n)
    return out


def mean_spread(parts, const double[::1] acc):
    cdef double lo = 1e300, hi = -1e300, m
    cdef Py_ssize_t n, k = 0
    for p in parts:
        n = len(p)
        if n:
            m = _part_sum(p, acc) / n
            if m < lo:
                lo = m
            if m > hi:
                hi = m
            k += 1
    if k < 2:
        return 0.0
    return hi - lo


def homogeneity_fitness(parts, const double[::1] acc):
    cdef double s1 = 0.0, s2 = 0.0, m, mu, var
    cdef Py_ssize_t n, k = 0
    cdef list means = []
    for p in parts:
        n = len(p)
        if n:
            m = _part_sum(p, acc) / n
            means.append(m)
            s1 += m
            k += 1
    if k < 2:
        return 1.0
    mu = s1 / k
    for m in means:
        s2 += (m - mu) * (m - mu)
    var = s2 / k
    return 1.0 / (1.0 + sqrt(var))


def sample_row(row, double u):
    cdef double acc = 0.0, p
    cdef Py_ssize_t i = 0, last = 0
    for p in row:
        if p > 0.0:
            last = i
        acc += p
        if u < acc:
            return i
        i += 1
    return last
