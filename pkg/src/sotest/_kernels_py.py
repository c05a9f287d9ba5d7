"""Pure-Python versions of the hot kernels; used when the compiled module is absent."""
from __future__ import annotations

import math
from typing import Mapping

BACKEND = "python"


def as_vector(accuracies):
    if isinstance(accuracies, list):
        return accuracies
    if isinstance(accuracies, Mapping):
        size = max(accuracies, default=-1) + 1
        vec = [math.nan] * size
        for k, v in accuracies.items():
            vec[k] = float(v)
        return vec
    return [float(x) for x in accuracies]


def partition_means(parts, acc):
    get = acc.__getitem__
    return [sum(map(get, p)) / len(p) for p in parts if len(p)]


def mean_spread(parts, acc):
    means = partition_means(parts, acc)
    if len(means) < 2:
        return 0.0
    return max(means) - min(means)


def homogeneity_fitness(parts, acc):
    means = partition_means(parts, acc)
    k = len(means)
    if k < 2:
        return 1.0
    mu = sum(means) / k
    var = sum((m - mu) * (m - mu) for m in means) / k
    return 1.0 / (1.0 + math.sqrt(var))


def sample_row(row, u):
    acc = 0.0
    last = 0
    for i, p in enumerate(row):
        if p > 0.0:
            last = i
        acc += p
        if u < acc:
            return i
    return last
