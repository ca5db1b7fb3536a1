from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def nearest_centroid(data, centroids):
    n, dim = data.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for i in range(n):
        best_d = np.inf
        best_c = 0
        for c in range(k):
            acc = 0.0
            for j in range(dim):
                diff = np.float64(data[i, j]) - np.float64(centroids[c, j])
                acc += diff * diff
            if acc < best_d:
                best_d = acc
                best_c = c
        labels[i] = best_c
        best[i] = best_d
    return labels, best


@njit(cache=True)
def cluster_sums(data, labels, k):
    n, dim = data.shape
    sums = np.zeros((k, dim), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for j in range(dim):
            sums[c, j] += np.float64(data[i, j])
    return sums, counts


@njit(cache=True)
def sequential_sum(values):
    acc = 0.0
    for i in range(values.size):
        acc += values[i]
    return acc


@njit(cache=True)
def _levenshtein(a, b):
    m = b.size
    prev = np.arange(m + 1).astype(np.int64)
    row = np.empty(m + 1, dtype=np.int64)
    for i in range(a.size):
        row[0] = i + 1
        ai = a[i]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if b[j - 1] == ai else 1)
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            best = sub if sub < dele else dele
            row[j] = best if best < ins else ins
        prev, row = row, prev
    return prev[m]


def levenshtein(a: np.ndarray, b: np.ndarray) -> int:
    # keep the rolling row on the shorter side
    if a.size < b.size:
        a, b = b, a
    return int(_levenshtein(a, b))
