"""Pure-numpy kernels.

Each kernel reproduces the summation order of its numba twin exactly, so
both backends return bit-identical results.
"""

from __future__ import annotations

import numpy as np

# frames per block in nearest_centroid; bounds the (block, k) scratch array
_BLOCK = 4096


def nearest_centroid(data: np.ndarray, centroids: np.ndarray):
    n, dim = data.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    c64 = centroids.astype(np.float64)
    for start in range(0, n, _BLOCK):
        x64 = data[start:start + _BLOCK].astype(np.float64)
        acc = np.zeros((x64.shape[0], k), dtype=np.float64)
        for j in range(dim):
            diff = x64[:, j, None] - c64[None, :, j]
            acc += diff * diff
        idx = np.argmin(acc, axis=1)
        labels[start:start + _BLOCK] = idx
        best[start:start + _BLOCK] = acc[np.arange(acc.shape[0]), idx]
    return labels, best


def cluster_sums(data: np.ndarray, labels: np.ndarray, k: int):
    sums = np.zeros((k, data.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, data.astype(np.float64))
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts


def sequential_sum(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    return float(np.cumsum(values, dtype=np.float64)[-1])


def levenshtein(a: np.ndarray, b: np.ndarray) -> int:
    if a.size < b.size:
        a, b = b, a
    m = b.size
    if m == 0:
        return int(a.size)
    offsets = np.arange(m + 1, dtype=np.int64)
    prev = offsets.copy()
    for i in range(a.size):
        cost = (b != a[i]).astype(np.int64)
        row = np.empty(m + 1, dtype=np.int64)
        row[0] = i + 1
        row[1:] = np.minimum(prev[1:] + 1, prev[:-1] + cost)
        # insertion chain: row[j] = min over t <= j of row[t] + (j - t)
        row = np.minimum.accumulate(row - offsets) + offsets
        prev = row
    return int(prev[m])
