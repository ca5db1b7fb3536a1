"""Unit-sequence algebra: run-length coding, repeat removal, edit distance, UER.

Unit sequences are plain lists of non-negative ints. Run-length encodings are
lists of ``(unit, count)`` pairs where counts are frame durations.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import EmptyReference, ZeroCount


def _as_array(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    return arr


def rle_encode(seq: Sequence[int]) -> list[tuple[int, int]]:
    """``[5, 5, 5, 2, 2, 9] -> [(5, 3), (2, 2), (9, 1)]``."""
    arr = _as_array(seq)
    if arr.size == 0:
        return []
    starts = np.flatnonzero(np.concatenate(([True], arr[1:] != arr[:-1])))
    counts = np.diff(np.append(starts, arr.size))
    return [(int(u), int(c)) for u, c in zip(arr[starts], counts)]


def rle_expand(runs: Iterable[tuple[int, int]]) -> list[int]:
    runs = list(runs)
    out: list[int] = []
    for i, (unit, count) in enumerate(runs):
        if count < 1:
            raise ZeroCount(f"run {i} ({unit}, {count}) has a non-positive count")
        if i and runs[i - 1][0] == unit:
            raise ValueError(f"runs {i - 1} and {i} repeat unit {unit}")
        out.extend([int(unit)] * int(count))
    return out


def dedup(seq: Sequence[int]) -> list[int]:
    """Drop adjacent repeats: ``[5, 5, 5, 2, 2, 9] -> [5, 2, 9]``."""
    arr = _as_array(seq)
    if arr.size == 0:
        return []
    keep = np.concatenate(([True], arr[1:] != arr[:-1]))
    return arr[keep].tolist()


def durations(seq: Sequence[int]) -> list[int]:
    """Run lengths of ``seq``, aligned with ``dedup(seq)``."""
    return [c for _, c in rle_encode(seq)]


def levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    """Unit-cost edit distance (insert, delete, substitute).

    Uses a rolling row over the shorter sequence, so memory is
    O(min(len(a), len(b))).
    """
    return _kernels.levenshtein(_as_array(a), _as_array(b))


def uer(hyp: Sequence[int], ref: Sequence[int]) -> float:
    """Unit error rate in percent. Can exceed 100 when hyp is much longer."""
    if len(ref) == 0:
        raise EmptyReference("reference unit sequence is empty")
    return 100.0 * levenshtein(hyp, ref) / len(ref)


def corpus_uer(pairs: Iterable[tuple[Sequence[int], Sequence[int]]]) -> float:
    """Micro-averaged UER: total edits over total reference length."""
    edits = 0
    total = 0
    for hyp, ref in pairs:
        if len(ref) == 0:
            raise EmptyReference("reference unit sequence is empty")
        edits += levenshtein(hyp, ref)
        total += len(ref)
    if total == 0:
        raise EmptyReference("no reference units")
    return 100.0 * edits / total
