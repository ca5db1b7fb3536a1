from __future__ import annotations

import importlib.util
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from g2pfree._kernels import numba_backend, numpy_backend

needs_numba = pytest.mark.skipif(numba_backend is None, reason="numba backend disabled or unavailable")


def _brute_nearest(x, c):
    labels, best = [], []
    for row in x.astype(np.float64):
        d = [sum((row[j] - float(cj[j])) ** 2 for j in range(x.shape[1])) for cj in c]
        i = int(np.argmin(d))
        labels.append(i)
        best.append(d[i])
    return labels, best


def test_nearest_centroid_matches_brute_force():
    gen = np.random.default_rng(3)
    x = gen.normal(size=(40, 5)).astype(np.float32)
    c = gen.normal(size=(6, 5)).astype(np.float32)
    labels, best = _brute_nearest(x, c)
    for be in filter(None, (numpy_backend, numba_backend)):
        got_labels, got_best = be.nearest_centroid(x, c)
        assert got_labels.tolist() == labels
        np.testing.assert_allclose(got_best, best, rtol=1e-12)


def test_nearest_centroid_ties_go_to_lowest_index():
    c = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    x = np.zeros((1, 2), dtype=np.float32)
    for be in filter(None, (numpy_backend, numba_backend)):
        assert be.nearest_centroid(x, c)[0].tolist() == [0]


def test_numpy_blocks_agree_with_single_block(monkeypatch):
    gen = np.random.default_rng(1)
    x = gen.normal(size=(50, 3)).astype(np.float32)
    c = gen.normal(size=(4, 3)).astype(np.float32)
    whole = numpy_backend.nearest_centroid(x, c)
    monkeypatch.setattr(numpy_backend, "_BLOCK", 7)
    blocked = numpy_backend.nearest_centroid(x, c)
    assert whole[0].tolist() == blocked[0].tolist()
    assert whole[1].tobytes() == blocked[1].tobytes()


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.integers(1, 8), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_backends_bit_identical_on_kmeans_kernels(n, dim, k, seed):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, dim)).astype(np.float32)
    c = gen.normal(size=(k, dim)).astype(np.float32)
    la, da = numpy_backend.nearest_centroid(x, c)
    lb, db = numba_backend.nearest_centroid(x, c)
    assert la.tolist() == lb.tolist()
    assert da.tobytes() == db.tobytes()
    sa, ca = numpy_backend.cluster_sums(x, la, k)
    sb, cb = numba_backend.cluster_sums(x, la, k)
    assert sa.tobytes() == sb.tobytes()
    assert ca.tolist() == cb.tolist()
    assert numpy_backend.sequential_sum(da) == numba_backend.sequential_sum(da)


@needs_numba
@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), max_size=40), st.lists(st.integers(0, 4), max_size=40))
def test_backends_agree_on_levenshtein(a, b):
    a, b = np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)
    assert numpy_backend.levenshtein(a, b) == numba_backend.levenshtein(a, b)


def test_sequential_sum_is_left_to_right():
    values = np.array([1e16, 1.0, -1e16, 1.0])
    expected = 0.0
    for v in values:
        expected += v
    for be in filter(None, (numpy_backend, numba_backend)):
        assert be.sequential_sum(values) == expected
        assert be.sequential_sum(np.array([])) == 0.0


HAVE_NUMBA = importlib.util.find_spec("numba") is not None


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("0", "numba" if HAVE_NUMBA else "numpy")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, G2PFREE_NO_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from g2pfree import _kernels; print(_kernels.BACKEND_NAME)"],
        env=env, capture_output=True, text=True, check=True,
    ).stdout.strip()
    assert out == expected
