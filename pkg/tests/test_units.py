from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from g2pfree.errors import EmptyReference, ZeroCount
from g2pfree.units import corpus_uer, dedup, durations, levenshtein, rle_encode, rle_expand, uer

from oracles import all_sequences, edit_graph_distances, levenshtein_full_table, rle_loop

seqs = st.lists(st.integers(0, 20), max_size=60)


@pytest.mark.parametrize(
    "seq, runs",
    [([5, 5, 5, 2, 2, 9], [(5, 3), (2, 2), (9, 1)]), ([7], [(7, 1)]), ([], [])],
)
def test_rle_encode_examples(seq, runs):
    assert rle_encode(seq) == runs


def test_rle_expand_examples():
    assert rle_expand([(5, 3), (2, 2)]) == [5, 5, 5, 2, 2]
    assert rle_expand([]) == []
    with pytest.raises(ZeroCount):
        rle_expand([(4, 0)])
    with pytest.raises(ValueError):
        rle_expand([(4, 1), (4, 2)])


def test_dedup_examples():
    assert dedup([5, 5, 5, 2, 2, 9]) == [5, 2, 9]
    assert dedup([1, 2, 1, 2]) == [1, 2, 1, 2]
    assert dedup([]) == []
    assert durations([5, 5, 5, 2, 2, 9]) == [3, 2, 1]


@given(seqs)
def test_rle_laws(s):
    runs = rle_encode(s)
    assert runs == rle_loop(s)
    assert rle_expand(runs) == s
    assert all(c >= 1 for _, c in runs)
    assert all(a[0] != b[0] for a, b in zip(runs, runs[1:]))
    d = dedup(s)
    assert d == [u for u, _ in runs]
    assert dedup(d) == d
    assert len(d) <= len(s)
    assert sum(durations(s)) == len(s)


@given(st.lists(st.integers(0, 9), max_size=20), st.lists(st.integers(1, 5), min_size=20, max_size=20))
def test_expand_then_encode_recovers_valid_runs(units, counts):
    runs = list(zip(dedup(units), counts))
    assert rle_encode(rle_expand(runs)) == runs


@pytest.mark.parametrize("a, b, d", [([1, 2, 3], [1, 2, 3], 0), ([1, 2, 3], [1, 3], 1), ([], [4, 5], 2), ([4, 5], [], 2)])
def test_levenshtein_examples(a, b, d):
    assert levenshtein(a, b) == d


def test_levenshtein_matches_edit_graph_search_small():
    seqs = all_sequences(3, 4)
    dist = edit_graph_distances(seqs, 3, 4)
    for i, a in enumerate(seqs):
        for j, b in enumerate(seqs):
            assert levenshtein(a, b) == dist[i, j]


@given(seqs, seqs)
def test_levenshtein_matches_full_table(a, b):
    d = levenshtein(a, b)
    assert d == levenshtein_full_table(a, b)
    assert d == levenshtein(b, a)
    assert (d == 0) == (a == b)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))


@given(st.lists(st.integers(0, 3), max_size=15), st.lists(st.integers(0, 3), max_size=15), st.lists(st.integers(0, 3), max_size=15))
def test_triangle_inequality(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_levenshtein_long_sequences():
    gen = np.random.default_rng(0)
    a = gen.integers(0, 5, 3000)
    b = np.concatenate([a[:1000], a[1001:]])
    assert levenshtein(a, b) == 1
    assert levenshtein(a, a[::-1].copy()) == levenshtein(a[::-1].copy(), a)


def test_uer_examples():
    assert uer([1, 2, 3], [1, 2, 3]) == 0.0
    assert uer([1, 2, 3], [1, 3]) == 50.0
    assert uer([1, 2, 3, 4, 5], [1]) == 400.0
    with pytest.raises(EmptyReference):
        uer([1], [])


@given(seqs.filter(bool))
def test_uer_of_dedup_with_itself_is_zero(s):
    assert uer(dedup(s), dedup(s)) == 0.0


def test_corpus_uer_is_micro_average():
    assert corpus_uer([([1, 2, 3], [1, 3]), ([4, 5, 6], [4, 5, 6])]) == 20.0
    with pytest.raises(EmptyReference):
        corpus_uer([])
