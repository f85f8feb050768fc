from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toolmatch.capability_matrix import DimensionSet, PerformanceMatrix
from toolmatch.errors import DimensionMismatch, WeightSumViolation
from toolmatch.selector import PreferenceWeights, Ranking, SuitabilityScores, rank, score, select

import oracles


def test_weighted_identity_matrix(two_dims):
    m = PerformanceMatrix(two_dims, ("A", "B"), np.eye(2))
    s = score(PreferenceWeights(two_dims, [0.7, 0.3]), m)
    assert s.s.tolist() == [0.7, 0.3]


def test_one_hot_picks_normalized_row(small_matrix):
    norm = small_matrix.normalized().scores
    for i in range(3):
        s = score(PreferenceWeights.one_hot(small_matrix.dims, i), small_matrix)
        assert np.array_equal(s.s, norm[i])


def test_identical_columns_tie():
    dims = DimensionSet.custom(3)
    m = PerformanceMatrix(dims, ("a", "b", "c"), np.tile([[0.2], [0.5], [0.9]], (1, 3)))
    s = score(PreferenceWeights.uniform(dims), m)
    assert np.all(s.s == s.s[0])
    assert rank(s).ordered == ("a", "b", "c")


@pytest.mark.parametrize(
    "values, expected",
    [([0.7, 0.3], ("A", "B")), ([0.5, 0.5], ("A", "B")), ([0.1, 0.9, 0.4], ("B", "C", "A"))],
)
def test_rank_examples(values, expected):
    names = ("A", "B", "C")[: len(values)]
    assert rank(SuitabilityScores(names, values)).ordered == expected


def test_weights_validation(two_dims):
    with pytest.raises(WeightSumViolation):
        PreferenceWeights(two_dims, [0.6, 0.6])
    with pytest.raises(WeightSumViolation):
        PreferenceWeights(two_dims, [1.2, -0.2])
    with pytest.raises(DimensionMismatch):
        PreferenceWeights(two_dims, [1.0])
    # within tolerance: accepted and rescaled onto the simplex
    w = PreferenceWeights(two_dims, [0.5, 0.5 + 5e-7])
    assert w.w.sum() == pytest.approx(1.0, abs=1e-15)


def test_weights_from_mapping(two_dims):
    w = PreferenceWeights.from_mapping(two_dims, {"dim1": 1.0})
    assert w.w.tolist() == [0.0, 1.0]
    with pytest.raises(DimensionMismatch):
        PreferenceWeights.from_mapping(two_dims, {"dimX": 1.0})


def test_score_rejects_other_dimension_set(small_matrix, two_dims):
    with pytest.raises(DimensionMismatch):
        score(PreferenceWeights.uniform(two_dims), small_matrix)


def test_ranking_helpers():
    r = Ranking(("b", "a", "c"))
    assert r.top == "b" and r.rank("c") == 3 and r.rank_of == {"b": 1, "a": 2, "c": 3}
    with pytest.raises(ValueError):
        Ranking(("a", "a"))


@st.composite
def instances(draw):
    d = draw(st.integers(1, 10))
    l = draw(st.integers(1, 20))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    raw = rng.dirichlet(np.ones(d))
    scores = rng.uniform(0, 1, (d, l))
    return raw, scores


@given(instances())
@settings(max_examples=200, deadline=None)
def test_scores_match_oracle(inst):
    raw, scores = inst
    d, l = scores.shape
    dims = DimensionSet.custom(d)
    names = tuple(f"t{j}" for j in range(l))
    w = PreferenceWeights.from_raw(dims, raw)
    s, r = select(w, PerformanceMatrix(dims, names, scores))
    expected = oracles.suitability(w.w.tolist(), scores.tolist())
    assert np.max(np.abs(s.s - expected)) <= 1e-12
    assert list(r.ordered) == oracles.ranking(list(names), s.s.tolist())


@given(instances(), st.floats(0.01, 100.0))
@settings(max_examples=100, deadline=None)
def test_row_scaling_does_not_change_scores(inst, factor):
    raw, scores = inst
    d, l = scores.shape
    dims = DimensionSet.custom(d)
    names = tuple(f"t{j}" for j in range(l))
    w = PreferenceWeights.from_raw(dims, raw)
    a = score(w, PerformanceMatrix(dims, names, scores)).s
    b = score(w, PerformanceMatrix(dims, names, scores * factor)).s
    assert np.allclose(a, b, rtol=0, atol=1e-12)
