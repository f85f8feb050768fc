from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toolmatch.capability_matrix import DimensionSet, PerformanceMatrix
from toolmatch.errors import RankingMismatch, UnknownTool
from toolmatch.selector import PreferenceWeights, Ranking, SuitabilityScores
from toolmatch.updater import (
    AdaptiveUpdater,
    CandidateSet,
    DirectionCoefficient,
    UpdateConfig,
    apply_update,
    direction,
    read_trace,
    select_candidates,
    theory_ranking,
)

import oracles


def test_default_config_values():
    cfg = UpdateConfig()
    assert (cfg.m, cfg.n, cfg.eta, cfg.renormalize) == (2, 1, 0.13, "lazy")


@pytest.mark.parametrize("kw", [{"m": 0}, {"n": -1}, {"m": 1, "n": 0}, {"eta": 0.0}, {"renormalize": "soon"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        UpdateConfig(**kw)


def test_candidates_top_m_plus_random():
    s = SuitabilityScores(("t1", "t2", "t3", "t4"), [0.9, 0.8, 0.2, 0.1])
    c = select_candidates(s, UpdateConfig(), np.random.default_rng(0))
    assert c.exploit == ("t1", "t2")
    assert len(c.explore) == 1 and c.explore[0] in ("t3", "t4")


def test_candidates_clamped_when_few_tools():
    s = SuitabilityScores(("a", "b"), [0.3, 0.6])
    c = select_candidates(s, UpdateConfig(), np.random.default_rng(0))
    assert c.exploit == ("b", "a") and c.explore == ()


def test_candidates_deterministic():
    s = SuitabilityScores(tuple("abcdefgh"), np.linspace(1, 0, 8))
    a = select_candidates(s, UpdateConfig(m=2, n=3), np.random.default_rng(42))
    b = select_candidates(s, UpdateConfig(m=2, n=3), np.random.default_rng(42))
    assert a == b


def test_exploration_covers_every_remaining_tool():
    s = SuitabilityScores(tuple("abcd"), [0.9, 0.8, 0.2, 0.1])
    rng = np.random.default_rng(7)
    seen = {select_candidates(s, UpdateConfig(), rng).explore[0] for _ in range(200)}
    assert seen == {"c", "d"}


def test_theory_ranking_orders_candidates_by_score():
    s = SuitabilityScores(tuple("abcd"), [0.1, 0.9, 0.5, 0.7])
    t = theory_ranking(s, CandidateSet(("b", "d"), ("a",)))
    assert t.ordered == ("b", "d", "a")


def test_direction_examples():
    d = direction(Ranking(tuple("ABC")), Ranking(("B", "A", "C")))
    assert d["A"] == pytest.approx(-1 / 3, abs=1e-15)
    assert d["B"] == pytest.approx(1 / 3, abs=1e-15)
    assert d["C"] == 0.0
    d2 = direction(Ranking(("A", "B")), Ranking(("B", "A")))
    assert (d2["A"], d2["B"]) == (-0.5, 0.5)
    same = direction(Ranking(tuple("ABC")), Ranking(tuple("ABC")))
    assert all(v == 0 for v in same.per_tool.values())


def test_direction_rejects_different_sets():
    with pytest.raises(RankingMismatch):
        direction(Ranking(("A", "B")), Ranking(("A", "C")))


@given(st.integers(2, 8), st.randoms(use_true_random=False))
@settings(max_examples=200, deadline=None)
def test_direction_matches_oracle_and_sums_to_zero(c, rnd):
    names = [f"t{i}" for i in range(c)]
    theory, actual = names[:], names[:]
    rnd.shuffle(theory)
    rnd.shuffle(actual)
    d = direction(Ranking(tuple(theory)), Ranking(tuple(actual)))
    expected = oracles.rank_deltas(theory, actual)
    assert d.per_tool == pytest.approx(expected, abs=1e-15)
    assert abs(d.total()) <= 1e-12


def _matrix():
    dims = DimensionSet.custom(2)
    return PerformanceMatrix(dims, ("A", "B", "C"), np.array([[0.9, 0.6, 0.3], [0.2, 0.5, 0.8]]))


def test_update_only_moves_weighted_dimension():
    m = _matrix()
    w = PreferenceWeights(m.dims, [1.0, 0.0])
    out = apply_update(m, w, DirectionCoefficient({"B": 1 / 3}), UpdateConfig())
    assert out.column("B")[0] == pytest.approx(0.6 + 0.13 / 3, abs=1e-15)
    assert out.column("B")[1] == 0.5
    assert out.column("A").tolist() == [0.9, 0.2]


def test_zero_delta_is_identity():
    m = _matrix()
    w = PreferenceWeights.uniform(m.dims)
    out = apply_update(m, w, DirectionCoefficient({"A": 0.0, "B": 0.0}), UpdateConfig())
    assert out is m


def test_update_clamps_at_zero():
    m = _matrix()
    w = PreferenceWeights(m.dims, [0.0, 1.0])
    out = apply_update(m, w, DirectionCoefficient({"A": -2.0}), UpdateConfig(eta=0.5))
    assert out.column("A").tolist() == [0.9, 0.0]


def test_update_unknown_tool():
    m = _matrix()
    with pytest.raises(UnknownTool):
        apply_update(m, PreferenceWeights.uniform(m.dims), DirectionCoefficient({"Z": 0.5}), UpdateConfig())


def test_eager_renormalizes():
    m = _matrix()
    w = PreferenceWeights(m.dims, [1.0, 0.0])
    out = apply_update(m, w, DirectionCoefficient({"A": 1.0}), UpdateConfig(renormalize="eager"))
    assert out.scores.max(axis=1).tolist() == [1.0, 1.0]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_update_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    d, l = int(rng.integers(1, 8)), int(rng.integers(2, 10))
    dims = DimensionSet.custom(d)
    names = tuple(f"t{j}" for j in range(l))
    m = PerformanceMatrix(dims, names, rng.uniform(0, 1, (d, l)))
    w = PreferenceWeights.from_raw(dims, rng.dirichlet(np.ones(d)))
    c = int(rng.integers(2, l + 1))
    chosen = list(rng.choice(names, size=c, replace=False))
    actual = list(rng.permutation(chosen))
    delta = direction(Ranking(tuple(chosen)), Ranking(tuple(actual)))
    eta = float(rng.uniform(0.01, 0.5))
    out = apply_update(m, w, delta, UpdateConfig(eta=eta))
    for j, t in enumerate(names):
        col = m.scores[:, j].tolist()
        expected = oracles.updated_column(col, w.w.tolist(), eta, delta[t]) if t in delta.per_tool else col
        assert np.max(np.abs(out.scores[:, j] - expected)) <= 1e-12


def test_adaptive_round_and_trace(tmp_path):
    m = _matrix()
    up = AdaptiveUpdater(m, UpdateConfig(m=2, n=1), np.random.default_rng(0))
    w = PreferenceWeights(m.dims, [1.0, 0.0])
    # the observed order always reverses the prediction
    rec = up.round(w, lambda c: Ranking(tuple(reversed(theory_ranking(up.select(w)[0], c).ordered))), "C")
    assert rec.selected_tool == "A" and rec.error_flag is True
    assert rec.delta["A"] < 0 < rec.delta["C"]
    assert up.step == 1 and not np.array_equal(up.matrix.scores, m.scores)
    path = tmp_path / "trace.jsonl"
    up.write_trace(path)
    assert read_trace(path) == [rec]


def test_every_single_swap_moves_by_one_step():
    names = ("A", "B", "C")
    dims = DimensionSet.custom(2)
    m = PerformanceMatrix(dims, names, np.full((2, 3), 0.5))
    w = PreferenceWeights(dims, [0.25, 0.75])
    cfg = UpdateConfig()
    for i, j in itertools.combinations(range(3), 2):
        actual = list(names)
        actual[i], actual[j] = actual[j], actual[i]
        if j - i != 1:
            continue
        out = apply_update(m, w, direction(Ranking(names), Ranking(tuple(actual))), cfg)
        moved = out.scores - m.scores
        step = w.w * cfg.eta / 3
        assert np.allclose(moved[:, i], -step, rtol=0, atol=1e-12)
        assert np.allclose(moved[:, j], step, rtol=0, atol=1e-12)
