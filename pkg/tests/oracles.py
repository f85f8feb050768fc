"""Slow, loop-based reference implementations used as test oracles.

These share no code with the package; they restate each rule with plain
Python floats and lists.
"""

from __future__ import annotations

import math


def normalize_rows(rows: list[list[float]]) -> list[list[float]]:
    out = []
    for row in rows:
        top = max(row)
        out.append(list(row) if top == 0 else [x / top for x in row])
    return out


def suitability(w: list[float], rows: list[list[float]]) -> list[float]:
    """Per-tool weighted sum of normalized scores; rows are dimensions."""
    norm = normalize_rows(rows)
    n_tools = len(rows[0])
    scores = []
    for j in range(n_tools):
        total = 0.0
        for i in range(len(w)):
            total += w[i] * norm[i][j]
        scores.append(total)
    return scores


def ranking(names: list[str], scores: list[float]) -> list[str]:
    # selection sort: repeatedly take the first maximal remaining element
    remaining = list(range(len(names)))
    out = []
    while remaining:
        best = remaining[0]
        for i in remaining[1:]:
            if scores[i] > scores[best]:
                best = i
        out.append(names[best])
        remaining.remove(best)
    return out


def rank_deltas(theory: list[str], actual: list[str]) -> dict[str, float]:
    c = len(theory)
    return {t: ((theory.index(t) + 1) - (actual.index(t) + 1)) / c for t in theory}


def updated_column(column: list[float], w: list[float], eta: float, delta: float) -> list[float]:
    return [max(0.0, column[i] + w[i] * eta * delta) for i in range(len(column))]


def weighted_evaluation(weights: list[float], scores: list[float]) -> float:
    return sum(g * s for g, s in zip(weights, scores))


def log_softmax_at(logits: list[float], idx: int) -> float:
    top = max(logits)
    z = sum(math.exp(v - top) for v in logits)
    return logits[idx] - top - math.log(z)


def preference_loss(
    theta: list[float],
    ref: list[float],
    alpha: float,
    phis: list[list[float]],
    winner: int,
    loser: int,
) -> float:
    """-log sigmoid(alpha * (log-ratio of winner minus log-ratio of loser))."""

    def logits(params):
        return [sum(p * f for p, f in zip(params, phi)) for phi in phis]

    lt, lr = logits(theta), logits(ref)
    rw = log_softmax_at(lt, winner) - log_softmax_at(lr, winner)
    rl = log_softmax_at(lt, loser) - log_softmax_at(lr, loser)
    z = alpha * (rw - rl)
    return math.log1p(math.exp(-z)) if z > -30 else -z


def joint_phi(features: list[float], context: list[float]) -> list[float]:
    return list(features) + [f * c for f, c in zip(features, context)]
