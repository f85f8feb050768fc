"""Weighted aggregation of per-goal evaluation scores into one step value."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArityMismatch, WeightSumViolation

WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Goal:
    descriptor: str
    weight: float


@dataclass(frozen=True)
class EvaluationGoals:
    """``local`` goals plus one ``global_`` goal; weights must sum to one."""

    local: tuple[Goal, ...]
    global_: Goal

    def __post_init__(self) -> None:
        object.__setattr__(self, "local", tuple(self.local))
        weights = self.weights
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise WeightSumViolation("goal weights must be finite and nonnegative")
        if abs(float(weights.sum()) - 1.0) > WEIGHT_TOLERANCE:
            raise WeightSumViolation(f"goal weights sum to {weights.sum():.12g}, expected 1")

    @classmethod
    def from_weights(
        cls, local_weights: Sequence[float], global_weight: float
    ) -> "EvaluationGoals":
        local = tuple(Goal(f"local{i}", float(w)) for i, w in enumerate(local_weights))
        return cls(local, Goal("global", float(global_weight)))

    @property
    def weights(self) -> np.ndarray:
        """Local weights followed by the global weight."""
        return np.array([g.weight for g in self.local] + [self.global_.weight], dtype=float)

    def __len__(self) -> int:
        return len(self.local) + 1


@dataclass(frozen=True)
class StepEvaluation:
    e: float
    per_goal: tuple[float, ...]
    step: int = 0


def evaluate(output_scores: Sequence[float], goals: EvaluationGoals, step: int = 0) -> StepEvaluation:
    """Combine goal scores (local ones first, global last) into ``e``.

    Every score must lie in [0, 1]; with unit-sum weights ``e`` does too.
    """
    scores = np.asarray(output_scores, dtype=float).reshape(-1)
    if scores.size != len(goals):
        raise ArityMismatch(f"expected {len(goals)} goal scores, got {scores.size}")
    if not np.all(np.isfinite(scores)) or np.any(scores < 0) or np.any(scores > 1):
        raise ValueError(f"goal scores must lie in [0, 1], got {scores.tolist()}")
    e = float(np.dot(goals.weights, scores))
    # weights may sum to 1 +- 1e-9, which can push e a hair outside [0, 1]
    e = min(max(e, 0.0), 1.0)
    return StepEvaluation(e, tuple(float(x) for x in scores), step)
