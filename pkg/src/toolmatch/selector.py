"""Preference-weighted tool suitability and ranking.

The matrix is stored dimensions x tools, so the suitability of every tool is
the 1 x d weight row times the d x l normalized matrix, giving one score per
tool. Multiplying by the transposed matrix would not conform for d != l; the
row-times-matrix form is the one that yields a length-l score vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .capability_matrix import DimensionSet, PerformanceMatrix, normalize
from .errors import DimensionMismatch, WeightSumViolation

WEIGHT_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class PreferenceWeights:
    """Per-dimension task emphasis, nonnegative and summing to one.

    Vectors within ``WEIGHT_SUM_TOLERANCE`` of unit sum are renormalized;
    anything further off raises :class:`WeightSumViolation`.
    """

    dims: DimensionSet
    w: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=float, copy=True).reshape(-1)
        if w.shape != (len(self.dims),):
            raise DimensionMismatch(f"expected {len(self.dims)} weights, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise WeightSumViolation("weights must be finite")
        if np.any(w < 0) or np.any(w > 1):
            raise WeightSumViolation(f"weights must lie in [0, 1], got {w.tolist()}")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise WeightSumViolation(f"weights sum to {total:.9g}, expected 1")
        if total != 1.0:
            w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_raw(cls, dims: DimensionSet, raw: Sequence[float]) -> "PreferenceWeights":
        """Rescale any nonnegative vector with a positive sum onto the simplex."""
        raw = np.asarray(raw, dtype=float)
        total = raw.sum()
        if np.any(raw < 0) or not total > 0:
            raise WeightSumViolation("raw weights need nonnegative entries and a positive sum")
        return cls(dims, raw / total)

    @classmethod
    def from_mapping(cls, dims: DimensionSet, values: Mapping[str, float]) -> "PreferenceWeights":
        unknown = set(values) - set(dims.names)
        if unknown:
            raise DimensionMismatch(f"unknown dimensions {sorted(unknown)}")
        return cls(dims, [float(values.get(name, 0.0)) for name in dims.names])

    @classmethod
    def one_hot(cls, dims: DimensionSet, index: int) -> "PreferenceWeights":
        w = np.zeros(len(dims))
        w[index] = 1.0
        return cls(dims, w)

    @classmethod
    def uniform(cls, dims: DimensionSet) -> "PreferenceWeights":
        return cls(dims, np.full(len(dims), 1.0 / len(dims)))


@dataclass(frozen=True, eq=False)
class SuitabilityScores:
    tools: tuple[str, ...]
    s: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tools", tuple(self.tools))
        s = np.array(self.s, dtype=float, copy=True).reshape(-1)
        if s.shape != (len(self.tools),):
            raise DimensionMismatch("one score per tool required")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    def as_dict(self) -> dict[str, float]:
        return {t: float(v) for t, v in zip(self.tools, self.s)}

    def subset(self, tools: Iterable[str]) -> "SuitabilityScores":
        """Scores restricted to ``tools``, kept in registry order."""
        wanted = set(tools)
        keep = [i for i, t in enumerate(self.tools) if t in wanted]
        return SuitabilityScores(tuple(self.tools[i] for i in keep), self.s[keep])


@dataclass(frozen=True)
class Ranking:
    """Tools ordered best first; ranks are 1-based."""

    ordered: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ordered", tuple(self.ordered))
        if len(set(self.ordered)) != len(self.ordered):
            raise ValueError(f"ranking repeats a tool: {list(self.ordered)}")

    @property
    def rank_of(self) -> dict[str, int]:
        return {tool: i + 1 for i, tool in enumerate(self.ordered)}

    def rank(self, tool: str) -> int:
        return self.ordered.index(tool) + 1

    @property
    def top(self) -> str:
        return self.ordered[0]

    def __len__(self) -> int:
        return len(self.ordered)

    def __iter__(self):
        return iter(self.ordered)


def score(weights: PreferenceWeights, matrix: PerformanceMatrix) -> SuitabilityScores:
    if weights.dims != matrix.dims:
        raise DimensionMismatch(
            f"weight dimensions {list(weights.dims.names)} do not match "
            f"matrix dimensions {list(matrix.dims.names)}"
        )
    s = weights.w @ normalize(matrix).scores
    return SuitabilityScores(matrix.tools, s)


def rank(scores: SuitabilityScores) -> Ranking:
    """Descending by score; ties keep registry order."""
    if len(scores.tools) == 0:
        raise ValueError("cannot rank an empty score vector")
    order = np.argsort(-scores.s, kind="stable")
    return Ranking(tuple(scores.tools[i] for i in order))


def select(weights: PreferenceWeights, matrix: PerformanceMatrix) -> tuple[SuitabilityScores, Ranking]:
    scores = score(weights, matrix)
    return scores, rank(scores)
