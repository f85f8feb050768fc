"""Online correction of the capability matrix from observed rankings.

Each round scores all tools, takes the top ``m`` plus ``n`` random others as
candidates, and compares the predicted order of those candidates with the
order observed after running them. Tools that did better than predicted have
their raw scores raised along the task's weight vector; tools that did worse
are lowered.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, TextIO

import numpy as np

from .capability_matrix import PerformanceMatrix, normalize
from .errors import DimensionMismatch, RankingMismatch, UnknownTool
from .selector import PreferenceWeights, Ranking, SuitabilityScores, rank, score

logger = logging.getLogger(__name__)

LAZY = "lazy"
EAGER = "eager"


@dataclass(frozen=True)
class UpdateConfig:
    m: int = 2
    n: int = 1
    eta: float = 0.13
    rng_seed: int = 0
    renormalize: str = LAZY

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if self.m + self.n < 2:
            raise ValueError("m + n must be at least 2; one candidate carries no ranking signal")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.renormalize not in (LAZY, EAGER):
            raise ValueError(f"renormalize must be {LAZY!r} or {EAGER!r}")


@dataclass(frozen=True)
class CandidateSet:
    exploit: tuple[str, ...]
    explore: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "exploit", tuple(self.exploit))
        object.__setattr__(self, "explore", tuple(self.explore))
        if set(self.exploit) & set(self.explore):
            raise ValueError("exploit and explore sets overlap")

    @property
    def all(self) -> tuple[str, ...]:
        return self.exploit + self.explore

    def __len__(self) -> int:
        return len(self.exploit) + len(self.explore)


@dataclass(frozen=True)
class DirectionCoefficient:
    per_tool: Mapping[str, float]

    def __getitem__(self, tool: str) -> float:
        return self.per_tool[tool]

    def total(self) -> float:
        return float(sum(self.per_tool.values()))


def select_candidates(
    scores: SuitabilityScores, cfg: UpdateConfig, rng: np.random.Generator
) -> CandidateSet:
    """Top ``m`` tools by score plus ``n`` drawn uniformly from the rest."""
    order = rank(scores).ordered
    exploit = order[: cfg.m]
    rest = order[len(exploit):]
    n = min(cfg.n, len(rest))
    if n:
        picks = rng.choice(len(rest), size=n, replace=False)
        explore = tuple(rest[i] for i in picks)
    else:
        explore = ()
    return CandidateSet(exploit, explore)


def theory_ranking(scores: SuitabilityScores, candidates: CandidateSet) -> Ranking:
    """Predicted order of the candidates under the current scores."""
    return rank(scores.subset(candidates.all))


def direction(theory: Ranking, actual: Ranking) -> DirectionCoefficient:
    """Per-candidate rank difference, theory minus actual, over the candidate count.

    Ranks are 1 = best, so a tool observed above its predicted position gets a
    positive coefficient.
    """
    if set(theory.ordered) != set(actual.ordered) or len(theory) != len(actual):
        raise RankingMismatch(
            f"rankings cover different tools: {list(theory.ordered)} vs {list(actual.ordered)}"
        )
    c = len(theory)
    rt, ra = theory.rank_of, actual.rank_of
    return DirectionCoefficient({t: (rt[t] - ra[t]) / c for t in theory.ordered})


def apply_update(
    matrix: PerformanceMatrix,
    weights: PreferenceWeights,
    delta: DirectionCoefficient,
    cfg: UpdateConfig,
) -> PerformanceMatrix:
    """Add ``eta * w (outer) delta`` to the candidate columns, floored at zero."""
    if weights.dims != matrix.dims:
        raise DimensionMismatch("weights and matrix use different dimension sets")
    unknown = [t for t in delta.per_tool if t not in matrix.tools]
    if unknown:
        raise UnknownTool(f"delta names tools outside the matrix: {unknown}")
    if all(v == 0 for v in delta.per_tool.values()):
        return matrix
    scores = np.array(matrix.scores, dtype=float)
    for tool, d in delta.per_tool.items():
        if d == 0:
            continue
        j = matrix.index(tool)
        scores[:, j] = np.maximum(0.0, scores[:, j] + weights.w * cfg.eta * d)
    updated = matrix.with_scores(scores)
    if cfg.renormalize == EAGER:
        updated = normalize(updated)
    return updated


@dataclass
class StepRecord:
    step: int
    candidates: list[str]
    theory_ranking: list[str]
    actual_ranking: list[str]
    delta: dict[str, float]
    eta: float
    selected_tool: str
    oracle_best: str | None
    error_flag: bool | None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=False)


@dataclass
class AdaptiveUpdater:
    """Owns one matrix lineage and applies rounds serially.

    ``observe`` is supplied by the caller: given the task weights and the
    candidate set it returns the observed ranking of those candidates.
    """

    matrix: PerformanceMatrix
    cfg: UpdateConfig = field(default_factory=UpdateConfig)
    rng: np.random.Generator | None = None
    trace: list[StepRecord] = field(default_factory=list)
    step: int = 0

    def __post_init__(self) -> None:
        if self.rng is None:
            self.rng = np.random.default_rng(self.cfg.rng_seed)

    def select(self, weights: PreferenceWeights) -> tuple[SuitabilityScores, Ranking]:
        s = score(weights, self.matrix)
        return s, rank(s)

    def round(
        self,
        weights: PreferenceWeights,
        observe: Callable[[CandidateSet], Ranking],
        oracle_best: str | None = None,
    ) -> StepRecord:
        scores, ranking = self.select(weights)
        candidates = select_candidates(scores, self.cfg, self.rng)
        theory = theory_ranking(scores, candidates)
        actual = observe(candidates)
        delta = direction(theory, actual)
        self.matrix = apply_update(self.matrix, weights, delta, self.cfg)
        record = StepRecord(
            step=self.step,
            candidates=list(candidates.all),
            theory_ranking=list(theory.ordered),
            actual_ranking=list(actual.ordered),
            delta=dict(delta.per_tool),
            eta=self.cfg.eta,
            selected_tool=ranking.top,
            oracle_best=oracle_best,
            error_flag=None if oracle_best is None else ranking.top != oracle_best,
        )
        self.trace.append(record)
        self.step += 1
        return record

    def write_trace(self, out: TextIO | str | Path) -> None:
        write_trace(self.trace, out)


def write_trace(records: Iterable[StepRecord], out: TextIO | str | Path) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            write_trace(records, fh)
        return
    for rec in records:
        out.write(rec.to_json() + "\n")


def read_trace(path: str | Path) -> list[StepRecord]:
    with open(path, encoding="utf-8") as fh:
        return [StepRecord(**json.loads(line)) for line in fh if line.strip()]
