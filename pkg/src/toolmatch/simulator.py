"""Synthetic tool ecosystem with hidden ground truth.

Tools carry latent capability vectors that the scheduler never sees. Only
:class:`ExecutionOutcome` values and rankings derived from them cross over to
the selection and update code.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .capability_matrix import DimensionSet, PerformanceMatrix
from .errors import ArityMismatch, DimensionMismatch, InvalidSpec
from .estimator import EvaluationGoals
from .selector import PreferenceWeights, Ranking
from .updater import CandidateSet

logger = logging.getLogger(__name__)

CORRUPTIONS = ("exact", "permuted", "uniform-random", "mean-initialized")
CAP_PROFILES = ("uniform", "specialist")

# independent RNG streams per trial, keyed by purpose
STREAM_ECOSYSTEM = 0
STREAM_TASKS = 1
STREAM_EXECUTION = 2
STREAM_EXPLORATION = 3
STREAM_BASELINE = 4
STREAM_PLANNER = 5


def trial_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream)])


@dataclass(frozen=True)
class SimulatedTool:
    id: str
    true_caps: np.ndarray = field(repr=False)
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        caps = np.array(self.true_caps, dtype=float, copy=True)
        if not np.all(np.isfinite(caps)):
            raise ValueError("true capabilities must be finite")
        if not 0 <= self.noise_sigma < 0.5:
            raise ValueError("noise_sigma must lie in [0, 0.5)")
        caps.setflags(write=False)
        object.__setattr__(self, "true_caps", caps)


DEFAULT_GOALS = EvaluationGoals.from_weights([0.25, 0.25], 0.5)


@dataclass(frozen=True)
class SimulatedTask:
    weights: PreferenceWeights
    goals: EvaluationGoals = DEFAULT_GOALS
    steps: int = 6


@dataclass(frozen=True)
class ExecutionOutcome:
    tool: str
    quality: float
    per_goal_scores: tuple[float, ...]


def true_quality(tool: SimulatedTool, weights: PreferenceWeights) -> float:
    return float(weights.w @ tool.true_caps)


def execute(
    tool: SimulatedTool,
    task: SimulatedTask,
    rng: np.random.Generator,
    goal_noise: float | None = None,
) -> ExecutionOutcome:
    """Run ``tool`` on ``task``: weighted true capability plus Gaussian noise.

    Each goal score is the quality with its own independent perturbation.
    """
    if tool.true_caps.shape != task.weights.w.shape:
        raise DimensionMismatch(
            f"tool {tool.id} has {tool.true_caps.size} dims, task has {task.weights.w.size}"
        )
    sigma = tool.noise_sigma if goal_noise is None else goal_noise
    quality = float(np.clip(true_quality(tool, task.weights) + tool.noise_sigma * rng.standard_normal(), 0.0, 1.0))
    perturb = sigma * rng.standard_normal(len(task.goals))
    per_goal = tuple(float(x) for x in np.clip(quality + perturb, 0.0, 1.0))
    return ExecutionOutcome(tool.id, quality, per_goal)


def oracle_ranking(
    candidates: CandidateSet | Sequence[str],
    outcomes: Sequence[ExecutionOutcome],
    registry: Sequence[str] | None = None,
) -> Ranking:
    """Candidates by descending observed quality, ties in registry order."""
    ids = list(candidates.all if isinstance(candidates, CandidateSet) else candidates)
    if len(outcomes) != len(ids):
        raise ArityMismatch(f"{len(ids)} candidates but {len(outcomes)} outcomes")
    by_tool = {o.tool: o.quality for o in outcomes}
    if set(by_tool) != set(ids):
        raise ArityMismatch("outcomes do not match the candidate tools")
    order = list(registry) if registry is not None else ids
    position = {t: i for i, t in enumerate(order)}
    return Ranking(tuple(sorted(ids, key=lambda t: (-by_tool[t], position[t]))))


def oracle_best(task: SimulatedTask, tools: Sequence[SimulatedTool]) -> str:
    if not tools:
        raise ValueError("no tools")
    values = np.array([true_quality(t, task.weights) for t in tools])
    return tools[int(np.argmax(values))].id


# -- scenarios -----------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to build a trial's ecosystem and task stream, given a seed."""

    n_tools: int = 8
    n_dims: int = 7
    noise_sigma: float = 0.05
    corruption: str = "permuted"
    corruption_fraction: float = 0.3
    cap_profile: str = "specialist"
    task_concentration: float = 0.3
    steps: int = 800
    category: str = "custom"

    def __post_init__(self) -> None:
        if self.n_tools < 1 or self.n_dims < 1:
            raise InvalidSpec("need at least one tool and one dimension")
        if not 0 <= self.noise_sigma < 0.5:
            raise InvalidSpec("noise_sigma must lie in [0, 0.5)")
        if self.corruption not in CORRUPTIONS:
            raise InvalidSpec(f"corruption must be one of {CORRUPTIONS}")
        if not 0 <= self.corruption_fraction <= 1:
            raise InvalidSpec("corruption_fraction must lie in [0, 1]")
        if self.cap_profile not in CAP_PROFILES:
            raise InvalidSpec(f"cap_profile must be one of {CAP_PROFILES}")
        if not self.task_concentration > 0:
            raise InvalidSpec("task_concentration must be positive")
        if self.steps < 1:
            raise InvalidSpec("steps must be positive")
        if self.category != "custom" and self.n_dims != 7:
            raise InvalidSpec("generation/editing categories have exactly 7 dimensions")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown scenario fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)

    def dimension_set(self) -> DimensionSet:
        if self.category == "generation":
            return DimensionSet.generation()
        if self.category == "editing":
            return DimensionSet.editing()
        return DimensionSet.custom(self.n_dims)


def _true_caps(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    d, l = cfg.n_dims, cfg.n_tools
    if cfg.cap_profile == "uniform":
        caps = rng.uniform(0.05, 1.0, size=(d, l))
    else:
        # a spread of general quality levels, and two strong dimensions per
        # tool, dealt round-robin so every dimension has a specialist
        level = rng.permutation(np.linspace(0.0, 0.2, l))
        caps = rng.uniform(0.05, 0.3, size=(d, l)) + level[None, :]
        order = rng.permutation(d)
        for j in range(l):
            for offset in (0, 3):
                caps[order[(j + offset) % d], j] = rng.uniform(0.7, 1.0) + level[j]
    # scale each dimension so its best tool scores exactly 1
    return caps / caps.max(axis=1, keepdims=True)


def derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` with no fixed points (n >= 2)."""
    if n < 2:
        raise ValueError("a derangement needs at least two elements")
    ident = np.arange(n)
    while True:
        p = rng.permutation(n)
        if not np.any(p == ident):
            return p


def _corrupt(cfg: ScenarioConfig, caps: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    d, l = caps.shape
    if cfg.corruption == "exact":
        return caps.copy()
    if cfg.corruption == "uniform-random":
        return rng.uniform(0.0, 1.0, size=(d, l))
    if cfg.corruption == "mean-initialized":
        return np.repeat(caps.mean(axis=1, keepdims=True), l, axis=1)
    # permuted: in a subset of dimensions, every tool is credited with
    # another tool's score (a derangement of that row)
    out = caps.copy()
    if l < 2:
        return out
    k = int(round(cfg.corruption_fraction * d))
    for i in rng.choice(d, size=k, replace=False):
        out[i] = caps[i, derangement(l, rng)]
    return out


@dataclass(frozen=True)
class Ecosystem:
    dims: DimensionSet
    tools: tuple[SimulatedTool, ...]
    initial_matrix: PerformanceMatrix

    @property
    def tool_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tools)

    def true_matrix(self) -> PerformanceMatrix:
        return PerformanceMatrix(self.dims, self.tool_ids, np.stack([t.true_caps for t in self.tools], axis=1))

    def tool(self, tool_id: str) -> SimulatedTool:
        for t in self.tools:
            if t.id == tool_id:
                return t
        raise KeyError(tool_id)


def build_ecosystem(cfg: ScenarioConfig, seed: int) -> Ecosystem:
    rng = trial_rng(seed, STREAM_ECOSYSTEM)
    dims = cfg.dimension_set()
    caps = _true_caps(cfg, rng)
    ids = tuple(f"tool{j}" for j in range(cfg.n_tools))
    tools = tuple(SimulatedTool(ids[j], caps[:, j], cfg.noise_sigma) for j in range(cfg.n_tools))
    initial = PerformanceMatrix(dims, ids, _corrupt(cfg, caps, rng))
    return Ecosystem(dims, tools, initial)


class TaskGenerator:
    """I.i.d. tasks with Dirichlet-distributed dimension emphasis."""

    def __init__(self, dims: DimensionSet, rng: np.random.Generator, concentration: float = 1.0,
                 goals: EvaluationGoals = DEFAULT_GOALS, steps: int = 6):
        self.dims = dims
        self.rng = rng
        self.alpha = np.full(len(dims), float(concentration))
        self.goals = goals
        self.steps = steps

    def weights(self) -> PreferenceWeights:
        return PreferenceWeights.from_raw(self.dims, self.rng.dirichlet(self.alpha))

    def __call__(self) -> SimulatedTask:
        return SimulatedTask(self.weights(), self.goals, self.steps)
