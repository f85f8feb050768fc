"""Simulated planning episodes that produce winner/loser pairs for the planner.

A task has a target emphasis over capability dimensions. At each of ``T``
steps the planner is offered ``k`` candidate subtasks, each demanding its own
emphasis. Every candidate is routed to a tool by preference-weighted selection
on the scheduler's matrix, executed in the simulator, and scored:

* local goals: the execution quality as seen by independent noisy judges;
* global goal: cosine agreement between the subtask and the task target.

The winner continues the episode and successful sequences are stored in
memory for retrieval on later tasks.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .capability_matrix import PerformanceMatrix
from .planner_policy import (
    MemoryStore,
    PlannerPolicy,
    PlanningContext,
    PreferencePair,
    SubtaskCandidate,
    cosine_similarity,
    make_pair,
    mix_candidates,
)
from .errors import InvalidSpec, NoSignal
from .estimator import EvaluationGoals, StepEvaluation, evaluate
from .selector import PreferenceWeights, rank, score
from .simulator import (
    STREAM_EXECUTION,
    STREAM_PLANNER,
    Ecosystem,
    ScenarioConfig,
    SimulatedTask,
    build_ecosystem,
    execute,
    trial_rng,
)

logger = logging.getLogger(__name__)

HELDOUT_OFFSET = 1_000_003


@dataclass(frozen=True)
class PlannerScenario:
    n_tools: int = 8
    n_dims: int = 7
    noise_sigma: float = 0.05
    cap_profile: str = "specialist"
    k: int = 5
    beta: float = 0.4
    alpha: float = 1.0
    lr: float = 0.5
    descent_steps: int = 1000
    train_tasks: int = 40
    heldout_tasks: int = 40
    T: int = 6
    memory_capacity: int = 64
    subtask_concentration: float = 1.0
    local_weights: tuple[float, ...] = (0.25, 0.25)
    global_weight: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "local_weights", tuple(float(w) for w in self.local_weights))
        if self.k < 2:
            raise InvalidSpec("k must be at least 2; a single candidate never yields a preference pair")
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidSpec("beta must lie in [0, 1]")
        if not self.alpha > 0 or not self.lr > 0:
            raise InvalidSpec("alpha and lr must be positive")
        if self.descent_steps < 0 or self.train_tasks < 1 or self.heldout_tasks < 0 or self.T < 1:
            raise InvalidSpec("step and task counts must be positive")
        if not self.subtask_concentration > 0:
            raise InvalidSpec("subtask_concentration must be positive")
        self.goals()  # validates goal weights
        self.ecosystem_config()

    @classmethod
    def from_dict(cls, data: dict) -> "PlannerScenario":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown scenario fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["local_weights"] = list(self.local_weights)
        return out

    def goals(self) -> EvaluationGoals:
        try:
            return EvaluationGoals.from_weights(self.local_weights, self.global_weight)
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from None

    def ecosystem_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            n_tools=self.n_tools,
            n_dims=self.n_dims,
            noise_sigma=self.noise_sigma,
            corruption="exact",
            cap_profile=self.cap_profile,
        )

    @property
    def F(self) -> int:
        return self.n_dims + 1


@dataclass
class PlanningStep:
    candidates: list[SubtaskCandidate]
    evaluations: list[StepEvaluation]
    context: PlanningContext

    @property
    def winner_index(self) -> int:
        return int(np.argmax([ev.e for ev in self.evaluations]))


class PlanningSimulator:
    """Generates planning episodes against one simulated tool ecosystem.

    ``matrix`` is the scheduler's view used to route subtasks to tools; it
    defaults to the ecosystem's initial matrix and can be swapped as an
    adaptive updater refines it.
    """

    def __init__(self, scenario: PlannerScenario, ecosystem: Ecosystem | None = None,
                 matrix: PerformanceMatrix | None = None, seed: int | None = None):
        self.scenario = scenario
        seed = scenario.seed if seed is None else seed
        self.ecosystem = ecosystem if ecosystem is not None else build_ecosystem(scenario.ecosystem_config(), seed)
        self.matrix = matrix if matrix is not None else self.ecosystem.initial_matrix
        self.goals = scenario.goals()
        self.rng = trial_rng(seed, STREAM_PLANNER)
        self.exec_rng = trial_rng(seed, STREAM_EXECUTION)
        self.memory = MemoryStore(scenario.memory_capacity)
        self._counter = 0
        d = len(self.ecosystem.dims)
        self._alpha = np.full(d, scenario.subtask_concentration)

    # -- pieces ----------------------------------------------------------------

    def digest(self) -> np.ndarray:
        return self.matrix.normalized().scores.mean(axis=1)

    def suitability(self, emphasis: np.ndarray) -> float:
        w = PreferenceWeights.from_raw(self.ecosystem.dims, emphasis)
        return float(score(w, self.matrix).s.max())

    def candidate(self, emphasis: np.ndarray) -> SubtaskCandidate:
        self._counter += 1
        features = np.append(emphasis, self.suitability(emphasis))
        return SubtaskCandidate(f"u{self._counter}", features, emphasis=np.asarray(emphasis, dtype=float))

    def sample_candidate(self, rng: np.random.Generator) -> SubtaskCandidate:
        return self.candidate(rng.dirichlet(self._alpha))

    def refresh(self, cand: SubtaskCandidate) -> SubtaskCandidate:
        """Recompute a remembered candidate's suitability under the current matrix."""
        fresh = np.append(cand.emphasis, self.suitability(cand.emphasis))
        return SubtaskCandidate(cand.id, fresh, cand.source, cand.emphasis)

    def context(self, target: np.ndarray) -> PlanningContext:
        d = target.size
        return PlanningContext(
            task_summary_features=target,
            target_semantics_features=np.append(d * target, 1.0),
            tool_library_digest=self.digest(),
        )

    def evaluate_candidate(self, cand: SubtaskCandidate, target: np.ndarray, step: int) -> StepEvaluation:
        weights = PreferenceWeights.from_raw(self.ecosystem.dims, cand.emphasis)
        tool_id = rank(score(weights, self.matrix)).top
        task = SimulatedTask(weights, self.goals, self.scenario.T)
        outcome = execute(self.ecosystem.tool(tool_id), task, self.exec_rng)
        local = list(outcome.per_goal_scores[: len(self.goals.local)])
        noise = self.scenario.noise_sigma * self.exec_rng.standard_normal()
        alignment = float(np.clip(cosine_similarity(cand.emphasis, target) + noise, 0.0, 1.0))
        return evaluate(local + [alignment], self.goals, step)

    # -- episodes --------------------------------------------------------------

    def step(self, ctx: PlanningContext, target: np.ndarray, t: int) -> PlanningStep:
        # the first episode necessarily starts from empty memory; don't warn about it
        beta = self.scenario.beta if len(self.memory) else 0.0
        cands = mix_candidates(self.scenario.k, beta, ctx, self.memory, self.rng,
                               self.sample_candidate, step=t)
        cands = [self.refresh(c) if c.source == "memory" else c for c in cands]
        evals = [self.evaluate_candidate(c, target, t) for c in cands]
        return PlanningStep(cands, evals, ctx)

    def episode(self) -> list[PlanningStep]:
        target = self.rng.dirichlet(np.ones(len(self.ecosystem.dims)))
        ctx = self.context(target)
        steps: list[PlanningStep] = []
        winners: list[SubtaskCandidate] = []
        for t in range(self.scenario.T):
            st = self.step(ctx, target, t)
            steps.append(st)
            w = st.winner_index
            winners.append(st.candidates[w])
            ctx = ctx.extended(st.candidates[w].id, st.evaluations[w].e)
        final_e = float(np.mean([s.evaluations[s.winner_index].e for s in steps]))
        self.memory.add(target, winners, final_e)
        return steps

    def collect(self, tasks: int) -> list[PlanningStep]:
        out: list[PlanningStep] = []
        for _ in range(tasks):
            out.extend(self.episode())
        return out

    def heldout(self) -> "PlanningSimulator":
        """A copy sharing memory contents but drawing fresh tasks and noise."""
        twin = copy.copy(self)
        twin.memory = copy.deepcopy(self.memory)
        twin.rng = trial_rng(self.scenario.seed + HELDOUT_OFFSET, STREAM_PLANNER)
        twin.exec_rng = trial_rng(self.scenario.seed + HELDOUT_OFFSET, STREAM_EXECUTION)
        return twin


def to_pairs(steps: Sequence[PlanningStep]) -> list[PreferencePair]:
    pairs = []
    for st in steps:
        try:
            pairs.append(make_pair(st.candidates, st.evaluations, st.context))
        except NoSignal:
            logger.debug("dropping planning step without preference signal")
    return pairs


def winner_selection_rate(steps: Sequence[PlanningStep], policy: PlannerPolicy, reference: bool = False) -> float:
    """Fraction of steps where the greedy policy choice is the best-evaluated candidate."""
    if not steps:
        return float("nan")
    hits = [policy.choose(st.context, st.candidates, reference) == st.winner_index for st in steps]
    return float(np.mean(hits))
