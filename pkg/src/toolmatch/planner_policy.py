"""Stepwise preference training for the planner.

At every planning step the planner proposes ``k`` candidate subtasks. After
each is executed and evaluated, the best and worst form a winner/loser pair,
and the policy is pushed to raise the winner's log-probability ratio against
a frozen reference copy relative to the loser's:

    loss = -log sigmoid(alpha * ((log p(w) - log p_ref(w)) - (log p(l) - log p_ref(l))))

The policy is a linear softmax over the step's candidate set, with logit
``theta . phi(context, candidate)`` and ``phi = [f, f * c]`` where ``f`` is the
candidate's feature vector and ``c`` the context's target-semantics vector.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArityMismatch, CandidateNotInSet, DimensionMismatch, NoSignal, ParseError
from .estimator import StepEvaluation

logger = logging.getLogger(__name__)

MEMORY = "memory"
RANDOM = "random"
RETRIEVAL_TOP = 5


@dataclass(frozen=True, eq=False)
class SubtaskCandidate:
    id: str
    features: np.ndarray = field(repr=False)
    source: str = RANDOM
    # dimension emphasis the subtask demands from a tool; only simulators read it
    emphasis: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        f = np.array(self.features, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(f)):
            raise ValueError(f"candidate {self.id} has non-finite features")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)
        if self.source not in (MEMORY, RANDOM):
            raise ValueError(f"unknown candidate source {self.source!r}")

    def relabeled(self, source: str) -> "SubtaskCandidate":
        return replace(self, source=source)


@dataclass(frozen=True, eq=False)
class PlanningContext:
    task_summary_features: np.ndarray = field(repr=False)
    target_semantics_features: np.ndarray = field(repr=False)
    tool_library_digest: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    history: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        for name in ("task_summary_features", "target_semantics_features", "tool_library_digest"):
            arr = np.array(getattr(self, name), dtype=float, copy=True).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        history = tuple((str(i), float(e)) for i, e in self.history)
        if any(not 0.0 <= e <= 1.0 for _, e in history):
            raise ValueError("history evaluations must lie in [0, 1]")
        object.__setattr__(self, "history", history)

    def extended(self, candidate_id: str, e: float) -> "PlanningContext":
        return replace(self, history=self.history + ((candidate_id, e),))


@dataclass(frozen=True, eq=False)
class PreferencePair:
    winner: SubtaskCandidate
    loser: SubtaskCandidate
    winner_e: float
    loser_e: float
    context: PlanningContext
    candidates: tuple[SubtaskCandidate, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.winner_e < self.loser_e:
            raise ValueError("winner must not be evaluated below the loser")
        if self.winner is self.loser:
            raise ValueError("winner and loser must be different candidates")

    def indices(self) -> tuple[int, int]:
        w = _position(self.candidates, self.winner)
        l = _position(self.candidates, self.loser)
        return w, l


def _position(candidates: Sequence[SubtaskCandidate], item: SubtaskCandidate) -> int:
    for i, c in enumerate(candidates):
        if c is item:
            return i
    raise CandidateNotInSet(f"candidate {item.id!r} is not in the step's candidate set")


def joint_features(context: PlanningContext, candidates: Sequence[SubtaskCandidate]) -> np.ndarray:
    """Stack ``[f, f * c]`` for each candidate into a ``(k, 2F)`` array."""
    f = np.stack([c.features for c in candidates])
    ctx = context.target_semantics_features
    if ctx.shape != (f.shape[1],):
        raise DimensionMismatch(
            f"target semantics has {ctx.size} features, candidates have {f.shape[1]}"
        )
    return np.concatenate([f, f * ctx[None, :]], axis=1)


def sigmoid(x: np.ndarray | float) -> np.ndarray:
    """Logistic function without cancellation in either tail."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - math.log(float(np.exp(shifted).sum()))


@dataclass(frozen=True, eq=False)
class PlannerPolicy:
    theta: np.ndarray = field(repr=False)
    ref_theta: np.ndarray = field(repr=False)
    alpha: float = 1.0
    F: int = 0

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=float, copy=True).reshape(-1)
        ref = np.array(self.ref_theta, dtype=float, copy=True).reshape(-1)
        if theta.shape != ref.shape:
            raise DimensionMismatch("theta and ref_theta differ in size")
        if theta.size % 2:
            raise DimensionMismatch("theta must have 2F entries")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        theta.setflags(write=False)
        ref.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "ref_theta", ref)
        object.__setattr__(self, "F", theta.size // 2)

    @classmethod
    def initial(cls, F: int, alpha: float = 1.0, init_scale: float = 0.0,
                rng: np.random.Generator | None = None) -> "PlannerPolicy":
        """Fresh policy whose reference is a frozen copy of its starting point."""
        if init_scale:
            rng = rng if rng is not None else np.random.default_rng(0)
            theta = init_scale * rng.standard_normal(2 * F)
        else:
            theta = np.zeros(2 * F)
        return cls(theta, theta.copy(), alpha)

    def with_theta(self, theta: np.ndarray) -> "PlannerPolicy":
        return PlannerPolicy(theta, self.ref_theta, self.alpha)

    def log_probs(self, context: PlanningContext, candidates: Sequence[SubtaskCandidate],
                  reference: bool = False) -> np.ndarray:
        phi = joint_features(context, candidates)
        return _log_softmax(phi @ (self.ref_theta if reference else self.theta))

    def probs(self, context: PlanningContext, candidates: Sequence[SubtaskCandidate],
              reference: bool = False) -> np.ndarray:
        return np.exp(self.log_probs(context, candidates, reference))

    def choose(self, context: PlanningContext, candidates: Sequence[SubtaskCandidate],
               reference: bool = False) -> int:
        """Greedy pick; ties go to the earliest candidate."""
        return int(np.argmax(self.log_probs(context, candidates, reference)))

    # -- checkpoints -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "theta": [float(x) for x in self.theta],
            "ref_theta": [float(x) for x in self.ref_theta],
            "alpha": float(self.alpha),
            "F": int(self.F),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlannerPolicy":
        try:
            policy = cls(np.array(data["theta"], dtype=float), np.array(data["ref_theta"], dtype=float),
                         float(data["alpha"]))
        except KeyError as exc:
            raise ParseError("missing checkpoint field", str(exc.args[0])) from None
        if "F" in data and int(data["F"]) != policy.F:
            raise ParseError(f"F={data['F']} disagrees with theta length {policy.theta.size}", "F")
        return policy

    def save(self, path: str | Path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.to_dict(), **extra}, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> tuple["PlannerPolicy", dict]:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
        extra = {k: v for k, v in data.items() if k not in ("theta", "ref_theta", "alpha", "F")}
        return cls.from_dict(data), extra


# -- pairs, loss, gradient -----------------------------------------------------


def make_pair(
    candidates: Sequence[SubtaskCandidate],
    evaluations: Sequence[StepEvaluation | float],
    context: PlanningContext,
) -> PreferencePair:
    """Best-evaluated candidate against the worst.

    Ties resolve to the first maximum and the last minimum. Raises
    :class:`NoSignal` when every evaluation is equal.
    """
    if len(candidates) < 2:
        raise ArityMismatch("at least two candidates are needed for a pair")
    if len(evaluations) != len(candidates):
        raise ArityMismatch(f"{len(candidates)} candidates but {len(evaluations)} evaluations")
    e = np.array([v.e if isinstance(v, StepEvaluation) else float(v) for v in evaluations])
    if np.all(e == e[0]):
        raise NoSignal("all candidates evaluated equally")
    w = int(np.argmax(e))
    l = len(e) - 1 - int(np.argmin(e[::-1]))
    return PreferencePair(candidates[w], candidates[l], float(e[w]), float(e[l]), context, tuple(candidates))


def _margin_parts(pair: PreferencePair, policy: PlannerPolicy):
    w, l = pair.indices()
    phi = joint_features(pair.context, pair.candidates)
    logp = _log_softmax(phi @ policy.theta)
    logp_ref = _log_softmax(phi @ policy.ref_theta)
    r_w = logp[w] - logp_ref[w]
    r_l = logp[l] - logp_ref[l]
    return w, l, phi, logp, r_w - r_l


def reward_margin(pair: PreferencePair, policy: PlannerPolicy) -> float:
    """``r_w - r_l``: winner log-ratio minus loser log-ratio."""
    return float(_margin_parts(pair, policy)[4])


def loss(pair: PreferencePair, policy: PlannerPolicy) -> float:
    z = policy.alpha * _margin_parts(pair, policy)[4]
    # -log sigmoid(z) == log(1 + exp(-z)), evaluated without overflow
    return float(np.logaddexp(0.0, -z))


def grad(pair: PreferencePair, policy: PlannerPolicy) -> np.ndarray:
    """Analytic gradient of :func:`loss` with respect to ``theta``."""
    w, l, phi, logp, margin = _margin_parts(pair, policy)
    z = policy.alpha * margin
    p = np.exp(logp)
    expected = p @ phi
    dlogp_w = phi[w] - expected
    dlogp_l = phi[l] - expected
    # d/dz of -log sigmoid(z) is -sigmoid(-z)
    return -policy.alpha * float(sigmoid(-z)) * (dlogp_w - dlogp_l)


class PairBatch:
    """Pairs stacked into padded arrays for vectorized loss and gradient.

    Candidate sets of different sizes are padded; padded slots get a logit of
    ``-inf`` so they carry no probability.
    """

    def __init__(self, pairs: Sequence[PreferencePair]):
        if not pairs:
            raise ValueError("empty batch")
        feats = [joint_features(p.context, p.candidates) for p in pairs]
        k = max(f.shape[0] for f in feats)
        dim = feats[0].shape[1]
        self.phi = np.zeros((len(pairs), k, dim))
        self.mask = np.zeros((len(pairs), k), dtype=bool)
        for i, f in enumerate(feats):
            self.phi[i, : f.shape[0]] = f
            self.mask[i, : f.shape[0]] = True
        idx = np.array([p.indices() for p in pairs])
        self.w, self.l = idx[:, 0], idx[:, 1]
        self.rows = np.arange(len(pairs))

    def __len__(self) -> int:
        return len(self.rows)

    def _log_softmax(self, theta: np.ndarray) -> np.ndarray:
        logits = np.where(self.mask, self.phi @ theta, -np.inf)
        top = logits.max(axis=1, keepdims=True)
        return logits - top - np.log(np.exp(logits - top).sum(axis=1, keepdims=True))

    def margins(self, policy: PlannerPolicy) -> np.ndarray:
        logp = self._log_softmax(policy.theta)
        ref = self._log_softmax(policy.ref_theta)
        r = logp - np.where(self.mask, ref, 0.0)
        return r[self.rows, self.w] - r[self.rows, self.l]

    def losses(self, policy: PlannerPolicy) -> np.ndarray:
        return np.logaddexp(0.0, -policy.alpha * self.margins(policy))

    def mean_loss(self, policy: PlannerPolicy) -> float:
        return float(self.losses(policy).mean())

    def mean_grad(self, policy: PlannerPolicy) -> np.ndarray:
        logp = self._log_softmax(policy.theta)
        ref = self._log_softmax(policy.ref_theta)
        r = logp - np.where(self.mask, ref, 0.0)
        z = policy.alpha * (r[self.rows, self.w] - r[self.rows, self.l])
        # the softmax expectation term is shared by winner and loser and cancels
        diff = self.phi[self.rows, self.w] - self.phi[self.rows, self.l]
        coef = -policy.alpha * sigmoid(-z)
        return (coef[:, None] * diff).mean(axis=0)


def _as_batch(pairs: Sequence[PreferencePair] | PairBatch) -> PairBatch:
    return pairs if isinstance(pairs, PairBatch) else PairBatch(pairs)


def mean_loss(pairs: Sequence[PreferencePair] | PairBatch, policy: PlannerPolicy) -> float:
    return _as_batch(pairs).mean_loss(policy)


def mean_grad(pairs: Sequence[PreferencePair] | PairBatch, policy: PlannerPolicy) -> np.ndarray:
    return _as_batch(pairs).mean_grad(policy)


def train_step(pairs: Sequence[PreferencePair] | PairBatch, policy: PlannerPolicy, lr: float) -> PlannerPolicy:
    """One gradient-descent step on the batch mean loss; the reference stays frozen."""
    if len(pairs) == 0:
        raise ValueError("empty batch")
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    if lr == 0:
        return policy
    return policy.with_theta(policy.theta - lr * mean_grad(pairs, policy))


@dataclass
class TrainingTrace:
    rows: list[tuple[int, float, float, int]] = field(default_factory=list)

    def record(self, step: int, pairs: Sequence[PreferencePair] | PairBatch, policy: PlannerPolicy) -> None:
        batch = _as_batch(pairs)
        margins = batch.margins(policy)
        loss_value = float(np.logaddexp(0.0, -policy.alpha * margins).mean())
        self.rows.append((step, loss_value, float(margins.mean()), len(batch)))

    @property
    def losses(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "mean_loss", "winner_margin", "pair_count"])
            for step, l, m, n in self.rows:
                writer.writerow([step, repr(l), repr(m), n])


def train(pairs: Sequence[PreferencePair] | PairBatch, policy: PlannerPolicy, lr: float, steps: int,
          trace: TrainingTrace | None = None, start_step: int = 0) -> PlannerPolicy:
    """Run ``steps`` full-batch descent steps, recording the loss before each."""
    pairs = _as_batch(pairs)
    for s in range(start_step, start_step + steps):
        if trace is not None:
            trace.record(s, pairs, policy)
        policy = train_step(pairs, policy, lr)
    if trace is not None:
        trace.record(start_step + steps, pairs, policy)
    return policy


# -- memory retrieval ----------------------------------------------------------


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class MemoryEntry:
    key: np.ndarray = field(repr=False)
    sequence: tuple[SubtaskCandidate, ...]
    final_e: float


@dataclass
class MemoryStore:
    """Successful subtask sequences keyed by task features.

    When full, the entry with the lowest final evaluation is evicted.
    """

    capacity: int = 100
    entries: list[MemoryEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be positive")

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, key: np.ndarray, sequence: Sequence[SubtaskCandidate], final_e: float) -> None:
        if not sequence:
            return
        self.entries.append(MemoryEntry(np.array(key, dtype=float), tuple(sequence), float(final_e)))
        while len(self.entries) > self.capacity:
            worst = min(range(len(self.entries)), key=lambda i: self.entries[i].final_e)
            del self.entries[worst]

    def retrieve(self, query: np.ndarray, top: int = RETRIEVAL_TOP) -> list[MemoryEntry]:
        """Most similar entries by cosine similarity, stable on ties."""
        sims = [cosine_similarity(query, e.key) for e in self.entries]
        order = sorted(range(len(sims)), key=lambda i: -sims[i])
        return [self.entries[i] for i in order[:top]]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def mix_candidates(
    k: int,
    beta: float,
    context: PlanningContext,
    memory: MemoryStore,
    rng: np.random.Generator,
    sampler: Callable[[np.random.Generator], SubtaskCandidate],
    step: int | None = None,
) -> list[SubtaskCandidate]:
    """``round(beta * k)`` candidates from memory, the rest from ``sampler``.

    Memory candidates come from entries drawn among the top matches for the
    task summary; each contributes its subtask at ``step`` (defaulting to the
    current history length, clamped to the stored sequence). The combined
    list is shuffled so position carries no information about the source.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    want = round_half_up(beta * k)
    picked: list[SubtaskCandidate] = []
    if want:
        matches = memory.retrieve(context.task_summary_features)
        if not matches:
            logger.warning("memory is empty; generating all %d candidates randomly", k)
        else:
            t = len(context.history) if step is None else step
            take = min(want, len(matches))
            for idx in sorted(rng.choice(len(matches), size=take, replace=False)):
                seq = matches[idx].sequence
                picked.append(seq[min(t, len(seq) - 1)].relabeled(MEMORY))
    while len(picked) < k:
        picked.append(sampler(rng).relabeled(RANDOM))
    order = rng.permutation(len(picked))
    return [picked[i] for i in order]


def pairs_from_steps(steps: Iterable[tuple[Sequence[SubtaskCandidate], Sequence[StepEvaluation], PlanningContext]]
                     ) -> list[PreferencePair]:
    """Build pairs for every step, dropping steps with no preference signal."""
    pairs = []
    for candidates, evals, ctx in steps:
        try:
            pairs.append(make_pair(candidates, evals, ctx))
        except NoSignal:
            logger.debug("dropping step with no preference signal")
    return pairs
