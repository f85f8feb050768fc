"""Scripted selection-error experiments on the simulated ecosystem.

Each spec names one strategy and runs it on ``repeats`` independent trials
(seeds ``seed .. seed + repeats - 1``). All strategies draw tasks, execution
noise and baseline noise from the same per-seed streams, so two strategies run
with the same seed face the identical task sequence.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .planner_policy import PlannerPolicy, TrainingTrace, train
from .errors import InvalidSpec, IoError, ShapeMismatch
from .planning import PlannerScenario, PlanningSimulator, to_pairs, winner_selection_rate
from .selector import rank, score
from .simulator import (
    STREAM_BASELINE,
    STREAM_EXECUTION,
    STREAM_EXPLORATION,
    STREAM_TASKS,
    ScenarioConfig,
    TaskGenerator,
    build_ecosystem,
    execute,
    oracle_best,
    oracle_ranking,
    trial_rng,
)
from .updater import AdaptiveUpdater, UpdateConfig

logger = logging.getLogger(__name__)

STRATEGIES = ("static_matrix", "apu", "apu_plus_capo", "random_baseline", "description_proxy")
MA_WINDOW = 50
FINAL_WINDOW = 200
# noise on the scalar "description quality" prior, and on each step's reading of it
DESCRIPTION_PRIOR_NOISE = 0.05
DESCRIPTION_STEP_NOISE = 0.05


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    strategy: str
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    repeats: int = 10
    output_dir: str | None = None
    seed: int = 0
    eta: float = 0.13
    m: int = 2
    n: int = 1
    renormalize: str = "lazy"
    planner: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidSpec("experiment name must be non-empty")
        if self.strategy not in STRATEGIES:
            raise InvalidSpec(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not isinstance(self.repeats, int) or self.repeats < 1:
            raise InvalidSpec("repeats must be a positive integer")
        try:
            self.update_config()
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from None
        if self.strategy == "apu_plus_capo":
            self.planner_scenario(self.seed)

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(range(self.seed, self.seed + self.repeats))

    def update_config(self) -> UpdateConfig:
        return UpdateConfig(m=self.m, n=self.n, eta=self.eta, renormalize=self.renormalize)

    def planner_scenario(self, seed: int) -> PlannerScenario:
        sc = self.scenario
        base = {"n_tools": sc.n_tools, "n_dims": sc.n_dims, "noise_sigma": sc.noise_sigma,
                "cap_profile": sc.cap_profile}
        return PlannerScenario.from_dict({**base, **self.planner, "seed": seed})

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "strategy": self.strategy,
            "scenario": self.scenario.to_dict(),
            "repeats": self.repeats,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "eta": self.eta,
            "m": self.m,
            "n": self.n,
            "renormalize": self.renormalize,
            "planner": dict(self.planner),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown experiment fields: {sorted(unknown)}")
        data = dict(data)
        if "scenario" in data:
            if not isinstance(data["scenario"], dict):
                raise InvalidSpec("scenario must be an object")
            data["scenario"] = ScenarioConfig.from_dict(data["scenario"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    def config_hash(self) -> str:
        """Digest of everything that affects the numbers (not name or output location)."""
        payload = self.to_dict()
        del payload["name"], payload["output_dir"]
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    name: str
    strategy: str
    seeds: tuple[int, ...]
    errors: np.ndarray = field(repr=False)  # repeats x steps, 0/1 per step
    config_hash: str = ""
    loss_curve: np.ndarray | None = field(default=None, repr=False)
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.errors = np.asarray(self.errors, dtype=float)
        if self.errors.ndim != 2 or self.errors.shape[0] != len(self.seeds):
            raise ShapeMismatch("errors must be a repeats x steps array")

    @property
    def steps(self) -> int:
        return self.errors.shape[1]

    @property
    def per_step_error(self) -> np.ndarray:
        """Error rate over repeats at each step."""
        return self.errors.mean(axis=0)

    def moving_average(self) -> np.ndarray:
        """Per-seed trailing moving average of the error indicator."""
        return np.stack([moving_average(row, MA_WINDOW) for row in self.errors])

    def per_seed_final_error(self, window: int = FINAL_WINDOW) -> np.ndarray:
        return self.errors[:, -min(window, self.steps):].mean(axis=1)

    def per_seed_auc(self) -> np.ndarray:
        return self.moving_average().sum(axis=1)

    @property
    def final_error(self) -> float:
        return float(self.per_seed_final_error().mean())

    @property
    def auc(self) -> float:
        return float(self.per_seed_auc().mean())

    def summary(self) -> dict:
        out = {
            "name": self.name,
            "strategy": self.strategy,
            "final_error": self.final_error,
            "auc": self.auc,
            "seeds": list(self.seeds),
            "config_hash": self.config_hash,
        }
        out.update(self.extras)
        return out

    def write_csv(self, path: str | Path) -> None:
        ma = self.moving_average()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "strategy", "seed", "error", "ma50_error"])
            for i, seed in enumerate(self.seeds):
                for t in range(self.steps):
                    w.writerow([t, self.strategy, seed, int(self.errors[i, t]), repr(float(ma[i, t]))])


def moving_average(x: np.ndarray, window: int = MA_WINDOW) -> np.ndarray:
    """Trailing mean over the last ``window`` values (fewer at the start)."""
    x = np.asarray(x, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


# -- one trial -----------------------------------------------------------------


def _trial(spec: ExperimentSpec, seed: int) -> tuple[np.ndarray, dict]:
    cfg = spec.scenario
    eco = build_ecosystem(cfg, seed)
    tasks = TaskGenerator(eco.dims, trial_rng(seed, STREAM_TASKS), cfg.task_concentration)
    exec_rng = trial_rng(seed, STREAM_EXECUTION)
    base_rng = trial_rng(seed, STREAM_BASELINE)
    ids = eco.tool_ids
    errors = np.zeros(cfg.steps)
    extra: dict[str, Any] = {}

    if spec.strategy in ("apu", "apu_plus_capo"):
        updater = AdaptiveUpdater(eco.initial_matrix, spec.update_config(), trial_rng(seed, STREAM_EXPLORATION))
        for t in range(cfg.steps):
            task = tasks()
            best = oracle_best(task, eco.tools)

            def observe(cands, task=task):
                outcomes = [execute(eco.tool(tid), task, exec_rng) for tid in cands.all]
                return oracle_ranking(cands, outcomes, ids)

            errors[t] = updater.round(task.weights, observe, best).error_flag
        if spec.strategy == "apu_plus_capo":
            extra = _train_planner(spec, seed, eco, updater.matrix)
        return errors, extra

    if spec.strategy == "description_proxy":
        prior = np.array([tool.true_caps.mean() for tool in eco.tools])
        prior = prior + DESCRIPTION_PRIOR_NOISE * base_rng.standard_normal(len(ids))

    for t in range(cfg.steps):
        task = tasks()
        best = oracle_best(task, eco.tools)
        if spec.strategy == "static_matrix":
            chosen = rank(score(task.weights, eco.initial_matrix)).top
        elif spec.strategy == "random_baseline":
            chosen = ids[int(base_rng.integers(len(ids)))]
        else:
            reading = prior + DESCRIPTION_STEP_NOISE * base_rng.standard_normal(len(ids))
            chosen = ids[int(np.argmax(reading))]
        errors[t] = chosen != best
    return errors, extra


def _train_planner(spec: ExperimentSpec, seed: int, eco, matrix) -> dict:
    sc = spec.planner_scenario(seed)
    sim = PlanningSimulator(sc, ecosystem=eco, matrix=matrix, seed=seed)
    pairs = to_pairs(sim.collect(sc.train_tasks))
    policy = PlannerPolicy.initial(sc.F, sc.alpha)
    trace = TrainingTrace()
    policy = train(pairs, policy, sc.lr, sc.descent_steps, trace=trace)
    heldout = sim.heldout().collect(sc.heldout_tasks)
    return {
        "loss": trace.losses,
        "winner_rate": winner_selection_rate(heldout, policy),
        "reference_winner_rate": winner_selection_rate(heldout, policy, reference=True),
    }


def _trial_job(args: tuple[dict, int]) -> tuple[np.ndarray, dict]:
    spec_dict, seed = args
    return _trial(ExperimentSpec.from_dict(spec_dict), seed)


def default_jobs() -> int:
    return os.cpu_count() or 1


def run(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    """Run every repeat of ``spec``; write outputs if ``output_dir`` is set.

    Results do not depend on ``jobs``: every trial owns its random streams
    and outcomes are gathered in seed order.
    """
    out_dir = _prepare_output(spec.output_dir) if spec.output_dir else None
    seeds = spec.seeds
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
            trials = list(pool.map(_trial_job, [(spec.to_dict(), s) for s in seeds]))
    else:
        trials = [_trial(spec, s) for s in seeds]
    errors = np.stack([e for e, _ in trials])
    result = ExperimentResult(spec.name, spec.strategy, seeds, errors, spec.config_hash())
    if spec.strategy == "apu_plus_capo":
        result.loss_curve = np.mean([x["loss"] for _, x in trials], axis=0)
        result.extras = {
            "planner_final_loss": float(result.loss_curve[-1]),
            "planner_winner_rate": float(np.mean([x["winner_rate"] for _, x in trials])),
            "planner_reference_winner_rate": float(np.mean([x["reference_winner_rate"] for _, x in trials])),
        }
    logger.info("%s: final error %.4f, auc %.2f", spec.name, result.final_error, result.auc)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _prepare_output(path: str | Path) -> Path:
    out = Path(path)
    if out.is_dir():
        return out
    if out.exists():
        raise IoError(f"output path {out} exists and is not a directory")
    if not out.parent.is_dir():
        raise IoError(f"cannot create {out}: parent directory does not exist")
    try:
        out.mkdir()
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from None
    return out


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    written = [out / f"{result.name}.csv", out / f"{result.name}.summary.json"]
    try:
        result.write_csv(written[0])
        written[1].write_text(json.dumps(result.summary(), indent=2) + "\n", encoding="utf-8")
        if result.loss_curve is not None:
            loss_path = out / f"{result.name}.loss.csv"
            with open(loss_path, "w", encoding="utf-8") as fh:
                fh.write("step,mean_loss\n")
                fh.writelines(f"{i},{float(v)!r}\n" for i, v in enumerate(result.loss_curve))
            written.append(loss_path)
    except OSError as exc:
        raise IoError(f"cannot write results to {out}: {exc}") from None
    return written


# -- spec files ----------------------------------------------------------------


def expand_specs(data: dict, output_dir: str | None = None, seed: int | None = None) -> list[ExperimentSpec]:
    """Expand a spec document into concrete specs.

    Besides the plain fields, a document may carry ``strategies`` (a list run
    side by side) and ``sweep`` (a mapping from one field to a list of
    values). Each expanded spec is named ``<name>-<strategy>`` or
    ``<name>-<field><value>``.
    """
    if not isinstance(data, dict):
        raise InvalidSpec("experiment spec must be a JSON object")
    data = dict(data)
    strategies = data.pop("strategies", None)
    sweep = data.pop("sweep", None)
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    if seed is not None:
        data["seed"] = int(seed)
    if strategies is not None and "strategy" in data:
        raise InvalidSpec("give either strategy or strategies, not both")
    variants: list[dict] = [data]
    if strategies is not None:
        if not isinstance(strategies, list) or not strategies:
            raise InvalidSpec("strategies must be a non-empty list")
        variants = [{**data, "name": f"{data.get('name', '')}-{s}", "strategy": s} for s in strategies]
    if sweep is not None:
        if not isinstance(sweep, dict) or len(sweep) != 1:
            raise InvalidSpec("sweep must map exactly one field to a list of values")
        (key, values), = sweep.items()
        if not isinstance(values, list) or not values:
            raise InvalidSpec("sweep values must be a non-empty list")
        variants = [{**v, "name": f"{v.get('name', '')}-{key}{val}", key: val} for v in variants for val in values]
    return [ExperimentSpec.from_dict(v) for v in variants]


def load_specs(path: str | Path, output_dir: str | None = None, seed: int | None = None) -> list[ExperimentSpec]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return expand_specs(data, output_dir, seed)


# -- comparison ----------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    names: tuple[str, ...]
    final_error: dict[str, float]
    auc: dict[str, float]
    # wins[a][b]: seeds where a's final error is strictly below b's
    wins: dict[str, dict[str, int]]
    # mean final-error difference a - b over seeds
    differences: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {"names": list(self.names), "final_error": self.final_error, "auc": self.auc,
                "wins": self.wins, "differences": self.differences}

    def table(self) -> str:
        width = max(len(n) for n in self.names)
        lines = [f"{'name':<{width}}  final_error  auc"]
        lines += [f"{n:<{width}}  {self.final_error[n]:.6f}  {self.auc[n]:.6f}" for n in self.names]
        return "\n".join(lines)


def compare(results: Sequence[ExperimentResult]) -> Comparison:
    if not results:
        raise InvalidSpec("nothing to compare")
    shape = results[0].errors.shape
    for r in results[1:]:
        if r.errors.shape != shape:
            raise ShapeMismatch(f"{r.name} has shape {r.errors.shape}, expected {shape}")
    names = tuple(r.name for r in results)
    if len(set(names)) != len(names):
        raise InvalidSpec("result names must be unique")
    finals = {r.name: r.per_seed_final_error() for r in results}
    wins = {a: {b: int(np.sum(finals[a] < finals[b])) for b in names} for a in names}
    diffs = {a: {b: float(np.mean(finals[a] - finals[b])) for b in names} for a in names}
    return Comparison(
        names,
        {r.name: r.final_error for r in results},
        {r.name: r.auc for r in results},
        wins,
        diffs,
    )


def run_all(specs: Sequence[ExperimentSpec], jobs: int = 1) -> tuple[list[ExperimentResult], Comparison | None]:
    results = [run(s, jobs) for s in specs]
    comparison = None
    if len(results) > 1:
        try:
            comparison = compare(results)
        except ShapeMismatch:
            logger.warning("results have different shapes; skipping comparison")
    if comparison is not None and specs[0].output_dir:
        base = specs[0].name.rsplit("-", 1)[0] or "comparison"
        path = Path(specs[0].output_dir) / f"{base}.comparison.json"
        try:
            path.write_text(json.dumps(comparison.to_dict(), indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from None
    return results, comparison
