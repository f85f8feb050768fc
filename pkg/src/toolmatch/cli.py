"""Command-line entry point.

Exit codes: 0 success, 2 bad input (usage, parse or config errors), 3 runtime
failure. Every random choice is derived from ``--seed`` (or the
``PERFGUARD_SEED`` environment variable, default 0).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .capability_matrix import PerformanceMatrix, dumps_registry, load_registry, to_csv
from .planner_policy import PlannerPolicy, TrainingTrace, train
from .errors import (
    ArityMismatch,
    DimensionMismatch,
    DuplicateTool,
    InvalidSpec,
    IoError,
    ParseError,
    ToolMatchError,
    RankingMismatch,
    SchemaMismatch,
    UnknownTool,
    WeightSumViolation,
)
from .experiments import default_jobs, load_specs, run_all
from .planning import PlannerScenario, PlanningSimulator, to_pairs, winner_selection_rate
from .selector import PreferenceWeights, Ranking, select
from .updater import AdaptiveUpdater, UpdateConfig

logger = logging.getLogger("toolmatch")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
SEED_ENV = "PERFGUARD_SEED"

# input problems map to exit 2; anything else raised while working is a runtime failure
INPUT_ERRORS = (
    ParseError,
    InvalidSpec,
    SchemaMismatch,
    WeightSumViolation,
    DimensionMismatch,
    DuplicateTool,
    UnknownTool,
    RankingMismatch,
    ArityMismatch,
    IoError,
    FileNotFoundError,
    IsADirectoryError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers -------------------------------------------------------------------


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("toolmatch") / "data" / name))


def resolve_input(path: str) -> Path:
    """A path on disk, or failing that a bundled data file of the same name."""
    p = Path(path)
    if p.exists():
        return p
    candidate = bundled_path(p.name)
    if p.parent == Path(".") and candidate.exists():
        logger.debug("using bundled %s", candidate)
        return candidate
    raise FileNotFoundError(f"no such file: {path}")


def read_json(path: str | Path) -> object:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{path}: line {exc.lineno} column {exc.colno}") from None


def resolve_seed(flag: int | None) -> int | None:
    """Explicit flag first, then the environment; None means "not given"."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def effective_seed(args: argparse.Namespace, file_seed: int | None = None) -> int:
    seed = resolve_seed(args.seed)
    if seed is not None:
        return seed
    return 0 if file_seed is None else int(file_seed)


def parse_weights(matrix: PerformanceMatrix, inline: str | None, file: str | None) -> PreferenceWeights:
    if (inline is None) == (file is None):
        raise UsageError("give exactly one of --weights or --weights-file")
    if file is not None:
        data = read_json(file)
    else:
        text = inline.strip()
        if text.startswith("[") or text.startswith("{"):
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, "--weights") from None
        elif "=" in text:
            data = {}
            for part in text.split(","):
                key, sep, value = part.partition("=")
                if not sep:
                    raise ParseError(f"expected name=value, got {part!r}", "--weights")
                data[key.strip()] = _number(value, "--weights")
        else:
            data = [_number(v, "--weights") for v in text.split(",")]
    if isinstance(data, dict):
        return PreferenceWeights.from_mapping(matrix.dims, {k: _number(v, k) for k, v in data.items()})
    if isinstance(data, list):
        return PreferenceWeights(matrix.dims, [_number(v, "weights") for v in data])
    raise ParseError("weights must be a list or an object", "weights")


def _number(value: object, where: str) -> float:
    if isinstance(value, bool):
        raise ParseError(f"expected a number, got {value!r}", where)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ParseError(f"expected a number, got {value!r}", where) from None


def fmt(x: float) -> str:
    return f"{x:.6f}"


def emit_json(obj: object) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


# -- subcommands ---------------------------------------------------------------


def cmd_select(args: argparse.Namespace) -> int:
    matrix, _ = load_registry(resolve_input(args.registry))
    weights = parse_weights(matrix, args.weights, args.weights_file)
    scores, ranking = select(weights, matrix)
    if args.format == "json":
        emit_json({"scores": scores.as_dict(), "ranking": list(ranking.ordered)})
    elif args.format == "csv":
        print("rank,tool,score")
        for i, tool in enumerate(ranking.ordered, 1):
            print(f"{i},{tool},{fmt(scores.as_dict()[tool])}")
    else:
        values = scores.as_dict()
        width = max(len(t) for t in matrix.tools)
        for i, tool in enumerate(ranking.ordered, 1):
            print(f"{i:>2}  {tool:<{width}}  {fmt(values[tool])}")
    return EXIT_OK


def cmd_update_demo(args: argparse.Namespace) -> int:
    matrix, tools = load_registry(resolve_input(args.registry))
    weights = parse_weights(matrix, args.weights, args.weights_file)
    seed = effective_seed(args)
    try:
        cfg = UpdateConfig(m=args.m, n=args.n, eta=args.eta, rng_seed=seed, renormalize=args.renormalize)
    except ValueError as exc:
        raise InvalidSpec(str(exc)) from None
    updater = AdaptiveUpdater(matrix, cfg)

    def observe(candidates):
        if args.actual is not None:
            order = [t.strip() for t in args.actual.split(",") if t.strip()]
            try:
                return Ranking(tuple(order))
            except ValueError as exc:
                raise RankingMismatch(str(exc)) from None
        # no observation supplied: shuffle the candidates with the seeded rng
        perm = np.random.default_rng([seed, 1]).permutation(len(candidates))
        return Ranking(tuple(candidates.all[i] for i in perm))

    record = updater.round(weights, observe)
    before, after = matrix, updater.matrix
    if args.save:
        Path(args.save).write_text(dumps_registry(after, tools), encoding="utf-8")
    if args.trace:
        updater.write_trace(args.trace)

    if args.format == "json":
        payload = json.loads(record.to_json())
        payload["scores_after"] = {t: [float(x) for x in after.column(t)] for t in record.candidates}
        emit_json(payload)
        return EXIT_OK
    if args.format == "csv":
        print("tool,theory_rank,actual_rank,delta")
        for t in record.candidates:
            print(f"{t},{record.theory_ranking.index(t) + 1},{record.actual_ranking.index(t) + 1},"
                  f"{fmt(record.delta[t])}")
        return EXIT_OK
    print(f"candidates: {', '.join(record.candidates)}")
    print(f"theory:     {', '.join(record.theory_ranking)}")
    print(f"actual:     {', '.join(record.actual_ranking)}")
    print(f"eta:        {fmt(record.eta)}")
    for t in record.candidates:
        shift = np.abs(after.column(t) - before.column(t)).max()
        print(f"  {t}: delta {fmt(record.delta[t])}  max |change| {fmt(float(shift))}")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    path = resolve_input(args.spec)
    data = read_json(path)
    if not isinstance(data, dict):
        raise InvalidSpec("experiment spec must be a JSON object")
    seed = effective_seed(args, data.get("seed"))
    out = args.out if args.out is not None else data.get("output_dir") or "results"
    specs = load_specs(path, output_dir=out, seed=seed)
    results, comparison = run_all(specs, jobs=args.jobs)
    if args.format == "json":
        emit_json({
            "results": [r.summary() for r in results],
            "comparison": comparison.to_dict() if comparison else None,
        })
    elif args.format == "csv":
        print("name,strategy,final_error,auc,config_hash")
        for r in results:
            print(f"{r.name},{r.strategy},{fmt(r.final_error)},{fmt(r.auc)},{r.config_hash}")
    else:
        for r in results:
            print(f"{r.name}: strategy {r.strategy}, final error {fmt(r.final_error)}, "
                  f"auc {fmt(r.auc)}, config {r.config_hash}")
            for key, value in r.extras.items():
                print(f"  {key}: {fmt(value)}")
        if comparison is not None:
            print()
            print(comparison.table())
        print(f"outputs written to {out}")
    return EXIT_OK


def cmd_train_planner(args: argparse.Namespace) -> int:
    raw = {} if args.scenario is None else read_json(resolve_input(args.scenario))
    if not isinstance(raw, dict):
        raise InvalidSpec("scenario must be a JSON object")
    raw = dict(raw)
    raw["seed"] = effective_seed(args, raw.get("seed"))
    if args.steps is not None:
        raw["descent_steps"] = args.steps
    scenario = PlannerScenario.from_dict(raw)

    out = Path(args.out)
    if not out.is_dir():
        if not out.parent.is_dir():
            raise IoError(f"cannot create {out}: parent directory does not exist")
        out.mkdir()

    sim = PlanningSimulator(scenario)
    pairs = to_pairs(sim.collect(scenario.train_tasks))
    if not pairs:
        raise InvalidSpec("scenario produced no preference pairs")
    start = 0
    if args.resume:
        policy, extra = PlannerPolicy.load(args.resume)
        saved = extra.get("scenario")
        if saved is not None and _without_budget(saved) != _without_budget(scenario.to_dict()):
            raise InvalidSpec("checkpoint was trained on a different scenario")
        if policy.F != scenario.F:
            raise InvalidSpec(f"checkpoint has F={policy.F}, scenario needs {scenario.F}")
        start = int(extra.get("step", 0))
    else:
        policy = PlannerPolicy.initial(scenario.F, scenario.alpha)

    trace = TrainingTrace()
    policy = train(pairs, policy, scenario.lr, scenario.descent_steps, trace=trace, start_step=start)
    end = start + scenario.descent_steps
    trace.write_csv(out / "loss.csv")
    policy.save(out / "policy.json", step=end, scenario=scenario.to_dict())

    heldout = sim.heldout().collect(scenario.heldout_tasks) if scenario.heldout_tasks else []
    summary = {
        "pairs": len(pairs),
        "start_step": start,
        "end_step": end,
        "initial_loss": float(trace.losses[0]),
        "final_loss": float(trace.losses[-1]),
        "winner_rate": winner_selection_rate(heldout, policy),
        "reference_winner_rate": winner_selection_rate(heldout, policy, reference=True),
    }
    if args.format == "json":
        emit_json(summary)
    elif args.format == "csv":
        print(",".join(summary))
        print(",".join(str(v) if isinstance(v, int) else fmt(v) for v in summary.values()))
    else:
        print(f"pairs: {summary['pairs']}  steps {start}..{end}")
        print(f"mean loss: {fmt(summary['initial_loss'])} -> {fmt(summary['final_loss'])}")
        print(f"held-out winner selection: {fmt(summary['winner_rate'])} "
              f"(reference {fmt(summary['reference_winner_rate'])})")
        print(f"wrote {out / 'loss.csv'} and {out / 'policy.json'}")
    return EXIT_OK


def _without_budget(scenario: dict) -> dict:
    # the descent budget may change between a run and its continuation
    return {k: v for k, v in scenario.items() if k != "descent_steps"}


def cmd_registry(args: argparse.Namespace) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        matrix, tools = load_registry(resolve_input(args.path))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.action == "validate":
        if args.format == "json":
            emit_json({"valid": True, "tools": len(matrix.tools), "dimensions": len(matrix.dims),
                       "category": matrix.dims.category.value, "degenerate": matrix.degenerate_dims()})
        else:
            print(f"ok: {len(matrix.tools)} tools x {len(matrix.dims)} dimensions "
                  f"({matrix.dims.category.value})")
        return EXIT_OK
    if args.format == "json":
        sys.stdout.write(dumps_registry(matrix, tools))
    elif args.format == "csv":
        sys.stdout.write(to_csv(matrix))
    else:
        width = max(len(n) for n in matrix.dims.names)
        print(" " * width + "  " + "  ".join(f"{t:>10}" for t in matrix.tools))
        for i, name in enumerate(matrix.dims.names):
            print(f"{name:<{width}}  " + "  ".join(f"{fmt(v):>10}" for v in matrix.scores[i]))
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommand copies use SUPPRESS so they do not clobber values given before the subcommand
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default,
                        help=f"random seed (default: ${SEED_ENV} or 0)")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0,
                        help="more logging; repeat for debug output")
    parser.add_argument("--format", choices=("text", "csv", "json"),
                        default=argparse.SUPPRESS if suppress else "text", help="output format")


def _weights_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--weights", help="inline weights: 'a=0.5,b=0.5', '0.5,0.5' or a JSON list/object")
    parser.add_argument("--weights-file", help="JSON file holding a weight list or name->weight object")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toolmatch", description="Capability-matrix tool selection and planner training.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("select", help="score and rank tools for one weight vector")
    _global_options(p, suppress=True)
    p.add_argument("registry")
    _weights_options(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("update-demo", help="run one update round and print the direction coefficients")
    _global_options(p, suppress=True)
    p.add_argument("registry")
    _weights_options(p)
    p.add_argument("--actual", help="observed order of the candidates, best first, comma separated")
    p.add_argument("--eta", type=float, default=0.13)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--renormalize", choices=("lazy", "eager"), default="lazy")
    p.add_argument("--save", help="write the updated registry here")
    p.add_argument("--trace", help="write the step record (JSON lines) here")
    p.set_defaults(func=cmd_update_demo)

    p = sub.add_parser("experiment", help="run an experiment spec and write CSV series and summaries")
    _global_options(p, suppress=True)
    p.add_argument("spec", help="spec JSON path, or the name of a bundled spec such as eta_sweep.json")
    p.add_argument("--out", help="output directory (default: output_dir from the experiment file, else ./results)")
    p.add_argument("--jobs", type=int, default=default_jobs(), help="parallel trials (default: logical cores)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("train-capo", help="train the planner policy on simulated preference pairs")
    _global_options(p, suppress=True)
    p.add_argument("scenario", nargs="?", help="scenario JSON (default: built-in defaults)")
    p.add_argument("--out", default="planner_out", help="directory for loss.csv and policy.json")
    p.add_argument("--steps", type=int, help="descent steps (overrides the scenario)")
    p.add_argument("--resume", help="continue from this policy checkpoint")
    p.set_defaults(func=cmd_train_planner)

    p = sub.add_parser("registry", help="validate or show a registry file")
    _global_options(p, suppress=True)
    p.add_argument("action", choices=("validate", "show"))
    p.add_argument("path")
    p.set_defaults(func=cmd_registry)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("toolmatch").setLevel(level)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    if getattr(args, "jobs", 1) < 1:
        print("toolmatch: error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"toolmatch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INPUT_ERRORS as exc:
        print(f"toolmatch: error: {type(exc).__name__}: {_message(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except (ToolMatchError, OSError, ValueError, ArithmeticError) as exc:
        print(f"toolmatch: runtime failure: {type(exc).__name__}: {_message(exc)}", file=sys.stderr)
        return EXIT_RUNTIME


def _message(exc: BaseException) -> str:
    # KeyError subclasses repr their argument; show it plain
    return str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)


if __name__ == "__main__":
    sys.exit(main())
