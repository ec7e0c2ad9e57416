"""Command-line entry point: ``mbo-settle solve`` and ``mbo-settle oracle``.

Exit codes: 0 on success, 1 for an unusable instance or configuration, 2 for
bad command-line usage (argparse).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import hybrid_driver as hd
from . import oracle as oracle_mod
from .settlement import InvalidInstance, SettlementInstance, builtin_instance, load_instance, to_mbo

_log = logging.getLogger("mbo_settle")

HISTOGRAM_COLUMNS = (
    "bitstring", "count", "probability", "objective_settled_count", "penalized_objective", "feasible",
)
TRACE_COLUMNS = ("eval_index", "cvar_value", "best_feasible_value", "phase", "cycle")


class ConfigError(Exception):
    """Raised for problems that should end the command with exit code 1."""


def _noise(text: str) -> tuple[float, float]:
    try:
        p01, p10 = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'p01,p10', got {text!r}") from None
    return p01, p10


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbo-settle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def instance_args(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--instance", type=Path, metavar="PATH", help="instance JSON file")
        src.add_argument("--case", type=int, choices=(1, 2, 3), help="built-in instance")
        p.add_argument("--out", type=Path, default=Path("."), metavar="DIR", help="output directory")

    solve = sub.add_parser("solve", help="run the hybrid solver")
    instance_args(solve)
    solve.add_argument("--ansatz", choices=("he", "qaoa"), default="he")
    solve.add_argument("--depth", type=int, default=2, help="entangling blocks of the hardware-efficient ansatz")
    solve.add_argument("--layers", type=int, default=1, help="QAOA layers")
    solve.add_argument("--shots", type=int, default=8192)
    solve.add_argument("--alpha", type=float, default=0.25, help="CVaR fraction in (0, 1]")
    solve.add_argument("--lambda", dest="lam", type=float, default=1000.0, help="penalty weight")
    solve.add_argument("--iters", type=int, default=150, help="evaluations of a direct solve (--cycles 0)")
    solve.add_argument("--cycles", type=int, default=0, help="heuristic cycles; 0 runs a direct solve")
    solve.add_argument("--iters-joint", type=int, default=100)
    solve.add_argument("--iters-theta", type=int, default=100)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--noise", type=_noise, metavar="P01,P10", help="synthetic readout flip probabilities")
    solve.add_argument("--mitigate", action="store_true", help="invert the readout noise before scoring")
    solve.add_argument("--rhobeg", type=float, default=0.5, help="initial trust-region radius")
    solve.add_argument("--rhoend", type=float, default=1e-4, help="final trust-region radius")
    solve.add_argument("--early-stop", action="store_true", help="stop cycling when a cycle brings no improvement")
    solve.add_argument("--restarts", type=int, default=1, help="independent runs with seeds SEED..SEED+R-1")
    solve.add_argument("--compare-oracle", action="store_true", help="add the exact optimum to the report")
    solve.set_defaults(func=cmd_solve)

    orc = sub.add_parser("oracle", help="exact optimum by enumeration")
    instance_args(orc)
    orc.set_defaults(func=cmd_oracle)
    return parser


def _load(args) -> SettlementInstance:
    if args.case is not None:
        return builtin_instance(args.case)
    try:
        return load_instance(args.instance)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.instance}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.instance} is not valid JSON: {exc}") from exc


def _config(args) -> hd.RunConfig:
    if args.restarts < 1:
        raise ConfigError("--restarts must be >= 1")
    return hd.RunConfig(
        ansatz=hd.HE if args.ansatz == "he" else hd.QAOA,
        depth=args.depth,
        layers=args.layers,
        shots=args.shots,
        alpha=args.alpha,
        lam=args.lam,
        iters=args.iters,
        cycles=args.cycles,
        iters_joint=args.iters_joint,
        iters_theta=args.iters_theta,
        seed=args.seed,
        noise=args.noise,
        mitigate=args.mitigate,
        rhobeg=args.rhobeg,
        rhoend=args.rhoend,
        early_stop=args.early_stop,
    )


def _solve_one(instance: SettlementInstance, config: hd.RunConfig) -> hd.RunResult:
    return hd.run(to_mbo(instance, config.lam), config)


def _run_score(result: hd.RunResult):
    best = result.best
    return (not best.feasible, -best.raw_objective, result.trace.best_feasible, result.config.seed)


def histogram_rows(result: hd.RunResult) -> list[dict]:
    counts = result.samples.counts
    rows = []
    for c in result.candidates:
        k = sum(int(b) << q for q, b in enumerate(c.bitstring))
        rows.append({
            "bitstring": c.bitstring,
            "count": int(counts[k]),
            "probability": c.probability,
            "objective_settled_count": c.raw_objective,
            "penalized_objective": c.penalized_objective,
            "feasible": int(c.feasible),
        })
    return rows


def trace_rows(result: hd.RunResult) -> list[dict]:
    return [
        {
            "eval_index": r.eval_index,
            "cvar_value": r.cvar_value,
            "best_feasible_value": r.best_feasible_value,
            "phase": r.phase,
            "cycle": r.cycle,
        }
        for r in result.trace.rows
    ]


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _json_safe(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _write_json(path: Path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(data), fh, indent=2)
        fh.write("\n")


def cmd_solve(args) -> int:
    instance = _load(args)
    config = _config(args)
    problem = to_mbo(instance, config.lam)
    started = time.perf_counter()
    configs = [replace(config, seed=config.seed + r) for r in range(args.restarts)]
    if len(configs) == 1:
        results = [hd.run(problem, config)]
    else:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_solve_one, [instance] * len(configs), configs))
    result = min(results, key=_run_score)
    elapsed = time.perf_counter() - started

    args.out.mkdir(parents=True, exist_ok=True)
    hist = histogram_rows(result)
    trace = trace_rows(result)
    _write_csv(args.out / "histogram.csv", HISTOGRAM_COLUMNS, hist)
    _write_csv(args.out / "trace.csv", TRACE_COLUMNS, trace)
    report = {
        "instance": instance.name or (str(args.instance) if args.instance else f"case{args.case}"),
        "config": result.config.to_dict(),
        "seed": result.config.seed,
        "restarts": [{"seed": r.config.seed, "best": r.best.to_dict(), "best_feasible_trace": r.trace.best_feasible}
                     for r in results],
        "labels": list(problem.labels),
        "best": result.best.to_dict(),
        "candidates": [c.to_dict() for c in result.candidates],
        "histogram": hist,
        "trace": trace,
        "optimizer_status": result.statuses,
        "wall_clock_seconds": elapsed,
    }
    if args.compare_oracle:
        exact = oracle_mod.enumerate_solutions(instance)
        report["oracle"] = {
            "optimum": exact.optimum,
            "optimal": list(exact.optimal),
            "best_is_optimal": result.best.feasible and result.best.bitstring in exact.optimal,
        }
    _write_json(args.out / "report.json", report)
    best = result.best
    print(
        f"best {best.bitstring} settled={best.raw_objective:g} feasible={best.feasible} "
        f"p={best.probability:.4f} ({elapsed:.2f}s) -> {args.out}"
    )
    return 0


def cmd_oracle(args) -> int:
    instance = _load(args)
    try:
        result = oracle_mod.enumerate_solutions(instance)
    except oracle_mod.InstanceTooLarge as exc:
        raise ConfigError(str(exc)) from exc
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "oracle.json", result.to_dict())
    shown = ", ".join(b or '""' for b in result.optimal)
    print(f"optimum {result.optimum:g}; {len(result.optimal)} optimal: {shown}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidInstance, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
