"""Command-line entry point: ``evcharge <subcommand> ...``.

Exit status: 0 success, 1 input error, 2 solver non-convergence,
3 internal consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from evcharge.experiments import (
    INPUT_ERROR,
    INTERNAL_ERROR,
    KINDS,
    NONCONVERGENCE,
    OK,
    RunRecord,
    ExperimentSpec,
    InputError,
    exit_code,
    fmt,
    load_scenario,
    record_header,
    record_row,
    run_experiment,
    summarize,
)
from evcharge.model import Scenario, utilities
from evcharge.stackelberg import ConsistencyError, DegenerateScenario, gse_solve
from evcharge.vi import GeometryError, LineSearchError, NonConvergence, SolverConfig


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--redistribute-ed", action="store_true", help="ED hands capped leftovers to unsatiated PEVGs")
    p.add_argument("--workers", type=int, default=None, help="worker processes for Monte-Carlo runs")
    p.add_argument("--timing", action="store_true", help="also write timing.csv (not deterministic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evcharge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="equilibrium and optimal price for one scenario file")
    p.add_argument("scenario")
    p.add_argument("--trace", action="store_true", help="write per-iteration convergence data")
    _common(p)

    p = sub.add_parser("run", help="run an experiment file (declares kind = ...)")
    p.add_argument("experiment")
    _common(p)

    for kind in KINDS[1:]:
        p = sub.add_parser(kind, help=f"{kind} Monte-Carlo experiment")
        p.add_argument("--config", help="experiment file; command-line flags override it")
        p.add_argument("--n-values", type=int, nargs="+", default=None)
        p.add_argument("--capacities", type=float, nargs="+", default=None)
        p.add_argument("--initial-price", type=float, default=None)
        if kind == "dynamic":
            p.add_argument("--slots", type=int, default=None)
        _common(p)
    return parser


def _solver(args, base: SolverConfig) -> SolverConfig:
    kw = {}
    if args.tol is not None:
        kw["tol"] = args.tol
    if args.max_iter is not None:
        kw["max_iter"] = args.max_iter
    return replace(base, **kw)


def _apply_overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    kw = {"solver": _solver(args, spec.solver)}
    for attr, key in (("seed", "seed"), ("runs", "runs"), ("out", "output_path"), ("workers", "workers"),
                      ("initial_price", "initial_price"), ("slots", "slots")):
        value = getattr(args, attr, None)
        if value is not None:
            kw[key] = value
    for attr in ("n_values", "capacities"):
        value = getattr(args, attr, None)
        if value is not None:
            kw[attr] = tuple(value)
    if args.redistribute_ed:
        kw["redistribute_ed"] = True
    return replace(spec, **kw)


def _write_trace(path: Path, scenario: Scenario, outcome) -> None:
    n = scenario.n
    with open(path, "w") as fh:
        cols = ["iter", "price", "residual"] + [f"x_{i}" for i in range(1, n + 1)]
        cols += [f"u_{i}" for i in range(1, n + 1)] + [f"lambda_{i}" for i in range(1, n + 1)]
        fh.write("# " + " ".join(cols) + "\n")
        k = 0
        for phase in outcome.phases:
            for it in phase.trace:
                u = utilities(scenario, it.x, phase.price)
                vals = [k, phase.price, it.residual, *it.x, *u, *it.lambdas]
                fh.write(" ".join(fmt(v) for v in vals) + "\n")
                k += 1


def cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    if isinstance(scenario, ExperimentSpec):
        raise InputError(f"{args.scenario}: experiment file given to 'solve'; use 'run'")
    cfg = _solver(args, SolverConfig())
    outcome = gse_solve(scenario, cfg, record=args.trace)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(
        run=0, n=scenario.n, capacity=scenario.capacity, p_star=outcome.p_star, lam=outcome.initial_lambda,
        iters=outcome.iterations_total, sum_x=outcome.total_demand, x=outcome.x_star, u=outcome.utilities,
    )
    with open(out / "solve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(record_header(scenario.n, False, False))
        w.writerow(record_row(rec, False, False))
    if args.trace:
        _write_trace(out / "trace.dat", scenario, outcome)
    print(f"p* = {outcome.p_star:.6f}  sum x = {outcome.total_demand:.6f} / C = {scenario.capacity:g}")
    print(f"revenue = {outcome.revenue:.6f}  joint utility = {outcome.joint_utility:.6f}  iterations = {outcome.iterations_total}")
    for i, (x, u) in enumerate(zip(outcome.x_star, outcome.utilities), 1):
        print(f"  PEVG {i}: x = {x:.6f}  u = {u:.6f}")
    return OK


def _report(spec: ExperimentSpec, records) -> None:
    for row in summarize(records):
        where = f"N={row['N']} C={row['C']:g}" + (f" slot={row['slot']}" if "slot" in row else "")
        line = (f"{where}: p* {row['p_star_mean']:.4f} +/- {row['p_star_std']:.4f}, "
                f"iters avg {row['iters_mean']:.1f} max {row['iters_max']:.0f}")
        if "ratio_pso" in row:
            line += f", utility ratio vs PSO {row['ratio_pso']:.3f}, vs ED {row['ratio_ed']:.3f}"
        if row["failures"]:
            line += f", {row['failures']} failed"
        print(line)
    if spec.kind in ("compare", "dynamic"):
        print(f"ED leftover redistribution: {'on' if spec.redistribute_ed else 'off'}")


def cmd_experiment(args) -> int:
    if args.command == "run":
        spec = load_scenario(args.experiment)
        if not isinstance(spec, ExperimentSpec):
            raise InputError(f"{args.experiment}: no 'kind' key; use 'solve' for scenario files")
    elif args.config:
        spec = load_scenario(args.config)
        if not isinstance(spec, ExperimentSpec):
            raise InputError(f"{args.config}: no 'kind' key")
        if spec.kind != args.command:
            raise InputError(f"{args.config}: kind {spec.kind!r} does not match subcommand {args.command!r}")
    else:
        spec = ExperimentSpec.defaults(args.command)
    try:
        spec = _apply_overrides(spec, args)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    paths, records = run_experiment(spec, timing=args.timing)
    _report(spec, records)
    print(f"wrote {len(paths)} files to {spec.output_path}")
    return exit_code(records)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args)
        return cmd_experiment(args)
    except (InputError, DegenerateScenario) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NONCONVERGENCE
    except (ConsistencyError, LineSearchError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INTERNAL_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
