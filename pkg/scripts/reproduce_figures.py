"""Write the data behind every experiment figure into one directory.

    python scripts/reproduce_figures.py --out results --runs 1000

Each experiment lands in its own subdirectory with records, summary.csv,
.dat series and a plots.gp script for gnuplot.
"""

import argparse
from pathlib import Path

from evcharge.experiments import ExperimentSpec, exit_code, run_experiment, summarize

EXPERIMENTS = {
    "price_vs_n": dict(kind="sweep-n", n_values=(5, 10, 15, 20, 25), capacities=(60.0, 80.0, 90.0, 99.0)),
    "price_vs_capacity": dict(kind="sweep-capacity", n_values=(10,), capacities=(60.0, 80.0, 90.0)),
    "compare": dict(kind="compare", n_values=(10, 5, 15, 20, 25), capacities=(99.0,)),
    "dynamic": dict(kind="dynamic", n_values=(5,), capacities=(66.0,), slots=8),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--dynamic-runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="+", choices=sorted(EXPERIMENTS))
    args = ap.parse_args()

    worst = 0
    for name, kw in EXPERIMENTS.items():
        if args.only and name not in args.only:
            continue
        kw = dict(kw)
        kind = kw.pop("kind")
        runs = args.dynamic_runs if kind == "dynamic" else args.runs
        spec = ExperimentSpec.defaults(kind, runs=runs, seed=args.seed, workers=args.workers,
                                       output_path=str(Path(args.out) / name), **kw)
        _, records = run_experiment(spec)
        worst = max(worst, exit_code(records))
        print(f"== {name} ({kind}, {runs} runs) -> {spec.output_path}")
        for row in summarize(records):
            extra = f"  vs PSO {row['ratio_pso']:.3f}  vs ED {row['ratio_ed']:.3f}" if "ratio_ed" in row else ""
            where = f"slot {row['slot']}" if "slot" in row else f"N={row['N']:>2} C={row['C']:g}"
            print(f"  {where}: p* {row['p_star_mean']:8.4f}  iters {row['iters_mean']:6.2f}/{row['iters_max']:.0f}{extra}")
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
