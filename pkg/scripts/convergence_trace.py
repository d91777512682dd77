"""Per-iteration demands, utilities and multipliers for one N=5 instance.

    python scripts/convergence_trace.py --seed 0 --out trace.dat

Columns: iteration, residual, x_1..x_5, u_1..u_5, lambda_1..lambda_5 at
the opening price, then the same at the optimal price.  The per-PEVG
multipliers b - s*x - p agree once the equilibrium is reached.
"""

import argparse

import numpy as np

from evcharge.model import Scenario, utilities
from evcharge.stackelberg import gse_solve
from evcharge.vi import ss_solve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--out", default="trace.dat")
    args = ap.parse_args()

    # first instance from the seed on whose capacity still binds at the opening price
    seed = args.seed
    while True:
        rng = np.random.default_rng(seed)
        sc = Scenario.from_arrays(rng.uniform(35, 65, args.n), rng.uniform(1, 2, args.n), 99.0, 17.0)
        if np.sum(np.maximum(0.0, (sc.b - 17.0) / sc.s)) > sc.capacity:
            break
        seed += 1
    print(f"instance seed {seed}: b = {np.round(sc.b, 3)}, s = {np.round(sc.s, 3)}")
    p_star = gse_solve(sc).p_star
    with open(args.out, "w") as fh:
        for p in (sc.grid.initial_price, p_star):
            ve = ss_solve(sc, p, record=True)
            fh.write(f"# price {p!r}: {ve.iterations} iterations, shared multiplier {ve.lam:.6f}\n")
            for k, it in enumerate(ve.trace):
                row = [k, it.residual, *it.x, *utilities(sc, it.x, p), *it.lambdas]
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            fh.write("\n\n")
            print(f"p = {p:.4f}: {ve.iterations} iterations, x* = {np.round(ve.x_star, 4)}, lambda = {ve.lam:.4f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
