"""Temporal convergence of the linear solver against the L1 oracle.

For each beta, solves the coupled example on a periodic lattice with a ramp
source and compares the final-time modes with the implicit L1 march at
doubling step counts. Prints a table and optionally writes it as JSON.

    python scripts/convergence_study.py --betas 0.3 0.5 0.8 --json out.json
"""

import argparse
import json
import math

import numpy as np

from mlfrac.fracops import TimeGrid
from mlfrac.grid import SpectralGrid, StateField
from mlfrac.linear import Propagator, SourceSpec, solve_linear
from mlfrac.oracle import fit_rate, l1_ode_march, residual_check
from mlfrac.symbol import example_symbol


def study(beta: float, points: int, steps: list[int], with_data: bool) -> dict:
    g = SpectralGrid((2 * math.pi,), (points,))
    x = g.x[0]
    prof = np.stack([np.exp(-2 * x**2), np.cos(x) * np.exp(-(x**2))])
    H = SourceSpec("callback", evaluator=lambda t: t * prof)
    phi = StateField(g, np.stack([np.exp(-4 * x**2), 0.5 * np.exp(-4 * (x - 0.3) ** 2)]))
    if not with_data:
        phi = phi.scale(0.0)
    prop = Propagator(g, example_symbol([1.0]), beta)

    U = solve_linear(prop, phi, H, [1.0])[0].to_frequency().data.reshape(2, -1).T
    F0 = phi.to_frequency().data.reshape(2, -1).T
    oracle = []
    runs = []
    for N in steps:
        tg = TimeGrid(1.0, N)
        Hh = np.stack([StateField(g, H.at(float(s), g, 2)).to_frequency().data.reshape(2, -1).T for s in tg.t])
        V = l1_ode_march(prop.A, beta, F0, Hh, tg).samples[-1]
        oracle.append(float(np.max(np.abs(U - V))))
        runs.append((tg, solve_linear(prop, phi, H, tg.t)))
    rep = residual_check(runs[-1][1], prop.sym, beta, H, runs[-1][0], runs[:-1])
    return {
        "beta": beta,
        "with_data": with_data,
        "steps": steps,
        "oracle_error": oracle,
        "oracle_rate": fit_rate(steps, oracle),
        "residual": [rep.final_residuals[N] for N in steps],
        "residual_rate": rep.refinement_rate,
        "threshold": 2 - beta - 0.3,
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", type=float, nargs="+", default=[0.3, 0.5, 0.8])
    ap.add_argument("--points", type=int, default=64)
    ap.add_argument("--steps", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args()

    rows = [study(b, args.points, args.steps, d) for b in args.betas for d in (False, True)]
    print(f"{'beta':>5} {'data':>5} {'oracle rate':>12} {'residual rate':>14} {'2-beta-0.3':>11}")
    for r in rows:
        print(
            f"{r['beta']:5.2f} {str(r['with_data']):>5} {r['oracle_rate']:12.3f} "
            f"{r['residual_rate']:14.3f} {r['threshold']:11.2f}"
        )
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
