#!/usr/bin/env python3
"""Solve the bundled two-player quadratic game and verify it by simulation.

Writes nash.csv, report.json and deviations.csv into --out and prints a
short summary.  --quick trades Monte Carlo accuracy for a fast smoke run.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import ergodic_games as eg
from ergodic_games.verify import nash_deviation_test


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/g0"))
    ap.add_argument("--grid-size", type=int, default=201)
    ap.add_argument("--tol", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--horizon", type=float, default=200.0)
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--deviations", type=int, default=60)
    ap.add_argument("--quick", action="store_true",
                    help="small Monte Carlo budget for smoke testing")
    args = ap.parse_args(argv)
    if args.quick:
        args.horizon, args.paths, args.deviations = 60.0, 40, 6

    model = eg.ou_model()
    spec = eg.quadratic_decoupled()
    grid = eg.Grid1D(-6.0, 6.0, args.grid_size)

    t0 = time.perf_counter()
    nash = eg.picard_solve(model, spec, grid, tol=args.tol)
    print(f"solve: lambdas={[f'{v:.6f}' for v in nash.lambdas]} "
          f"iterations={nash.iterations} converged={nash.converged} "
          f"comparison_bound={nash.comparison}")
    if not nash.converged:
        print("no fixed point; not running the deviation test", file=sys.stderr)
        return 2

    rep = nash_deviation_test(
        model, spec, nash,
        n_deviations=args.deviations, horizon=args.horizon,
        n_paths=args.paths, seed=args.seed,
    )
    elapsed = time.perf_counter() - t0
    print(f"verify: {len(rep.rows)} rows, {len(rep.failures())} failures, "
          f"{elapsed:.1f}s total")

    args.out.mkdir(parents=True, exist_ok=True)
    nash.to_csv(args.out / "nash.csv")
    rep.to_csv(args.out / "deviations.csv")
    with open(args.out / "report.json", "w") as fh:
        json.dump({"nash": nash.report_dict(), "deviations": rep.as_dict()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"artifacts in {args.out}")
    return 0 if rep.all_passed else 3


if __name__ == "__main__":
    raise SystemExit(main())
