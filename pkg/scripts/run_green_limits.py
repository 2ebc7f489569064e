#!/usr/bin/env python3
"""Certify the Green kernels and tabulate their small-eps limit distances.

Prints one certification line per (kind, eps, p) cell and the ladder of
sup-norm distances d0 (kernel to its limit) and d1 (derivative criterion).

Usage:
    python scripts/run_green_limits.py --grid 128
"""

import argparse

from stoch_bvp import BoundaryKind, Grid, certify_green, sup_norm_diff


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grid", type=int, default=128)
    parser.add_argument("--ladder", type=lambda s: tuple(float(v) for v in s.split(",")), default=(1e-1, 1e-2, 1e-3))
    parser.add_argument("--p", type=float, nargs="+", default=[1.0, 2.0])
    args = parser.parse_args()
    grid = Grid(args.grid)

    print("== certification ==")
    for kind in BoundaryKind:
        for p in args.p:
            for eps in (0.5, *args.ladder):
                report = certify_green(kind, eps, p, grid)
                worst = max(c.residual / c.tolerance for c in report.checks)
                status = "ok" if report.all_pass else "FAIL"
                print(f"{kind.value:9s} eps={eps:<8g} p={p:<4g} {status}  worst residual/tol = {worst:.2e}")

    print("\n== limit distances ==")
    for kind in BoundaryKind:
        for p in args.p:
            cells = [sup_norm_diff(kind, eps, p, grid) for eps in args.ladder]
            d0 = " > ".join(f"{d:.3e}" for d, _ in cells)
            d1 = " > ".join(f"{d:.3e}" for _, d in cells)
            print(f"{kind.value:9s} p={p:<4g} d0: {d0}")
            print(f"{'':9s} {'':6s} d1: {d1}")


if __name__ == "__main__":
    main()
