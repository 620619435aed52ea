#!/usr/bin/env python3
"""Capacity error of wulff(1) against the radial oracle as the grid is refined.

    python3 scripts/convergence_study.py --grids 24,32,48,64 --p 2
"""
import argparse
import time

from fcap.bodies import Wulff
from fcap.norms import DualNorm, parse_norm
from fcap.pde import radial
from fcap.pde.solver import SolverOptions, solve_exterior


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", default="24,32,48,64")
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--norm", default="euclidean")
    ap.add_argument("--policy", choices=("A", "B"), default="A")
    args = ap.parse_args()

    H = parse_norm(args.norm)
    D = DualNorm.of(H)
    exact = radial.radial_capacity(D, 1.0, args.p)
    print(f"exact {exact:.8f}")
    print(f"{'grid':>5} {'capacity':>12} {'rel.err':>10} {'R_out caps':>24} {'sec':>6}")
    for n in (int(t) for t in args.grids.split(",")):
        t0 = time.perf_counter()
        res = solve_exterior(H, D, Wulff(D, 1.0), args.p, resolution=n, options=SolverOptions(policy=args.policy))
        caps = " ".join(f"{c:.5f}" for c in res.per_radius())
        print(f"{n:>5} {res.capacity:>12.6f} {res.capacity / exact - 1:>+10.2e} {caps:>24} "
              f"{time.perf_counter() - t0:>6.1f}")


if __name__ == "__main__":
    main()
