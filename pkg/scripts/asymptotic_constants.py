#!/usr/bin/env python3
"""Measured limit of u H0^((N-p)/(p-1)) against the radial truth and the stated constant.

For a Wulff shape of radius r the potential is (H0/r)^(1/q), so the limit
is r^((N-p)/(p-1)).  The stated constant (N-2) P^(1/(p-1)) Cap^(1/(p-1)) is
printed next to it for comparison; no verdict is drawn from it.

    python3 scripts/asymptotic_constants.py --grid 48 --p 2,1.5
"""
import argparse

from fcap.analysis import asymptotic_constant
from fcap.bodies import Wulff
from fcap.norms import DualNorm, NormSpec
from fcap.pde.solver import solve_exterior


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=48)
    ap.add_argument("--p", default="2,1.5")
    ap.add_argument("--r", default="1,2")
    args = ap.parse_args()

    H = NormSpec.euclidean(3)
    D = DualNorm.of(H)
    print(f"{'p':>4} {'r':>4} {'L_hat':>9} {'truth':>9} {'stated':>10}")
    for p in (float(t) for t in args.p.split(",")):
        for r in (float(t) for t in args.r.split(",")):
            body = Wulff(D, r)
            res = solve_exterior(H, D, body, p, resolution=args.grid)
            rep = asymptotic_constant(res, H, D, body, [r * f for f in (1.5, 2.0, 2.5, 3.0, 3.5)])
            m = rep.measured
            print(f"{p:>4} {r:>4} {m['L_hat']:>9.4f} {m['radial_truth']:>9.4f} "
                  f"{m['stated_constant_prediction']:>10.3f}")


if __name__ == "__main__":
    main()
