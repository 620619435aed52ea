#!/usr/bin/env python3
"""Spread of H(Du) on the outer sphere of the annulus problem, Wulff vs cube.

Solves wulff(0.5) and the cube of circumradius 0.5 inside B(2) and compares
the coefficient of variation of the boundary trace for several fit radii.
The per-ray ratio cube/wulff cancels the lattice pattern that both fields
share, so its spread estimates the cube's own non-constancy.

    python3 scripts/boundary_trace_noise.py --grid 64
"""
import argparse
import math

import numpy as np

from fcap.bodies import Box, Wulff
from fcap.directions import sphere_directions, with_axes
from fcap.norms import DualNorm, NormSpec
from fcap.pde import radial
from fcap.pde.fields import boundary_trace
from fcap.pde.solver import solve_annulus


def cv(a):
    return float(np.std(a) / np.mean(a))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=64)
    ap.add_argument("--radii", default="4,5,6,8", help="fit radii in cells")
    ap.add_argument("--rays", type=int, default=512)
    args = ap.parse_args()

    H = NormSpec.euclidean(3)
    D = DualNorm.of(H)
    R = 2.0
    w = solve_annulus(H, D, Wulff(D, 0.5), 2.0, R, resolution=args.grid)
    c = solve_annulus(H, D, Box([0.5 / math.sqrt(3)] * 3), 2.0, R, resolution=args.grid)
    dirs = with_axes(sphere_directions(args.rays, 3))
    print(f"exact C for the Wulff annulus: {radial.annulus_outer_gradient(3, 2.0, 0.5, R):.6f}")
    print(f"{'cells':>6} {'C wulff':>9} {'CV wulff':>9} {'CV cube':>9} {'CV ratio':>9}")
    for rc in (float(t) for t in args.radii.split(",")):
        tw = boundary_trace(w.field, D, R, dirs, radius_cells=rc)
        tc = boundary_trace(c.field, D, R, dirs, radius_cells=rc)
        ok = np.isfinite(tw) & np.isfinite(tc)
        tw, tc = tw[ok], tc[ok]
        print(f"{rc:>6.1f} {np.mean(tw):>9.5f} {cv(tw):>9.2e} {cv(tc):>9.2e} {cv(tc / tw):>9.2e}")


if __name__ == "__main__":
    main()
