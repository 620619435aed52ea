"""Command-line front end.

Every command writes ``manifest.json`` (config echo, versions, q, results
and the list of check reports) into ``--out``; wall-clock timings go to a
separate ``timings.json`` so the manifest is byte-identical across reruns.
Exit status: 0 when no check is violated, 2 when one is, 1 on errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from . import __version__
from . import analysis as an
from .bodies import BodyError, Box, Wulff, parse_body
from .norms import DualNorm, NormError, check_class_Jp, parse_norm
from .pde import radial
from .pde.solver import SolverOptions, default_threads, solve_annulus, solve_exterior

log = logging.getLogger("fcap")

COMMANDS = ("capacity", "annulus", "overdetermined", "bm", "alpha", "levels", "scaling", "asymptotic",
            "verify-all")
TIERS = {"smoke": 24, "desk": 64}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    norm: str = "euclidean"
    bodies: list = field(default_factory=lambda: ["wulff:1"])
    p: float = 2.0
    dim: int = 3
    resolution: int = 64
    rout: list = field(default_factory=lambda: [4.0, 6.0])
    R: float | None = None
    seed: int = 0
    threads: int = 1
    out: str = "."
    levels: list | None = None
    lam: float = 0.5
    radii: list | None = None
    policy: str = "A"
    tier: str = "desk"
    export_field: bool = False

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.dim < 3:
            raise ConfigError(f"--dim must be >= 3, got {self.dim}")
        if not 1 < self.p < self.dim:
            raise ConfigError(f"--p must lie in (1, dim) = (1, {self.dim}), got {self.p}")
        if self.resolution < 16:
            raise ConfigError(f"--grid must be >= 16, got {self.resolution}")
        if any(b <= a for a, b in zip(self.rout, self.rout[1:])) or min(self.rout) <= 1:
            raise ConfigError(f"--rout factors must be > 1 and strictly increasing: {self.rout}")
        if self.tier not in TIERS:
            raise ConfigError(f"unknown tier {self.tier!r}")


# ---------------------------------------------------------------------------
# serialization


def _clean(obj):
    """Round floats to 12 significant digits and make everything JSON-native."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.12g}")
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def emit_report(reports, path, config=None, results=None, q=None):
    """Write the run manifest; returns the manifest dict."""
    manifest = {
        "checks": [r.to_dict() if hasattr(r, "to_dict") else r for r in reports],
        "config": asdict(config) if config is not None else {},
        "versions": {"fcap": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "results": results or {},
        "q": q,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(dumps(manifest))
    return manifest


# ---------------------------------------------------------------------------
# pipelines


def _options(cfg):
    return SolverOptions(policy=cfg.policy, rout_factors=tuple(cfg.rout), threads=cfg.threads)


def _setup(cfg):
    norm = parse_norm(cfg.norm, cfg.dim)
    if norm.dim != cfg.dim:
        raise ConfigError(f"norm {cfg.norm!r} has dimension {norm.dim}, expected {cfg.dim}")
    dual = DualNorm.of(norm)
    bodies = [parse_body(b, dual) for b in cfg.bodies]
    return norm, dual, bodies


def _capacity_report(result, body, dual, tol=0.03):
    """Monotonicity sandwich between the inscribed and circumscribed Wulff shapes."""
    p = result.p
    lo = radial.radial_capacity(dual, body.inradius(dual), p)
    hi = radial.radial_capacity(dual, body.circumradius(dual), p)
    ok = lo * (1 - tol) <= result.capacity <= hi * (1 + tol)
    return an.TheoremReport(
        check="capacity_monotonicity", verdict=an.CONSISTENT if ok else an.VIOLATED,
        inputs={"body": body.kind, "p": p},
        measured={"capacity": result.capacity, "inscribed_wulff_capacity": lo,
                  "circumscribed_wulff_capacity": hi, "converged": result.converged},
        tolerances={"relative": tol}, provenance=an._provenance(result),
    )


def _export(cfg, result, name="field"):
    if cfg.export_field:
        result.field.save(os.path.join(cfg.out, name))


def run_capacity(cfg, norm, dual, bodies):
    body = bodies[0]
    res = solve_exterior(norm, dual, body, cfg.p, resolution=cfg.resolution, options=_options(cfg))
    _export(cfg, res)
    return [_capacity_report(res, body, dual)], {"solve": res.to_dict(histories=False)}


def run_annulus(cfg, norm, dual, bodies):
    body = bodies[0]
    R = cfg.R if cfg.R is not None else cfg.rout[0] * body.circumradius(dual)
    res = solve_annulus(norm, dual, body, cfg.p, R, resolution=cfg.resolution, options=_options(cfg))
    _export(cfg, res)
    return [], {"solve": res.to_dict(histories=False)}


def run_overdetermined(cfg, norm, dual, bodies):
    body = bodies[0]
    if cfg.R is None:
        raise ConfigError("overdetermined needs --R")
    res = solve_annulus(norm, dual, body, cfg.p, cfg.R, resolution=cfg.resolution, options=_options(cfg))
    _export(cfg, res)
    rep = an.check_overdetermined(res, norm, dual, body, cfg.R)
    return [rep], {"solve": res.to_dict(histories=False)}


def run_bm(cfg, norm, dual, bodies):
    if len(bodies) != 2:
        raise ConfigError("bm needs exactly two --body arguments")
    rep = an.check_bm(norm, dual, bodies[0], bodies[1], cfg.lam, cfg.p, resolution=cfg.resolution,
                      options=_options(cfg))
    return [rep], {}


def _exterior(cfg, norm, dual, body):
    res = solve_exterior(norm, dual, body, cfg.p, resolution=cfg.resolution, options=_options(cfg))
    _export(cfg, res)
    return res


def run_alpha(cfg, norm, dual, bodies):
    res = _exterior(cfg, norm, dual, bodies[0])
    return [an.check_alpha(res, dual, bodies[0], seed=cfg.seed)], {"capacity": res.capacity}


def run_levels(cfg, norm, dual, bodies):
    t1, t2 = cfg.levels or (0.25, 0.5)
    res = _exterior(cfg, norm, dual, bodies[0])
    return [an.check_homothetic_levels(res, dual, bodies[0], t1, t2)], {"capacity": res.capacity}


def run_scaling(cfg, norm, dual, bodies):
    res = _exterior(cfg, norm, dual, bodies[0])
    rep = an.check_scaling(res, norm, dual, bodies[0], cfg.levels or [0.3, 0.5, 0.7], options=_options(cfg))
    return [rep], {"capacity": res.capacity}


def run_asymptotic(cfg, norm, dual, bodies):
    body = bodies[0]
    res = _exterior(cfg, norm, dual, body)
    circ = body.circumradius(dual)
    radii = cfg.radii or [f * circ for f in (1.5, 2.0, 2.5, 3.0, 3.5)]
    return [an.asymptotic_constant(res, norm, dual, body, radii)], {"capacity": res.capacity}


def run_verify_all(cfg, norm, dual, bodies):
    """The acceptance checks at a named resolution tier (euclidean, N = 3)."""
    n = TIERS[cfg.tier]
    opts = _options(cfg)
    E = parse_norm("euclidean", 3)
    dE = DualNorm.of(E)
    reports, results = [], {}
    jp = check_class_Jp(E, 2.0)
    reports.append(an.TheoremReport(check="norm_class_Jp", verdict=an.CONSISTENT if jp.passed else an.VIOLATED,
                                    measured=asdict(jp)))
    w1 = Wulff(dE, 1.0)
    cube = Box([1.0, 1.0, 1.0])
    sol = {}
    for p in (2.0, 1.5):
        sol[p] = solve_exterior(E, dE, w1, p, resolution=n, options=opts)
        exact = radial.radial_capacity(dE, 1.0, p)
        ok = abs(sol[p].capacity / exact - 1) <= (0.03 if p == 2 else 0.05)
        reports.append(an.TheoremReport(
            check=f"radial_capacity_p{p:g}", verdict=an.CONSISTENT if ok else an.VIOLATED,
            measured={"capacity": sol[p].capacity, "exact": exact}, tolerances={"relative": 0.03 if p == 2 else 0.05},
            provenance=an._provenance(sol[p])))
        reports.append(an.check_alpha(sol[p], dE, w1, seed=cfg.seed))
    reports.append(an.check_homothetic_levels(sol[2.0], dE, w1, 0.25, 0.5))
    reports.append(an.asymptotic_constant(sol[2.0], E, dE, w1, [1.5, 2.0, 2.5, 3.0, 3.5]))
    box = Box([1.0, 1.0, 3.0])
    rb = solve_exterior(E, dE, box, 2.0, resolution=n, options=opts)
    reports.append(an.check_alpha(rb, dE, box, seed=cfg.seed))
    for body in (Wulff(dE, 0.5), Box([0.5 / math.sqrt(3)] * 3)):
        ra = solve_annulus(E, dE, body, 2.0, 2.0, resolution=n, options=opts)
        reports.append(an.check_overdetermined(ra, E, dE, body, 2.0))
    rc = solve_exterior(E, dE, cube, 2.0, resolution=n, options=opts)
    reports.append(an.check_bm(E, dE, cube, w1, 0.5, 2.0, resolution=n, options=opts,
                               results={"K": rc, "D": sol[2.0]}))
    reports.append(an.check_scaling(rc, E, dE, cube, [0.3, 0.5, 0.7], resolution=n, options=opts))
    results["tier"] = cfg.tier
    results["resolution"] = n
    return reports, results


PIPELINES = {
    "capacity": run_capacity, "annulus": run_annulus, "overdetermined": run_overdetermined, "bm": run_bm,
    "alpha": run_alpha, "levels": run_levels, "scaling": run_scaling, "asymptotic": run_asymptotic,
    "verify-all": run_verify_all,
}


def run(cfg):
    """Execute one configuration; returns the exit code."""
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    norm, dual, bodies = _setup(cfg)
    t0 = time.perf_counter()
    reports, results = PIPELINES[cfg.command](cfg, norm, dual, bodies)
    elapsed = time.perf_counter() - t0
    emit_report(reports, os.path.join(cfg.out, "manifest.json"), cfg, results,
                q=radial.radial_exponent(cfg.dim, cfg.p))
    seen = {}
    for r in reports:
        # repeated checks (verify-all) get an index suffix
        seen[r.check] = seen.get(r.check, 0) + 1
        name = r.check if seen[r.check] == 1 else f"{r.check}_{seen[r.check]}"
        with open(os.path.join(cfg.out, f"report_{name}.json"), "w") as fh:
            fh.write(dumps(r.to_dict()))
    with open(os.path.join(cfg.out, "timings.json"), "w") as fh:
        fh.write(dumps({"command": cfg.command, "wall_seconds": elapsed}))
    verdicts = [r.verdict for r in reports]
    for r in reports:
        print(f"{r.check}: {r.verdict}")
    return 2 if an.VIOLATED in verdicts else 0


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text, flag):
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise ConfigError(f"malformed number list for {flag}: {text!r}") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="fcap", description="Finsler p-capacity solver and rigidity checks")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--norm", default="euclidean", help="euclidean | ellipsoid:a11,a12,... | lq:Q:delta=D")
    ap.add_argument("--body", action="append", help="wulff:R[@c] | ellipsoid:a,b,c[@c] | box:hx,hy,hz[@c]")
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--grid", type=int, default=64, help="nodes per axis")
    ap.add_argument("--rout", default="4,6", help="outer radii as multiples of the body's H0-circumradius")
    ap.add_argument("--R", type=float, default=None, help="outer Wulff radius of annulus problems")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None, help="defaults to $FCAP_THREADS or 1")
    ap.add_argument("--out", default=".")
    ap.add_argument("--levels", default=None, help="comma-separated levels t")
    ap.add_argument("--lambda", dest="lam", type=float, default=0.5)
    ap.add_argument("--radii", default=None, help="sphere radii for the asymptotic check")
    ap.add_argument("--policy", choices=("A", "B"), default="A")
    ap.add_argument("--tier", choices=tuple(TIERS), default="desk")
    ap.add_argument("--field", action="store_true", help="export the solved field as CSV + JSON header")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(argv):
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        command=args.command, norm=args.norm, bodies=args.body or ["wulff:1"], p=args.p, dim=args.dim,
        resolution=args.grid, rout=_floats(args.rout, "--rout"), R=args.R, seed=args.seed,
        threads=args.threads if args.threads is not None else default_threads(), out=args.out,
        levels=_floats(args.levels, "--levels") if args.levels else None, lam=args.lam,
        radii=_floats(args.radii, "--radii") if args.radii else None, policy=args.policy, tier=args.tier,
        export_field=args.field,
    )
    return cfg, args.verbose


def main(argv=None):
    try:
        cfg, verbose = config_from_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as e:
        return 1 if e.code else 0
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(cfg)
    except (ConfigError, NormError, BodyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # execution failure
        log.exception("execution failed")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
