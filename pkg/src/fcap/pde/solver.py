"""Exterior and annular p-capacity solves on truncated grids."""
from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import radial
from .fields import ScalarField, gradient_field
from .grid import DiscreteEnergy, build_grid
from .ncg import minimize_ncg

log = logging.getLogger(__name__)


class SolveError(RuntimeError):
    pass


def default_threads():
    try:
        return max(1, int(os.environ.get("FCAP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SolverOptions:
    """Knobs of the exterior/annulus solvers.

    ``rout_factors`` multiply the body's H0-circumradius when no explicit
    outer radii are given.  ``eps_schedule`` is in units of the gradient
    scale 1/r and is only used for p < 2.
    """

    policy: str = "A"
    rout_factors: tuple = (4.0, 6.0)
    eps_schedule: tuple = (1e-2, 1e-3, 1e-4)
    rtol: float = 1e-9
    window: int = 10
    gtol: float = 1e-7
    maxiter: int | None = None
    threads: int = field(default_factory=default_threads)

    def __post_init__(self):
        if self.policy not in ("A", "B"):
            raise ValueError("policy must be 'A' or 'B'")


@dataclass
class RadiusRun:
    R_out: float
    capacity: float
    energy: float
    condenser_energy: float
    r_equivalent: float
    outer_value: float
    iterations: int
    converged: bool
    final_gradient_norm: float
    history: list
    stages: list


@dataclass
class SolveResult:
    field: ScalarField
    capacity: float
    energy_history: list
    final_gradient_norm: float
    radii: list
    epsilon_schedule: list
    gamma_bounds: tuple
    runs: list
    p: float
    q: float
    resolution: int
    policy: str
    threads: int
    converged: bool
    extrapolated: bool

    @property
    def gamma_hat(self):
        lo, hi = self.gamma_bounds
        return float(max(hi, 1.0 / lo)) if lo > 0 else float("inf")

    def per_radius(self):
        return [r.capacity for r in self.runs]

    def to_dict(self, histories=True):
        out = {
            "capacity": self.capacity,
            "radii": list(self.radii),
            "per_radius_capacity": self.per_radius(),
            "epsilon_schedule": list(self.epsilon_schedule),
            "gamma_bounds": list(self.gamma_bounds),
            "gamma_hat": self.gamma_hat,
            "final_gradient_norm": self.final_gradient_norm,
            "p": self.p,
            "q": self.q,
            "resolution": self.resolution,
            "policy": self.policy,
            "threads": self.threads,
            "converged": self.converged,
            "extrapolated": self.extrapolated,
            "grid": self.field.grid.metadata(),
        }
        runs = []
        for r in self.runs:
            d = asdict(r)
            if not histories:
                d.pop("history")
                for st in d["stages"]:
                    st.pop("history", None)
            runs.append(d)
        out["runs"] = runs
        if histories:
            out["energy_history"] = list(self.energy_history)
        return out


def discrete_energy(field, norm, p, epsilon=0.0, scale=1.0, outer_value=None):
    """Discrete energy of a field, including its boundary data."""
    g = field.grid
    if outer_value is None:
        outer_value = field.outer_coef * g.R_out ** (1 / field.q) if field.outer_coef else 0.0
    E = DiscreteEnergy(g, norm, p, eps=epsilon, scale=scale, outer_value=outer_value)
    return E.value(field.unknowns())


def _eps_list(p, opts):
    return [float(e) for e in opts.eps_schedule] if p < 2 else [0.0]


def _minimize(grid, norm, p, x0, eps_list, scale, outer_value, opts):
    x = x0
    stages = []
    res = None
    for eps in eps_list:
        E = DiscreteEnergy(grid, norm, p, eps=eps, scale=scale, outer_value=outer_value)
        res = minimize_ncg(E.value_and_grad, x, E.diagonal, rtol=opts.rtol, window=opts.window,
                           gtol=opts.gtol, maxiter=opts.maxiter)
        x = res.x
        stages.append({"epsilon": eps, "iterations": res.iterations, "converged": res.converged,
                       "message": res.message, "energy": res.energy, "history": res.history})
        log.debug("eps=%g: %d iterations, %s", eps, res.iterations, res.message)
    exact = DiscreteEnergy(grid, norm, p, eps=0.0, outer_value=outer_value).value(x)
    return x, exact, res, stages


def _initial_guess(grid, dual, p, r0, R):
    pos = grid.node_positions().reshape(-1, grid.dim)[grid.unknown]
    rho = np.maximum(dual.eval(pos), r0)
    q = radial.radial_exponent(grid.dim, p)
    u = (rho ** (1 / q) - R ** (1 / q)) / (r0 ** (1 / q) - R ** (1 / q))
    return np.clip(u, 0.0, 1.0)


def gamma_bounds(field, norm, p, r, R):
    """min and max of H(Du) H0^(1 - 1/q) over 1.5 r <= H0 <= 0.7 R."""
    q = radial.radial_exponent(field.grid.dim, p)
    gs = gradient_field(field, norm)
    sel = (gs.rho >= 1.5 * r) & (gs.rho <= 0.7 * R)
    if not np.any(sel):
        return (float("nan"), float("nan"))
    ratio = gs.h_du[sel] * gs.rho[sel] ** (1 - 1 / q)
    return (float(ratio.min()), float(ratio.max()))


def solve_exterior(norm, dual, body, p, R_out_list=None, resolution=64, options=None):
    """Capacity of ``body`` from truncated solves, extrapolated in R_out^(1/q).

    The extrapolated quantity is Cap^(-1/(p-1)), which is exactly affine in
    R_out^(1/q) for Wulff shapes.

    Every outer radius is solved on one shared grid covering the largest
    radius.  Policy B imposes u = 0 on H0 = R_out.  Policy A first solves
    policy B, matches the condenser energy to a Wulff shape of equivalent
    radius r_e, then re-solves with the outer value (R_out / r_e)^(1/q) of
    that radial profile; its capacity estimate adds the exact radial tail
    energy beyond R_out.
    """
    opts = options or SolverOptions()
    N = dual.dim
    q = radial.radial_exponent(N, p)
    circ = body.circumradius(dual)
    inr = body.inradius(dual)
    radii = sorted(float(R) for R in (R_out_list or [f * circ for f in opts.rout_factors]))
    if radii[0] <= circ:
        raise SolveError("body not strictly inside the smallest outer Wulff shape")
    K = radial.radial_capacity(dual, 1.0, p)
    scale = 1.0 / circ
    eps_list = _eps_list(p, opts)
    runs = []
    field_out = None
    for R in radii:
        grid = build_grid(body, dual, R, resolution, box_radius=radii[-1])
        x0 = _initial_guess(grid, dual, p, 0.5 * (inr + circ), R)
        xB, EB, res, stages = _minimize(grid, norm, p, x0, eps_list, scale, 0.0, opts)
        r_eq = radial.equivalent_radius(K, p, N, R, EB)
        if opts.policy == "A":
            coef = r_eq ** (-1 / q)
            uR = coef * R ** (1 / q)
            xA, EA, res, stA = _minimize(grid, norm, p, uR + (1 - uR) * xB, eps_list[-1:], scale, uR, opts)
            stages += stA
            cap = EA + uR * K * coef ** (p - 1)
            x, energy = xA, EA
        else:
            coef, uR, cap, x, energy = 0.0, 0.0, EB, xB, EB
        runs.append(RadiusRun(
            R_out=R, capacity=float(cap), energy=float(energy), condenser_energy=float(EB),
            r_equivalent=float(r_eq), outer_value=float(uR), iterations=sum(s["iterations"] for s in stages),
            converged=all(s["converged"] for s in stages), final_gradient_norm=float(res.grad_norm),
            history=list(res.history), stages=stages,
        ))
        if not runs[-1].converged:
            log.warning("R_out=%g: solver stopped without meeting the tolerance (%s)", R, res.message)
        field_out = ScalarField.from_unknowns(grid, x, outer_coef=coef, q=q, dual=dual)
    caps = np.array([r.capacity for r in runs])
    if len(radii) >= 2:
        # Cap(R)^(-1/(p-1)) is affine in R^(1/q) for the radial condenser
        xs = np.array(radii) ** (1 / q)
        A = np.column_stack([np.ones_like(xs), xs])
        a = float(np.linalg.lstsq(A, caps ** (-1 / (p - 1)), rcond=None)[0][0])
        cap = a ** (-(p - 1))
    else:
        cap = float(caps[0])
    last = runs[-1]
    return SolveResult(
        field=field_out, capacity=cap, energy_history=last.history,
        final_gradient_norm=last.final_gradient_norm, radii=radii, epsilon_schedule=eps_list,
        gamma_bounds=gamma_bounds(field_out, norm, p, circ, radii[-1]), runs=runs, p=float(p), q=q,
        resolution=int(resolution), policy=opts.policy, threads=opts.threads,
        converged=all(r.converged for r in runs), extrapolated=len(radii) >= 2,
    )


def solve_annulus(norm, dual, body, p, R, resolution=64, options=None):
    """u = 1 on the body, u = 0 on H0 = R; no Neumann condition is imposed."""
    opts = options or SolverOptions()
    N = dual.dim
    q = radial.radial_exponent(N, p)
    circ = body.circumradius(dual)
    inr = body.inradius(dual)
    if R <= circ:
        raise SolveError("body not strictly inside the outer Wulff shape")
    grid = build_grid(body, dual, R, resolution)
    x0 = _initial_guess(grid, dual, p, 0.5 * (inr + circ), R)
    eps_list = _eps_list(p, opts)
    x, E, res, stages = _minimize(grid, norm, p, x0, eps_list, 1.0 / circ, 0.0, opts)
    K = radial.radial_capacity(dual, 1.0, p)
    run = RadiusRun(
        R_out=float(R), capacity=float(E), energy=float(E), condenser_energy=float(E),
        r_equivalent=float(radial.equivalent_radius(K, p, N, R, E)), outer_value=0.0,
        iterations=sum(s["iterations"] for s in stages), converged=all(s["converged"] for s in stages),
        final_gradient_norm=float(res.grad_norm), history=list(res.history), stages=stages,
    )
    fld = ScalarField.from_unknowns(grid, x, outer_coef=0.0, q=q, dual=dual)
    return SolveResult(
        field=fld, capacity=float(E), energy_history=run.history, final_gradient_norm=run.final_gradient_norm,
        radii=[float(R)], epsilon_schedule=eps_list, gamma_bounds=gamma_bounds(fld, norm, p, circ, R),
        runs=[run], p=float(p), q=q, resolution=int(resolution), policy="B", threads=opts.threads,
        converged=run.converged, extrapolated=False,
    )
