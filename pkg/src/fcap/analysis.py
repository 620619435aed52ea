"""Numerical checks of the rigidity statements for the Finsler p-capacity.

Every check returns a :class:`TheoremReport`.  Verdicts follow one rule:
``violated`` only when a measured inequality fails beyond its tolerance,
``hypothesis_not_met`` when the body lacks the boundary regularity the
statement assumes (boxes), ``consistent`` otherwise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bodies import fit_homothety, fit_wulff, minkowski_combine
from .directions import sphere_directions, with_axes
from .pde import radial
from .pde.fields import boundary_trace, extract_level_set
from .pde.grid import BODY, OUTER, UNKNOWN, DiscreteEnergy
from .pde.solver import SolverOptions, solve_exterior

log = logging.getLogger(__name__)

CONSISTENT = "consistent"
VIOLATED = "violated"
HYPOTHESIS_NOT_MET = "hypothesis_not_met"


class AnalysisError(RuntimeError):
    pass


@dataclass
class TheoremReport:
    check: str
    verdict: str
    inputs: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {"check": self.check, "verdict": self.verdict, "inputs": self.inputs,
                "measured": self.measured, "tolerances": self.tolerances, "provenance": self.provenance}


def _provenance(result, **extra):
    out = {"resolution": result.resolution, "radii": list(result.radii), "policy": result.policy,
           "threads": result.threads, "epsilon_schedule": list(result.epsilon_schedule)}
    out.update(extra)
    return out


def _verdict(ok, smooth=True):
    if not ok:
        return VIOLATED
    return CONSISTENT if smooth else HYPOTHESIS_NOT_MET


def _wulff_points(dual, radius, count, dim):
    dirs = with_axes(sphere_directions(count, dim))
    return radius * dirs / dual.eval(dirs)[:, None]


# ---------------------------------------------------------------------------
# concavity exponent


def _alpha_pairs(result, dual, sample_pairs, seed, outer_fraction, min_separation_cells):
    f = result.field
    g = f.grid
    N = g.dim
    rng = np.random.default_rng(seed)
    Rs = outer_fraction * result.radii[-1]
    h = float(np.max(g.spacing))

    def at_radius(d, rad):
        return rad[:, None] * d / dual.eval(d)[:, None]

    n_uniform = sample_pairs // 2
    n_radial = sample_pairs - n_uniform
    # uniform pairs in B_H0(Rs)
    d1, d2 = rng.standard_normal((2, n_uniform, N))
    x = at_radius(d1, Rs * rng.random(n_uniform) ** (1 / N))
    y = at_radius(d2, Rs * rng.random(n_uniform) ** (1 / N))
    # near-radial pairs: the midpoint inequality is tight along rays for Wulff shapes
    d = rng.standard_normal((n_radial, N))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    e1 = d + 0.05 * rng.standard_normal((n_radial, N))
    e2 = d + 0.05 * rng.standard_normal((n_radial, N))
    xr = at_radius(e1, Rs * rng.random(n_radial))
    yr = at_radius(e2, Rs * rng.random(n_radial))
    X = _snap(g, np.vstack([x, xr]))
    Y = _snap(g, np.vstack([y, yr]))
    # even index offsets put the midpoint on a node as well, so trilinear
    # interpolation is exact at all three points
    odd = np.round((Y - X) / g.spacing).astype(int) % 2 == 1
    Y = Y - odd * g.spacing * np.where(Y > 0, 1, -1)
    keep = np.linalg.norm(X - Y, axis=1) >= min_separation_cells * h
    adm = _admissible_nodes(g)
    for P in (X, Y, 0.5 * (X + Y)):
        idx = np.round((P - g.lower) / g.spacing).astype(int)
        keep &= adm[tuple(idx.T)]
    X, Y = X[keep], Y[keep]
    ux, uy, um = (f(P + g.origin) for P in (X, Y, 0.5 * (X + Y)))
    if min(ux.min(), uy.min(), um.min()) <= 0:
        raise AnalysisError("field not positive on the sampled region")
    return ux, uy, um


def _admissible_nodes(g):
    """Body nodes and unknown nodes not sharing an edge with the body."""
    body = g.status == BODY
    near = np.zeros_like(body)
    for d in range(g.dim):
        near |= np.roll(body, 1, axis=d) | np.roll(body, -1, axis=d)
    return body | ((g.status == UNKNOWN) & ~near) | (g.status == OUTER)


def _snap(g, pts):
    idx = np.clip(np.round((pts - g.lower) / g.spacing), 0, np.array(g.shape) - 1)
    return g.lower + idx * g.spacing


def _beta_passes(beta, ux, uy, um, slack):
    lhs = um ** beta
    rhs = 0.5 * (ux ** beta + uy ** beta)
    return bool(np.all(lhs <= rhs + slack * np.abs(rhs)))


def alpha_search(result, dual, beta_range=None, sample_pairs=20000, seed=0, slack=1e-6, steps=12,
                 outer_fraction=0.6, min_separation_cells=4.0):
    """Bisection for the largest beta < 0 at which u^beta passes the midpoint test.

    Returns a dict with ``alpha``, ``tolerance`` (final bracket width),
    ``flag_manual_review`` and the number of pairs used.
    """
    q = result.q
    lo, hi = beta_range if beta_range is not None else (q - 1.5, min(q + 1.5, -0.01))
    if not lo < hi < 0:
        raise AnalysisError("beta range must lie in (-inf, 0)")
    ux, uy, um = _alpha_pairs(result, dual, sample_pairs, seed, outer_fraction, min_separation_cells)
    flag = False
    if _beta_passes(hi, ux, uy, um, slack):
        flag = True
        log.warning("field passes the midpoint test at beta=%g; flagged for manual review", hi)
        return {"alpha": hi, "tolerance": 0.0, "flag_manual_review": True, "pairs": len(ux),
                "bracket": [hi, hi]}
    if not _beta_passes(lo, ux, uy, um, slack):
        return {"alpha": lo, "tolerance": 0.0, "flag_manual_review": False, "pairs": len(ux),
                "bracket": [lo, lo], "below_window": True}
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if _beta_passes(mid, ux, uy, um, slack):
            lo = mid
        else:
            hi = mid
    return {"alpha": lo, "tolerance": hi - lo, "flag_manual_review": flag, "pairs": len(ux),
            "bracket": [lo, hi]}


def estimate_alpha(result, dual, beta_range=None, sample_pairs=20000, seed=0, slack=1e-6, **kw):
    """Largest beta in the window for which the solved field passes the beta-concavity test."""
    return alpha_search(result, dual, beta_range, sample_pairs, seed, slack, **kw)["alpha"]


def check_alpha(result, dual, body, wulff_tol=0.05, **kw):
    """alpha <= q for every body, |alpha - q| <= wulff_tol for Wulff shapes."""
    s = alpha_search(result, dual, **kw)
    q = result.q
    wulff = fit_wulff(body, dual, tol=1e-3) is not None
    margin = q - s["alpha"]
    ok = s["alpha"] <= q + s["tolerance"] + (wulff_tol if wulff else 0.0)
    if wulff:
        ok = ok and abs(margin) <= wulff_tol
    return TheoremReport(
        check="alpha", verdict=_verdict(ok, body.smooth),
        inputs={"body": body.kind, "p": result.p, "seed": kw.get("seed", 0)},
        measured={"alpha_hat": s["alpha"], "q": q, "margin": margin, "estimator_tolerance": s["tolerance"],
                  "bracket": s["bracket"], "pairs": s["pairs"], "flag_manual_review": s["flag_manual_review"],
                  "wulff_body": wulff},
        tolerances={"wulff_tol": wulff_tol, "slack": kw.get("slack", 1e-6)},
        provenance=_provenance(result, seed=kw.get("seed", 0)),
    )


# ---------------------------------------------------------------------------
# Brunn-Minkowski


def check_bm(norm, dual, K, D, lam, p, resolution=64, options=None, tol=1e-2, results=None):
    """Deficit of Cap^(1/(N-p)) under the Minkowski combination (1 - lam) K + lam D.

    ``results`` may supply already computed solves for K and/or D as a
    dict ``{"K": SolveResult, "D": SolveResult}``.
    """
    N = dual.dim
    e = 1.0 / (N - p)
    results = dict(results or {})
    M = minkowski_combine(lam, K, D)
    for name, body in (("K", K), ("D", D), ("M", M)):
        if name not in results:
            results[name] = solve_exterior(norm, dual, body, p, resolution=resolution, options=options)
    cK, cD, cM = (results[k].capacity for k in ("K", "D", "M"))
    deficit = cM ** e - (1 - lam) * cK ** e - lam * cD ** e
    scale = cM ** e
    fit = fit_homothety(K, D)
    ok = deficit >= -tol * scale
    return TheoremReport(
        check="brunn_minkowski", verdict=_verdict(ok),
        inputs={"K": K.kind, "D": D.kind, "lambda": lam, "p": p},
        measured={"capacity_K": cK, "capacity_D": cD, "capacity_combined": cM, "deficit": deficit,
                  "relative_deficit": deficit / scale, "homothety_residual": fit.residual,
                  "homothetic": fit.residual <= 1e-2},
        tolerances={"relative": tol},
        provenance=_provenance(results["M"]),
    )


# ---------------------------------------------------------------------------
# scaling law


def rescaled_level_capacity(result, norm, t):
    """Energy of min(u, t) / t on the solve grid plus its exact radial tail.

    In the continuum this equals Cap(U(t)) since u / t is the potential of U(t).
    """
    f = result.field
    g = f.grid
    run = result.runs[-1]
    p = result.p
    w = np.minimum(f.unknowns(), t) / t
    uR = min(run.outer_value, t) / t
    E = DiscreteEnergy(g, norm, p, outer_value=uR).value(w)
    tail = 0.0
    if f.outer_coef:
        K = radial.radial_capacity(f.dual, 1.0, p)
        coef = f.outer_coef / t
        tail = uR * K * coef ** (p - 1)
    return E + tail


def check_scaling(result, norm, dual, body, levels, resolve=True, resolution=None, options=None,
                  tol=0.03, direction_count=512):
    """Cap(U(t)) t^(p-1) / Cap(Omega) = 1 for superlevel sets U(t)."""
    p = result.p
    capO = result.capacity
    per_level = []
    ok = True
    for t in levels:
        if not 0.0 < t < 1.0:
            raise AnalysisError("levels must lie strictly inside (0, 1)")
        entry = {"t": t}
        # energy cross-check on the same grid as the original solve
        cap_w = rescaled_level_capacity(result, norm, t)
        entry["ratio_rescaled_field"] = cap_w * t ** (p - 1) / result.runs[-1].capacity
        ok &= abs(entry["ratio_rescaled_field"] - 1) <= tol
        if resolve:
            U, _ = extract_level_set(result.field, t, direction_count)
            sol = solve_exterior(norm, dual, U, p, resolution=resolution or result.resolution,
                                 options=options)
            entry["capacity_level_set"] = sol.capacity
            entry["ratio_resolve"] = sol.capacity * t ** (p - 1) / capO
            ok &= abs(entry["ratio_resolve"] - 1) <= tol
        per_level.append(entry)
    return TheoremReport(
        check="scaling", verdict=_verdict(ok),
        inputs={"body": body.kind, "levels": list(levels), "p": p, "resolve": resolve},
        measured={"capacity": capO, "levels": per_level},
        tolerances={"ratio": tol},
        provenance=_provenance(result),
    )


# ---------------------------------------------------------------------------
# overdetermined Neumann condition


def check_overdetermined(result, norm, dual, body, R, count=512, cv_tol=0.02, value_tol=0.05):
    """Constancy of H(Du) on the outer surface of an annulus solve.

    For a Wulff body B_H0(r) the exact annulus potential gives
    C = |1/q| R^(1/q - 1) / (r^(1/q) - R^(1/q)) on H0 = R; the report
    compares Ĉ with this value and also lists r Ĉ against (N - p)/(p - 1).
    """
    N = dual.dim
    p = result.p
    dirs = with_axes(sphere_directions(count, N))
    slopes = boundary_trace(result.field, dual, R, dirs, norm=norm)
    slopes = slopes[np.isfinite(slopes)]
    if len(slopes) < 0.9 * len(dirs):
        raise AnalysisError("too few rays reach resolved cells near the outer surface")
    C = float(np.mean(slopes))
    cv = float(np.std(slopes) / C)
    fit = fit_wulff(body, dual, tol=1e-3, return_fit=True)
    wulff = fit.spread <= 1e-3
    measured = {"C_hat": C, "cv": cv, "rays": int(len(slopes)), "wulff_body": wulff,
                "wulff_spread": fit.spread}
    if wulff:
        r = fit.radius
        exact = radial.annulus_outer_gradient(N, p, r, R)
        measured.update(wulff_radius=r, C_exact_annulus=exact,
                        C_relative_error=abs(C - exact) / exact,
                        r_times_C=r * C, stated_constant=(N - p) / (p - 1),
                        stated_relation_residual=abs(r * C - (N - p) / (p - 1)))
        ok = cv <= cv_tol and abs(C - exact) <= value_tol * exact
    else:
        ok = cv > cv_tol
    return TheoremReport(
        check="overdetermined", verdict=_verdict(ok, body.smooth),
        inputs={"body": body.kind, "R": R, "p": p},
        measured=measured,
        tolerances={"cv": cv_tol, "value_relative": value_tol},
        provenance=_provenance(result, rays=count),
    )


# ---------------------------------------------------------------------------
# homothetic level sets


def check_homothetic_levels(result, dual, body, t1, t2, threshold=1e-2, law_tol=0.02, wulff_tol=1e-2,
                            direction_count=512):
    """Homothety of U(t1), U(t2) and, if homothetic, the levels-ratio law and Wulff fits."""
    if not t1 <= t2:
        raise AnalysisError("need t1 <= t2")
    N = dual.dim
    p = result.p
    g = result.field.grid
    h = float(np.max(g.spacing))
    U1, P1 = extract_level_set(result.field, t1, direction_count)
    U2, P2 = extract_level_set(result.field, t2, direction_count)
    dirs = U1.directions
    fit = fit_homothety(U1, U2, dirs)
    # clearance from the body and from the truncation surface, in cells
    gap_body = float(np.min(U2.support(dirs) - body.support(dirs))) / h
    gap_outer = float(result.radii[-1] - np.max(dual.eval(P1 - g.origin))) / h
    measured = {"ratio": fit.ratio, "translation": fit.translation.tolist(), "homothety_residual": fit.residual,
                "homothetic": fit.residual <= threshold, "clearance_body_cells": gap_body,
                "clearance_outer_cells": gap_outer, "levels_resolved": min(gap_body, gap_outer) >= 3.0}
    ok = True
    if fit.residual <= threshold:
        e = (N - p) / (p - 1)
        law = fit.ratio ** (-e)
        measured.update(levels_law=law, levels_law_target=t1 / t2,
                        levels_law_residual=abs(law - t1 / t2) / (t1 / t2))
        w1 = fit_wulff(U1, dual, tol=wulff_tol, return_fit=True)
        w2 = fit_wulff(U2, dual, tol=wulff_tol, return_fit=True)
        measured.update(wulff_spread_t1=w1.spread, wulff_spread_t2=w2.spread,
                        wulff_radius_t1=w1.radius, wulff_radius_t2=w2.radius)
        ok = measured["levels_law_residual"] <= law_tol and w1.spread <= wulff_tol and w2.spread <= wulff_tol
    return TheoremReport(
        check="homothetic_levels", verdict=_verdict(ok, body.smooth),
        inputs={"body": body.kind, "t1": t1, "t2": t2, "p": p},
        measured=measured,
        tolerances={"homothety": threshold, "law": law_tol, "wulff": wulff_tol},
        provenance=_provenance(result, directions=direction_count),
    )


# ---------------------------------------------------------------------------
# asymptotic constant


def sphere_averages(result, dual, radii, count=2048):
    f = result.field
    N = f.grid.dim
    e = (N - result.p) / (result.p - 1)
    means, spreads = [], []
    for rad in radii:
        pts = _wulff_points(dual, rad, count, N)
        vals = f(pts + f.grid.origin) * rad ** e
        means.append(float(vals.mean()))
        spreads.append(float((vals.max() - vals.min()) / vals.mean()))
    return np.array(means), np.array(spreads)


def asymptotic_constant(result, norm, dual, body, radii, count=2048, monotone_tol=5e-3, tol=0.03):
    """Limit of u H0^((N-p)/(p-1)) from sphere averages extrapolated in H0^(1/q)."""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise AnalysisError("radii must be increasing")
    if radii[-1] >= result.radii[-1]:
        raise AnalysisError("radii must lie inside the truncation surface")
    N = dual.dim
    p, q = result.p, result.q
    means, spreads = sphere_averages(result, dual, radii, count)
    steps = np.diff(means) / means[:-1]
    if np.any(steps > monotone_tol) and np.any(steps < -monotone_tol):
        raise AnalysisError("sphere averages are not monotone; increase resolution")
    x = np.array(radii) ** (1 / q)
    A = np.column_stack([np.ones_like(x), x])
    L = float(np.linalg.lstsq(A, means, rcond=None)[0][0])
    P = N * radial.wulff_volume(dual)  # Finsler perimeter of the unit Wulff shape
    stated = (N - 2) * P ** (1 / (p - 1)) * result.capacity ** (1 / (p - 1))
    measured = {"L_hat": L, "sphere_means": means.tolist(), "sphere_oscillation": spreads.tolist(),
                "radii": radii, "capacity": result.capacity, "stated_constant_prediction": stated,
                "stated_vs_measured_ratio": stated / L}
    ok = np.isfinite(L) and L > 0
    fit = fit_wulff(body, dual, tol=1e-3, return_fit=True)
    if fit.spread <= 1e-3:
        truth = fit.radius ** ((N - p) / (p - 1))
        measured.update(radial_truth=truth, relative_error=abs(L - truth) / truth)
        ok = ok and abs(L - truth) <= tol * truth
    return TheoremReport(
        check="asymptotic", verdict=_verdict(ok),
        inputs={"body": body.kind, "p": p, "radii": radii},
        measured=measured,
        tolerances={"relative": tol, "monotone": monotone_tol},
        provenance=_provenance(result, directions=count),
    )
