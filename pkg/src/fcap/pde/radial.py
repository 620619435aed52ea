"""Exact potentials and capacities of Wulff shapes."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma
from scipy.stats import qmc

from ..directions import sphere_directions


class ExponentError(ValueError):
    pass


def radial_exponent(N, p):
    """q = -(p - 1) / (N - p), the concavity exponent of Wulff-shape potentials."""
    if not 1 < p < N:
        raise ExponentError(f"p must lie in (1, N) = (1, {N}), got {p}")
    return -(p - 1) / (N - p)


def unit_ball_volume(N):
    return math.pi ** (N / 2) / gamma(N / 2 + 1)


def sphere_area(N):
    return N * unit_ball_volume(N)


def wulff_volume(dual, count=20000):
    """|B_H0(1)|: closed form when the dual is known explicitly, else polar quadrature."""
    src = dual.source
    N = src.dim
    if dual.method == "closed_form":
        if src.kind == "euclidean":
            return unit_ball_volume(N)
        if src.kind == "ellipsoid":
            return unit_ball_volume(N) * math.sqrt(np.linalg.det(src.A))
        qd = src.q_exp / (src.q_exp - 1)
        return (2 * gamma(1 + 1 / qd)) ** N / gamma(1 + N / qd)
    if N == 3:
        dirs = sphere_directions(count, 3)
    else:
        # scrambled Sobol points mapped to Gaussian then normalized; fixed seed
        sob = qmc.Sobol(N, scramble=True, seed=7).random(count)
        from scipy.stats import norm as _gauss
        g = _gauss.ppf(np.clip(sob, 1e-12, 1 - 1e-12))
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    return sphere_area(N) / N * float(np.mean(dual.eval(dirs) ** (-N)))


def radial_potential(dual, r, p, x, center=None):
    """(H0(x - center) / r)^(1/q); raises for points inside the Wulff shape."""
    q = radial_exponent(dual.dim, p)
    x = np.asarray(x, float)
    if center is not None:
        x = x - np.asarray(center, float)
    rho = dual.eval(x)
    if np.any(rho < r * (1 - 1e-12)):
        raise ValueError("point inside the Wulff shape")
    return (rho / r) ** (1 / q)


def radial_gradient_size(dual, r, p, rho):
    """H(Dv_r) as a function of rho = H0(x - center)."""
    q = radial_exponent(dual.dim, p)
    return abs(1 / q) * r ** (-1 / q) * np.asarray(rho, float) ** (1 / q - 1)


def radial_capacity(dual, r, p, volume=None):
    """(1/p) ((N-p)/(p-1))^(p-1) N |B_H0| r^(N-p)."""
    N = dual.dim
    radial_exponent(N, p)
    vol = wulff_volume(dual) if volume is None else volume
    if not vol > 0:
        raise ValueError("volume estimation failed")
    return (1 / p) * ((N - p) / (p - 1)) ** (p - 1) * N * vol * r ** (N - p)


def annulus_potential(dual, r, R, p, x):
    """(H0^(1/q) - R^(1/q)) / (r^(1/q) - R^(1/q)) on r <= H0 <= R."""
    q = radial_exponent(dual.dim, p)
    rho = dual.eval(np.asarray(x, float))
    return (rho ** (1 / q) - R ** (1 / q)) / (r ** (1 / q) - R ** (1 / q))


def annulus_capacity(dual, r, R, p, volume=None):
    """Energy of the annulus potential: K / (r^(1/q) - R^(1/q))^(p-1), K = capacity of B_H0(1)."""
    q = radial_exponent(dual.dim, p)
    K = radial_capacity(dual, 1.0, p, volume)
    return K / (r ** (1 / q) - R ** (1 / q)) ** (p - 1)


def annulus_outer_gradient(N, p, r, R):
    """H(Du) on the outer sphere H0 = R for the annulus potential."""
    q = radial_exponent(N, p)
    return abs(1 / q) * R ** (1 / q - 1) / (r ** (1 / q) - R ** (1 / q))


def equivalent_radius(K, p, N, R, energy):
    """Wulff radius whose condenser B_H0(r) in B_H0(R) has the given energy."""
    q = radial_exponent(N, p)
    phi = R ** (1 / q) + (K / energy) ** (1 / (p - 1))
    return phi ** q
