"""Preconditioned nonlinear conjugate gradients with an Armijo line search."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class NCGResult:
    x: np.ndarray
    energy: float
    iterations: int
    grad_norm: float
    converged: bool
    message: str
    history: list = field(default_factory=list)


def minimize_ncg(fun, x0, diagonal=None, *, rtol=1e-9, window=10, gtol=1e-7,
                 maxiter=None, restart_every=50, c1=1e-4):
    """Minimize a smooth convex function.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (value, gradient)``.
    x0 : ndarray
        Starting point.
    diagonal : callable, optional
        ``diagonal(x) -> d`` with ``d > 0``; used as a Jacobi preconditioner
        and recomputed at every restart.
    rtol, window : float, int
        Stop when the relative energy decrease over ``window`` iterations
        drops below ``rtol``.
    gtol : float
        Stop when ``max |g / d|`` (the preconditioned gradient) drops below it.

    Notes
    -----
    Search directions follow Polak-Ribiere+ in the preconditioned metric.
    Each line search starts from the secant step predicted by two
    directional derivatives and backtracks until the Armijo condition holds.
    """
    x = np.array(x0, dtype=float)
    n = len(x)
    maxiter = int(20 * np.sqrt(max(n, 1))) if maxiter is None else int(maxiter)
    E, g = fun(x)
    d = diagonal(x) if diagonal is not None else np.ones(n)
    z = g / d
    s = -z
    gz = float(g @ z)
    history = [E]
    step = None
    message = "maximum iterations reached"
    converged = False
    gnorm = float(np.max(np.abs(z))) if n else 0.0
    it = 0
    for it in range(1, maxiter + 1):
        if gnorm < gtol:
            converged, message = True, "preconditioned gradient below tolerance"
            it -= 1
            break
        slope = float(g @ s)
        if slope >= 0:
            s = -z
            slope = -gz
        # secant trial: estimate curvature along s from a probe step
        probe = step if step is not None else 1.0
        probe = max(probe, 1e-12)
        _, gp = fun(x + probe * s)
        curv = (float(gp @ s) - slope) / probe
        alpha = -slope / curv if curv > 0 else probe
        while True:
            En, gn = fun(x + alpha * s)
            if En <= E + c1 * alpha * slope or alpha < 1e-14:
                break
            alpha *= 0.5
        if not En <= E:
            # no decrease possible along s; restart once from steepest descent
            if np.array_equal(s, -z):
                message = "line search failed"
                break
            s = -z
            step = None
            continue
        x = x + alpha * s
        step = alpha
        restart = it % restart_every == 0
        if restart and diagonal is not None:
            d = diagonal(x)
        zn = gn / d
        gzn = float(gn @ zn)
        beta = 0.0 if restart else max(0.0, (gzn - float(g @ zn)) / gz) if gz > 0 else 0.0
        g, z, gz, E = gn, zn, gzn, En
        s = -z + beta * s
        history.append(E)
        gnorm = float(np.max(np.abs(z)))
        if len(history) > window:
            old = history[-window - 1]
            if abs(old - E) <= rtol * max(abs(E), 1e-300):
                converged, message = True, "relative energy decrease below tolerance"
                break
    return NCGResult(x=x, energy=E, iterations=it, grad_norm=gnorm, converged=converged,
                     message=message, history=history)
