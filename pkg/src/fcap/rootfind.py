"""Vectorized bracketed scalar root finding."""
import numpy as np


def illinois(f, lo, hi, flo=None, fhi=None, xtol=1e-13, maxiter=200):
    """Find roots of ``f`` on many brackets at once.

    ``f`` maps an array of abscissae to an array of values; every bracket
    must satisfy ``f(lo) <= 0 <= f(hi)``.  Uses the Illinois variant of
    regula falsi, with a bisection step whenever the bracket stalls.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = f(lo) if flo is None else np.array(flo, dtype=float)
    fhi = f(hi) if fhi is None else np.array(fhi, dtype=float)
    if np.any(flo > 0) or np.any(fhi < 0):
        raise ValueError("root not bracketed")
    side = np.zeros(lo.shape, dtype=int)
    scale = np.maximum(np.abs(hi - lo), 1e-300)
    for it in range(maxiter):
        width = hi - lo
        if np.all(width <= xtol * scale):
            break
        denom = fhi - flo
        with np.errstate(invalid="ignore", divide="ignore"):
            x = np.where(denom > 0, lo - flo * width / denom, 0.5 * (lo + hi))
        # every fourth sweep is pure bisection to guarantee progress
        if it % 4 == 3:
            x = 0.5 * (lo + hi)
        x = np.clip(x, lo, hi)
        fx = f(x)
        right = fx > 0
        hi = np.where(right, x, hi)
        fhi_new = np.where(right, fx, fhi)
        lo = np.where(right, lo, x)
        flo_new = np.where(right, flo, fx)
        # Illinois: halve the stale endpoint value after a repeated side
        flo_new = np.where(right & (side == 1), 0.5 * flo_new, flo_new)
        fhi_new = np.where(~right & (side == -1), 0.5 * fhi_new, fhi_new)
        side = np.where(right, 1, -1)
        flo, fhi = flo_new, fhi_new
        done = fx == 0
        lo = np.where(done, x, lo)
        hi = np.where(done, x, hi)
    return 0.5 * (lo + hi)
