"""Solved fields: interpolation, gradients, level sets and export."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..bodies import SupportSamples
from ..directions import sphere_directions, with_axes
from ..rootfind import illinois
from .grid import BODY, OUTER, UNKNOWN


class LevelSetError(RuntimeError):
    pass


@dataclass
class ScalarField:
    """Node values on a grid.

    Body nodes hold 1; outer nodes hold the outer boundary data, i.e. the
    radial profile ``outer_coef * H0^(1/q)`` (zero when ``outer_coef`` is 0).
    """

    grid: object
    values: np.ndarray
    outer_coef: float = 0.0
    q: float = -1.0
    dual: object = None

    @classmethod
    def from_unknowns(cls, grid, x, outer_coef=0.0, q=-1.0, dual=None):
        vals = np.empty(grid.shape)
        flat = vals.reshape(-1)
        flat[grid.unknown] = x
        st = grid.status.reshape(-1)
        flat[st == BODY] = 1.0
        out = st == OUTER
        flat[out] = outer_coef * grid.rho.reshape(-1)[out] ** (1 / q) if outer_coef else 0.0
        return cls(grid, vals, float(outer_coef), float(q), dual)

    def unknowns(self):
        return self.values.reshape(-1)[self.grid.unknown]

    def _outside_box(self, rel):
        if not self.outer_coef:
            return np.zeros(len(rel))
        return self.outer_coef * self.dual.eval(rel) ** (1 / self.q)

    def __call__(self, x):
        """Trilinear interpolation at absolute points x, shape (..., N)."""
        g = self.grid
        x = np.asarray(x, float)
        shp = x.shape[:-1]
        rel = x.reshape(-1, g.dim) - g.origin
        idx = (rel - g.lower) / g.spacing
        inside = np.all((idx >= 0) & (idx <= np.array(g.shape) - 1), axis=1)
        out = np.empty(len(rel))
        out[inside] = ndimage.map_coordinates(self.values, idx[inside].T, order=1, mode="nearest")
        if np.any(~inside):
            out[~inside] = self._outside_box(rel[~inside])
        return out.reshape(shp)

    def positions(self, absolute=True):
        return self.grid.node_positions(absolute=absolute)

    def to_csv(self, path, unknown_only=False):
        pos = self.positions().reshape(-1, self.grid.dim)
        vals = self.values.reshape(-1)
        if unknown_only:
            pos, vals = pos[self.grid.unknown], vals[self.grid.unknown]
        names = ["x", "y", "z"] if self.grid.dim == 3 else [f"x{i}" for i in range(self.grid.dim)]
        np.savetxt(path, np.column_stack([pos, vals]), delimiter=",", header=",".join(names + ["u"]),
                   comments="", fmt="%.12g")

    def header(self):
        meta = self.grid.metadata()
        meta.update(outer_coef=self.outer_coef, q=self.q)
        return meta

    def save(self, stem):
        """Write ``stem.csv`` and a ``stem.json`` header."""
        self.to_csv(f"{stem}.csv")
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.header(), fh, sort_keys=True, indent=1)


@dataclass
class GradientSamples:
    grad: np.ndarray       # (n_valid, N)
    h_du: np.ndarray       # H(Du) at the valid nodes
    positions: np.ndarray  # relative node coordinates of the valid nodes
    rho: np.ndarray        # H0 of those coordinates
    mask: np.ndarray       # valid-node mask on the full grid


def gradient_field(field, norm):
    """Central-difference gradient at unknown nodes whose 2N neighbours are unknown."""
    g = field.grid
    comps = np.gradient(field.values, *g.spacing, edge_order=1)
    if g.dim == 1:
        comps = [comps]
    unk = g.status == UNKNOWN
    mask = unk.copy()
    for d in range(g.dim):
        up = np.zeros_like(unk)
        dn = np.zeros_like(unk)
        sl = [slice(None)] * g.dim
        sl_a, sl_b = list(sl), list(sl)
        sl_a[d], sl_b[d] = slice(0, -1), slice(1, None)
        up[tuple(sl_a)] = unk[tuple(sl_b)]
        dn[tuple(sl_b)] = unk[tuple(sl_a)]
        mask &= up & dn
    G = np.stack([c[mask] for c in comps], axis=-1)
    pos = g.node_positions()[mask]
    return GradientSamples(grad=G, h_du=norm.eval(G), positions=pos, rho=g.rho[mask], mask=mask)


def boundary_trace(field, dual, R, directions, radius_cells=6.0, skip_cells=1.0, norm=None):
    """H(Du) at points y of the outer surface H0 = R, one per direction.

    Near each y the unknown nodal values are fitted by
    ``phi * g`` with ``phi = (R - H0) / h``, which vanishes on the whole
    surface, and g = a + b.d + phi (c0 + c1 phi + c2.d) in cell offsets d.  Nodes closer than ``skip_cells`` to the surface are
    left out since the cut-cell layer carries the largest nodal error.
    On the surface Du = -a grad H0 / h, so H(Du) = |a| / h because
    H(grad H0) = 1; ``norm`` is only used to evaluate that identity.
    """
    g = field.grid
    N = g.dim
    dirs = np.asarray(directions, float)
    y = R * dirs / dual.eval(dirs)[:, None]
    h = float(np.max(g.spacing))
    unk = g.status == UNKNOWN
    span = int(np.ceil(radius_cells * h / np.min(g.spacing)))
    offs = np.stack(np.meshgrid(*([np.arange(-span, span + 1)] * N), indexing="ij"), -1).reshape(-1, N)
    out = np.full(len(dirs), np.nan)
    for i in range(len(dirs)):
        idx = np.round((y[i] - g.lower) / g.spacing).astype(int) + offs
        idx = idx[np.all((idx >= 0) & (idx < np.array(g.shape)), axis=1)]
        idx = idx[unk[tuple(idx.T)]]
        x = g.lower + idx * g.spacing
        d = (x - y[i]) / h
        phi = (R - dual.eval(x)) / h
        near = (np.linalg.norm(d, axis=1) <= radius_cells) & (phi >= skip_cells)
        if near.sum() < 4 * (2 * N + 3):
            continue
        d, phi = d[near], phi[near]
        A = np.column_stack([phi, phi[:, None] * d, phi ** 2, phi ** 3, (phi ** 2)[:, None] * d])
        coef, *_ = np.linalg.lstsq(A, field.values[tuple(idx[near].T)], rcond=None)
        if norm is not None:
            out[i] = float(norm.eval(-coef[0] * dual.grad(y[i]) / h))
        else:
            out[i] = abs(coef[0]) / h
    return out


def extract_level_set(field, t, direction_count=512, anchor=None):
    """Support samples of {u >= t} from ray bisection about an interior anchor."""
    g = field.grid
    if not (0.0 < t < 1.0):
        raise LevelSetError("level must lie strictly between the outer data and 1")
    anchor = g.origin if anchor is None else np.asarray(anchor, float)
    dirs = with_axes(sphere_directions(direction_count, g.dim))
    h = float(np.min(g.spacing))
    smax = float(np.min(-g.lower)) * 0.999
    steps = np.arange(0.0, smax + h / 2, h / 2)
    vals = field(anchor + steps[None, :, None] * dirs[:, None, :])  # (m, S)
    below = vals < t
    if not np.all(below.any(axis=1)):
        raise LevelSetError(f"level {t} not bracketed along {int((~below.any(axis=1)).sum())} rays")
    if np.any(vals[:, 0] < t):
        raise LevelSetError("anchor is not inside the superlevel set")
    first = np.argmax(below, axis=1)
    lo = steps[first - 1]
    hi = steps[first]

    def f(s):
        return t - field(anchor + s[:, None] * dirs)

    s = illinois(f, lo, hi, xtol=1e-10)
    pts = anchor + s[:, None] * dirs
    # support of the convex hull of the boundary points
    hvals = np.max(dirs @ pts.T, axis=1)
    return SupportSamples(dirs, hvals, center=anchor), pts
