"""Tensor grids over truncated exterior domains and the discrete energy on them.

The energy of a field u is a sum over grid cells.  Inside each cell every
corner that is an unknown node contributes a one-sided gradient built from
the cell edges leaving that corner; edges cut by the body or by the outer
Wulff surface use the distance to the crossing point instead of the grid
spacing (Shortley-Weller style), and the cell weight is the fraction of the
cell that lies in the domain.  Each gradient component is an affine function
of the unknowns, so the energy is convex whenever H^p is.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

OUTER, UNKNOWN, BODY = 0, 1, 2
THETA_MIN = 0.02
SUBSAMPLES = 4


class GridError(ValueError):
    pass


@dataclass
class EdgeSet:
    """Edges along one axis with at least one unknown end.

    The difference quotient on edge e is
    ``cl[e] * x[lo[e]] + ch[e] * x[hi[e]] + cb_body[e] + outer_value * cb_outer[e]``
    where ``x`` is the vector of unknowns extended by a trailing zero slot.
    The final entry of every array is an inert dummy edge.
    """

    lo: np.ndarray
    hi: np.ndarray
    cl: np.ndarray
    ch: np.ndarray
    cb_body: np.ndarray
    cb_outer: np.ndarray
    cut: np.ndarray

    def __len__(self):
        return len(self.lo)


@dataclass
class Grid:
    dim: int
    lower: np.ndarray
    spacing: np.ndarray
    shape: tuple
    origin: np.ndarray
    R_out: float
    status: np.ndarray
    rho: np.ndarray
    unknown: np.ndarray
    edges: list
    blocks: list
    body_description: dict = field(default_factory=dict)

    @property
    def n_unknowns(self):
        return len(self.unknown)

    @property
    def total_volume(self):
        return float(sum(b.weights.sum() for b in self.blocks))

    def axes(self):
        return [self.lower[d] + self.spacing[d] * np.arange(self.shape[d]) for d in range(self.dim)]

    def node_positions(self, absolute=False):
        """Node coordinates, shape shape + (dim,)."""
        mesh = np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)
        return mesh + self.origin if absolute else mesh

    def counts(self):
        return {name: int(np.sum(self.status == code))
                for name, code in (("outer", OUTER), ("unknown", UNKNOWN), ("body", BODY))}

    def metadata(self):
        return {
            "dim": self.dim,
            "shape": list(self.shape),
            "lower": self.lower.tolist(),
            "spacing": self.spacing.tolist(),
            "origin": self.origin.tolist(),
            "R_out": self.R_out,
            "counts": self.counts(),
            "body": self.body_description,
        }


def _corner_view(arr, corner):
    """View of a node array restricted to one corner of every cell."""
    sl = tuple(slice(1, None) if c else slice(0, -1) for c in corner)
    return arr[sl]


def build_grid(body, dual, R_out, resolution, box_radius=None):
    """Grid for the exterior of ``body`` truncated at H0(x - center) = R_out.

    Coordinates are relative to ``body.center`` (stored as ``origin``).  The
    box is [-L, L] per axis with L_i = box_radius * H(e_i), which just
    contains B_H0(box_radius); ``box_radius`` defaults to ``R_out``.
    """
    N = dual.dim
    if body.dim != N:
        raise GridError("body and norm dimension mismatch")
    if resolution < 4:
        raise GridError("resolution too small")
    box_radius = R_out if box_radius is None else box_radius
    if box_radius < R_out:
        raise GridError("box must contain the outer Wulff shape")
    origin = np.array(body.center, dtype=float)
    circ = body.circumradius(dual)
    if not circ < R_out:
        raise GridError(f"body (circumradius {circ:.4g}) not strictly inside B_H0({R_out:g})")
    H = dual.source
    half = box_radius * H.eval(np.eye(N))
    n = int(resolution)
    spacing = 2 * half / (n - 1)
    lower = -half
    shape = (n,) * N
    axes = [lower[d] + spacing[d] * np.arange(n) for d in range(N)]
    pos = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    rho = dual.eval(pos.reshape(-1, N)).reshape(shape)

    status = np.full(shape, UNKNOWN, dtype=np.int8)
    status[rho >= R_out] = OUTER
    near = rho <= circ * (1 + 1e-9) + 1e-12
    gauge = np.full(shape, np.inf)
    gauge[near] = body.gauge(pos[near] + origin)
    status[gauge <= 1.0] = BODY
    if not np.any(status == UNKNOWN):
        raise GridError("no unknown nodes; resolution too coarse")

    unknown = np.flatnonzero(status == UNKNOWN)
    n_unk = len(unknown)
    uidx = np.full(status.size, n_unk, dtype=np.int64)
    uidx[unknown] = np.arange(n_unk)
    flat_status = status.ravel()
    flat_rho = rho.ravel()
    flat_pos = pos.reshape(-1, N)
    strides = np.array([int(np.prod(shape[d + 1:])) for d in range(N)])
    node_ids = np.arange(status.size).reshape(shape)

    edges = []
    edge_ids = []
    for d in range(N):
        sl_lo = tuple(slice(0, -1) if e == d else slice(None) for e in range(N))
        lo_nodes = node_ids[sl_lo]
        eshape = lo_nodes.shape
        lo_nodes = lo_nodes.ravel()
        hi_nodes = lo_nodes + strides[d]
        s_lo, s_hi = flat_status[lo_nodes], flat_status[hi_nodes]
        active = (s_lo == UNKNOWN) | (s_hi == UNKNOWN)
        lo_a, hi_a = lo_nodes[active], hi_nodes[active]
        sl_a, sh_a = s_lo[active], s_hi[active]
        m = len(lo_a)
        h = spacing[d]
        cl = np.full(m, -1.0 / h)
        ch = np.full(m, 1.0 / h)
        cbB = np.zeros(m)
        cbO = np.zeros(m)
        theta = np.ones(m)
        # owner = unknown end, other = Dirichlet end of a cut edge
        cut_hi = sh_a != UNKNOWN
        cut_lo = sl_a != UNKNOWN
        if np.any(cut_hi & cut_lo):
            raise GridError("edge with two Dirichlet ends")
        owner = np.where(cut_lo, hi_a, lo_a)
        other = np.where(cut_lo, lo_a, hi_a)
        other_status = np.where(cut_lo, sl_a, sh_a)
        cut = cut_lo | cut_hi
        to_body = cut & (other_status == BODY)
        to_outer = cut & (other_status == OUTER)
        if np.any(to_body):
            b = flat_pos[other[to_body]] + origin
            a = flat_pos[owner[to_body]] + origin
            s = np.clip(body.ray_exit(b, a - b), 0.0, 1.0)
            theta[to_body] = 1.0 - s
        if np.any(to_outer):
            ra = flat_rho[owner[to_outer]]
            ro = flat_rho[other[to_outer]]
            theta[to_outer] = (R_out - ra) / (ro - ra)
        theta = np.clip(theta, THETA_MIN, 1.0)
        inv = 1.0 / (theta * h)
        # lo end is the Dirichlet one
        cl = np.where(cut_lo, 0.0, np.where(cut_hi, -inv, cl))
        ch = np.where(cut_hi, 0.0, np.where(cut_lo, inv, ch))
        sign = np.where(cut_lo, -1.0, 1.0)
        cbB = np.where(to_body, sign * inv, 0.0)
        cbO = np.where(to_outer, sign * inv, 0.0)
        app = lambda arr, v=0.0: np.append(arr, v)
        edges.append(EdgeSet(
            lo=app(uidx[lo_a], n_unk).astype(np.int64),
            hi=app(uidx[hi_a], n_unk).astype(np.int64),
            cl=app(cl), ch=app(ch), cb_body=app(cbB), cb_outer=app(cbO),
            cut=app(cut, False).astype(bool),
        ))
        ids = np.full(np.prod(eshape), m, dtype=np.int64)
        ids[np.flatnonzero(active)] = np.arange(m)
        edge_ids.append(ids.reshape(eshape))

    corners = np.array(list(itertools.product((0, 1), repeat=N)))
    corner_status = np.stack([_corner_view(status, k) for k in corners]).reshape(len(corners), -1)
    n_unk_corners = (corner_status == UNKNOWN).sum(axis=0)
    active_cells = np.flatnonzero(n_unk_corners > 0)
    cstat = corner_status[:, active_cells]
    nU = n_unk_corners[active_cells]
    cell_vol = float(np.prod(spacing))
    cell_shape = tuple(s - 1 for s in shape)
    geo = _CellGeometry(body, origin, rho, R_out, lower, spacing, cell_shape, corners)

    blocks = []
    # cells with only unknown corners: equal shares, edges incident to each corner
    full = np.flatnonzero(nU == len(corners))
    w = np.full((len(corners), len(full)), cell_vol / len(corners))
    blocks.append(_block(edge_ids, corners, active_cells[full], w, fallback=False))
    # cut cells: every corner carries the domain volume of its own octant;
    # corners whose own edge is inactive borrow the active parallel edges
    cut = np.flatnonzero(nU < len(corners))
    if len(cut):
        frac = geo.octant_fractions(active_cells[cut])
        _fill_slivers(frac, edges, edge_ids, corners, cstat[:, cut], active_cells[cut], spacing)
        w = frac.T * (cell_vol / len(corners))
        blocks.append(_block(edge_ids, corners, active_cells[cut], w, fallback=True))
    return Grid(
        dim=N, lower=lower, spacing=spacing, shape=shape, origin=origin, R_out=float(R_out),
        status=status, rho=rho, unknown=unknown, edges=edges, blocks=blocks,
        body_description=body.to_dict() if body.kind != "support_samples" else {"kind": body.kind},
    )


@dataclass
class CellBlock:
    """Corner gradients of a set of cells.

    Component d of the gradient at corner k of cell c is
    ``sum_j coefs[k, d, j, c] * D_d[edges[k, d, j, c]]``; ``coefs`` is None
    when every corner uses a single edge per component.
    """

    weights: np.ndarray
    edges: np.ndarray
    coefs: np.ndarray | None = None

    @property
    def n_corners(self):
        return self.weights.shape[0]


def _block(edge_ids, corners, cells, weights, fallback):
    N = corners.shape[1]
    K = len(corners)
    C = len(cells)
    others = [np.array(list(itertools.product((0, 1), repeat=N - 1))) for _ in range(N)]

    def edge_slice(d, k):
        sl = tuple(slice(0, None) if e == d else (slice(1, None) if k[e] else slice(0, -1))
                   for e in range(N))
        return edge_ids[d][sl].ravel()[cells]

    if not fallback:
        ed = np.zeros((K, N, 1, C), dtype=np.int64)
        for ki, k in enumerate(corners):
            for d in range(N):
                ed[ki, d, 0] = edge_slice(d, k)
        return CellBlock(weights=np.ascontiguousarray(weights), edges=ed)
    S = 2 ** (N - 1)
    ed = np.zeros((K, N, S, C), dtype=np.int64)
    co = np.zeros((K, N, S, C))
    for d in range(N):
        dummy = edge_ids[d].max()
        par = []
        for o in others[d]:
            k = np.insert(o, d, 0)
            par.append(edge_slice(d, k))
        par = np.array(par)  # (S, C)
        act = par != dummy
        n_act = act.sum(axis=0)
        for ki, k in enumerate(corners):
            own = int(np.flatnonzero((others[d] == np.delete(k, d)).all(axis=1))[0])
            own_active = act[own]
            ed[ki, d] = par
            co[ki, d] = np.where(own_active, 0.0, act / np.maximum(n_act, 1))
            co[ki, d, own] = np.where(own_active, 1.0, co[ki, d, own])
    return CellBlock(weights=np.ascontiguousarray(weights), edges=ed, coefs=co)


def _planar_fraction(a):
    """Volume of {x in [0,1]^N : sum_d x_d / a_d <= 1}; a_d = inf for uncut axes."""
    a = np.asarray(a, float)
    inv = np.where(np.isfinite(a), 1.0 / a, 0.0)
    k = np.isfinite(a).sum(axis=1)
    out = np.ones(len(a))
    for kk in np.unique(k):
        if kk == 0:
            continue
        rows = k == kk
        tot = np.zeros(rows.sum())
        for S in itertools.product((0, 1), repeat=a.shape[1]):
            S = np.array(S, bool)
            # inclusion-exclusion over the cut axes only
            live = np.isfinite(a[rows][:, S]).all(axis=1)
            s = inv[rows][:, S].sum(axis=1)
            tot += np.where(live, (-1) ** S.sum() * np.maximum(1.0 - s, 0.0) ** kk, 0.0)
        prod = np.prod(np.where(np.isfinite(a[rows]), a[rows], 1.0), axis=1)
        out[rows] = np.minimum(prod * tot / math.factorial(kk), 1.0)
    return out


def _fill_slivers(frac, edges, edge_ids, corners, cstat, cells, spacing):
    """Octants of unknown nodes that no sub-sample reached get the volume cut
    off by the plane through the Shortley-Weller crossings of their edges.

    This keeps a node just outside a flat face coupled to the boundary data
    when the domain sliver is thinner than the sub-sample spacing.
    """
    N = corners.shape[1]
    empty = (frac.T == 0) & (cstat == UNKNOWN)  # (K, C)
    if not np.any(empty):
        return
    for ki, k in enumerate(corners):
        cols = np.flatnonzero(empty[ki])
        if not len(cols):
            continue
        a = np.full((len(cols), N), np.inf)
        for d in range(N):
            sl = tuple(slice(0, None) if e == d else (slice(1, None) if k[e] else slice(0, -1))
                       for e in range(N))
            eid = edge_ids[d][sl].ravel()[cells[cols]]
            e = edges[d]
            cutm = e.cut[eid]
            inv = np.maximum(np.abs(e.cl[eid]), np.abs(e.ch[eid]))
            a[cutm, d] = 2.0 / (inv[cutm] * spacing[d])
        frac[cols, ki] = np.where(np.isfinite(a).any(axis=1), _planar_fraction(a), 0.0)


class _CellGeometry:
    """Domain membership of sub-cell sample points."""

    def __init__(self, body, origin, rho, R_out, lower, spacing, cell_shape, corners):
        self.body, self.origin, self.rho, self.R_out = body, origin, rho, R_out
        self.lower, self.spacing, self.cell_shape, self.corners = lower, spacing, cell_shape, corners

    def octant_fractions(self, cells, m=SUBSAMPLES):
        """Fraction of each corner octant inside the domain, shape (C, 2^N)."""
        N = len(self.cell_shape)
        K = len(self.corners)
        idx = np.array(np.unravel_index(cells, self.cell_shape)).T
        sub = (np.arange(m) + 0.5) / (2 * m)
        base = np.stack(np.meshgrid(*([sub] * N), indexing="ij"), axis=-1).reshape(-1, N)
        offs = (self.corners[:, None, :] * 0.5 + base[None]).reshape(-1, N)  # (K*m^N, N)
        crho = np.stack([self.rho[tuple((idx + k).T)] for k in self.corners], axis=1)
        wts = np.prod(np.where(self.corners[None, :, :] == 1, offs[:, None, :], 1 - offs[:, None, :]), axis=2)
        out = np.empty((len(cells), K))
        chunk = max(1, 200000 // len(offs))
        for s in range(0, len(cells), chunk):
            sl = slice(s, s + chunk)
            inside = (crho[sl] @ wts.T) < self.R_out
            pts = self.lower + (idx[sl][:, None, :] + offs[None]) * self.spacing + self.origin
            near = inside.copy()
            if np.any(near):
                g = np.full(inside.shape, np.inf)
                g[near] = self.body.gauge(pts[near])
                inside &= g > 1.0
            out[sl] = inside.reshape(len(inside), K, -1).mean(axis=2)
        return out


class DiscreteEnergy:
    """(1/p) sum_cells w (H^2(D_h u) + eps^2 s^2)^(p/2), as a function of the unknowns."""

    def __init__(self, grid, norm, p, eps=0.0, scale=1.0, outer_value=0.0):
        if eps < 0:
            raise ValueError("epsilon must be >= 0")
        self.grid = grid
        self.norm = norm
        self.p = float(p)
        self.eps = float(eps)
        self.scale = float(scale)
        self.outer_value = float(outer_value)
        self._e2 = (self.eps * self.scale) ** 2
        self._cb = [e.cb_body + self.outer_value * e.cb_outer for e in grid.edges]
        self._kappa = np.ones(grid.dim)
        if norm.kind == "ellipsoid":
            self._kappa = np.diag(norm.A).copy()
        self._n = grid.n_unknowns

    def _differences(self, x):
        xe = np.empty(self._n + 1)
        xe[:-1] = x
        xe[-1] = 0.0
        return [e.cl * xe[e.lo] + e.ch * xe[e.hi] + cb for e, cb in zip(self.grid.edges, self._cb)]

    def _density(self, h2):
        t = h2 + self._e2 if self._e2 else h2
        p = self.p
        if p == 2.0:
            return 0.5 * t, None
        with np.errstate(divide="ignore", invalid="ignore"):
            tp = np.where(t > 0, t ** (p / 2 - 1), 0.0)
        return t * tp / p, tp

    def _corners(self, D):
        """Yield (block, k, weights, gradient components) for every corner."""
        for blk in self.grid.blocks:
            for k in range(blk.n_corners):
                if blk.coefs is None:
                    comps = [D[d][blk.edges[k, d, 0]] for d in range(self.grid.dim)]
                else:
                    comps = [np.einsum("sc,sc->c", blk.coefs[k, d], D[d][blk.edges[k, d]])
                             for d in range(self.grid.dim)]
                yield blk, k, blk.weights[k], comps

    def _scatter(self, G, blk, k, vals):
        for d in range(self.grid.dim):
            if blk.coefs is None:
                e = blk.edges[k, d, 0]
                G[d] += np.bincount(e, vals[d], minlength=len(G[d]))
            else:
                e = blk.edges[k, d].ravel()
                G[d] += np.bincount(e, (blk.coefs[k, d] * vals[d]).ravel(), minlength=len(G[d]))

    def value(self, x):
        E = 0.0
        for _, _, w, comps in self._corners(self._differences(x)):
            h2, _ = self.norm.h2_halfgrad(comps)
            E += float(w @ self._density(h2)[0])
        return E

    def value_and_grad(self, x):
        D = self._differences(x)
        g = self.grid
        E = 0.0
        G = [np.zeros(len(e)) for e in g.edges]
        for blk, k, w, comps in self._corners(D):
            h2, hg = self.norm.h2_halfgrad(comps)
            F, tp = self._density(h2)
            E += float(w @ F)
            wd = w if tp is None else w * tp
            self._scatter(G, blk, k, [wd * c for c in hg])
        grad = np.zeros(self._n + 1)
        for e, Gd in zip(g.edges, G):
            grad += np.bincount(e.lo, e.cl * Gd, minlength=self._n + 1)
            grad += np.bincount(e.hi, e.ch * Gd, minlength=self._n + 1)
        return E, grad[:-1]

    def diagonal(self, x):
        """Jacobi estimate of the Hessian diagonal at x (used as a preconditioner)."""
        D = self._differences(x)
        g = self.grid
        p = self.p
        acc = [np.zeros(len(e)) for e in g.edges]
        for blk, k, w, comps in self._corners(D):
            if p == 2.0:
                wd = w
            else:
                h2, _ = self.norm.h2_halfgrad(comps)
                t = h2 + self._e2
                live = t[w > 0]
                floor = max(float(np.percentile(live, 5)) if len(live) else 1.0, 1e-30)
                wd = w * max(1.0, p - 1) * np.maximum(t, floor) ** (p / 2 - 1)
            if blk.coefs is None:
                self._scatter(acc, blk, k, [self._kappa[d] * wd for d in range(g.dim)])
            else:
                for d in range(g.dim):
                    e = blk.edges[k, d].ravel()
                    acc[d] += np.bincount(e, (self._kappa[d] * blk.coefs[k, d] ** 2 * wd).ravel(),
                                          minlength=len(acc[d]))
        diag = np.zeros(self._n + 1)
        for e, a in zip(g.edges, acc):
            diag += np.bincount(e.lo, e.cl**2 * a, minlength=self._n + 1)
            diag += np.bincount(e.hi, e.ch**2 * a, minlength=self._n + 1)
        diag = diag[:-1]
        pos = diag[diag > 0]
        return np.maximum(diag, 1e-12 * (pos.max() if len(pos) else 1.0))
