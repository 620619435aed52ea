"""Convex bodies described by support functions.

Every body exposes ``support`` (vectorized over directions), a Minkowski
``gauge`` about its interior ``center``, and ``ray_exit`` (distance from an
interior anchor to the boundary along a direction).  Everything else in the
package is written against this small interface.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .directions import sphere_directions, with_axes
from .norms import DualNorm, NormSpec
from .rootfind import illinois


class BodyError(ValueError):
    pass


def _vec(x, dim=None):
    x = np.asarray(x, dtype=float)
    if dim is not None and x.shape[-1] != dim:
        raise BodyError(f"expected dimension {dim}, got {x.shape[-1]}")
    return x


class ConvexBody:
    """Base class; subclasses set ``dim`` and ``center``."""

    kind = "abstract"
    dim: int
    center: np.ndarray

    # smooth C^2 boundary (the rigidity theorems assume it)
    smooth = True

    def support(self, dirs):
        raise NotImplementedError

    def gauge(self, x):
        raise NotImplementedError

    def contains(self, x, rtol=1e-12):
        return self.gauge(x) <= 1.0 + rtol

    def ray_exit(self, anchor, v):
        """Distance s >= 0 with anchor + s v on the boundary (anchor inside)."""
        anchor = np.broadcast_to(_vec(anchor, self.dim), np.shape(v))
        v = _vec(v, self.dim)
        g0 = self.gauge(anchor)
        if np.any(g0 > 1.0 + 1e-12):
            raise BodyError("anchor not interior")
        hi = np.ones(v.shape[:-1])
        for _ in range(200):
            out = self.gauge(anchor + hi[..., None] * v) > 1.0
            if out.all():
                break
            hi = np.where(out, hi, 2 * hi)
        return illinois(lambda s: self.gauge(anchor + s[..., None] * v) - 1.0, np.zeros_like(hi), hi)

    def translated(self, shift):
        raise NotImplementedError

    def scaled(self, t):
        """Dilation about the origin by t > 0."""
        raise NotImplementedError

    def circumradius(self, dual, dirs=None):
        """Smallest r with body inside center + B_H0(r) (sampled over directions)."""
        if dirs is None:
            dirs = with_axes(sphere_directions(4096, self.dim))
        h = self.support(dirs) - dirs @ self.center
        return float(np.max(h / dual.source.eval(dirs)))

    def inradius(self, dual, dirs=None):
        if dirs is None:
            dirs = with_axes(sphere_directions(4096, self.dim))
        h = self.support(dirs) - dirs @ self.center
        return float(np.min(h / dual.source.eval(dirs)))

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Wulff(ConvexBody):
    """{x : H0(x - center) < radius}."""

    dual: DualNorm
    radius: float
    center: np.ndarray = None
    kind = "wulff"

    def __post_init__(self):
        if not self.radius > 0:
            raise BodyError("radius must be positive")
        c = np.zeros(self.dual.dim) if self.center is None else _vec(self.center, self.dual.dim)
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.dual.dim

    def support(self, dirs):
        dirs = _vec(dirs, self.dim)
        return dirs @ self.center + self.radius * self.dual.source.eval(dirs)

    def gauge(self, x):
        return self.dual.eval(_vec(x, self.dim) - self.center) / self.radius

    def ray_exit(self, anchor, v):
        anchor = np.broadcast_to(_vec(anchor, self.dim), np.shape(v))
        v = _vec(v, self.dim)
        d = anchor - self.center
        if np.all(d == 0):
            return self.radius / self.dual.eval(v)
        if self.dual.method == "closed_form" and self.dual.source.kind != "lq":
            M = self.dual.as_norm().A if self.dual.source.kind == "ellipsoid" else np.eye(self.dim)
            a = np.einsum("...i,ij,...j->...", v, M, v)
            b = np.einsum("...i,ij,...j->...", v, M, d)
            c = np.einsum("...i,ij,...j->...", d, M, d) - self.radius**2
            if np.any(c > 1e-12 * self.radius**2):
                raise BodyError("anchor not interior")
            return (-b + np.sqrt(np.maximum(b * b - a * c, 0.0))) / a
        hi = (self.radius + self.dual.eval(d)) / self.dual.eval(v) * 1.01
        return illinois(lambda s: self.gauge(anchor + s[..., None] * v) - 1.0, np.zeros_like(hi), hi)

    def translated(self, shift):
        return Wulff(self.dual, self.radius, self.center + _vec(shift, self.dim))

    def scaled(self, t):
        return Wulff(self.dual, self.radius * t, self.center * t)

    def circumradius(self, dual, dirs=None):
        if dual == self.dual:
            return float(self.radius)
        return super().circumradius(dual, dirs)

    def inradius(self, dual, dirs=None):
        if dual == self.dual:
            return float(self.radius)
        return super().inradius(dual, dirs)

    def to_dict(self):
        return {"kind": "wulff", "norm": self.dual.source.describe(), "radius": self.radius,
                "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class Ellipsoid(ConvexBody):
    """{x : (x - c)^T Q^{-1} (x - c) <= 1} with Q symmetric positive definite."""

    shape: np.ndarray
    center: np.ndarray = None
    kind = "ellipsoid"

    def __post_init__(self):
        Q = _vec(self.shape)
        if Q.ndim == 1:
            Q = np.diag(Q**2)
        if Q.shape[0] != Q.shape[1] or np.linalg.eigvalsh(Q).min() <= 0:
            raise BodyError("ellipsoid shape must be SPD")
        object.__setattr__(self, "shape", Q)
        c = np.zeros(Q.shape[0]) if self.center is None else _vec(self.center, Q.shape[0])
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "_Qinv", np.linalg.inv(Q))

    @classmethod
    def from_semi_axes(cls, axes, center=None):
        return cls(np.diag(np.asarray(axes, float) ** 2), center)

    @property
    def dim(self):
        return self.shape.shape[0]

    def support(self, dirs):
        dirs = _vec(dirs, self.dim)
        return dirs @ self.center + np.sqrt(np.einsum("...i,ij,...j->...", dirs, self.shape, dirs))

    def gauge(self, x):
        d = _vec(x, self.dim) - self.center
        return np.sqrt(np.einsum("...i,ij,...j->...", d, self._Qinv, d))

    def ray_exit(self, anchor, v):
        anchor = np.broadcast_to(_vec(anchor, self.dim), np.shape(v))
        v = _vec(v, self.dim)
        d = anchor - self.center
        M = self._Qinv
        a = np.einsum("...i,ij,...j->...", v, M, v)
        b = np.einsum("...i,ij,...j->...", v, M, d)
        c = np.einsum("...i,ij,...j->...", d, M, d) - 1.0
        if np.any(c > 1e-12):
            raise BodyError("anchor not interior")
        return (-b + np.sqrt(np.maximum(b * b - a * c, 0.0))) / a

    def translated(self, shift):
        return Ellipsoid(self.shape, self.center + _vec(shift, self.dim))

    def scaled(self, t):
        return Ellipsoid(self.shape * t * t, self.center * t)

    def to_dict(self):
        return {"kind": "ellipsoid", "shape": self.shape.tolist(), "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class Box(ConvexBody):
    """Axis-aligned box with the given half-widths (not C^2: a negative-test body)."""

    half_widths: np.ndarray
    center: np.ndarray = None
    kind = "box"
    smooth = False

    def __post_init__(self):
        hw = _vec(self.half_widths)
        if np.any(hw <= 0):
            raise BodyError("half-widths must be positive")
        object.__setattr__(self, "half_widths", hw)
        c = np.zeros(hw.shape[0]) if self.center is None else _vec(self.center, hw.shape[0])
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.half_widths.shape[0]

    def support(self, dirs):
        dirs = _vec(dirs, self.dim)
        return dirs @ self.center + np.abs(dirs) @ self.half_widths

    def gauge(self, x):
        return np.max(np.abs(_vec(x, self.dim) - self.center) / self.half_widths, axis=-1)

    def ray_exit(self, anchor, v):
        anchor = np.broadcast_to(_vec(anchor, self.dim), np.shape(v))
        v = _vec(v, self.dim)
        if np.any(self.gauge(anchor) > 1 + 1e-12):
            raise BodyError("anchor not interior")
        wall = self.center + np.sign(v) * self.half_widths
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(v != 0, (wall - anchor) / v, np.inf)
        return np.maximum(t.min(axis=-1), 0.0)

    def translated(self, shift):
        return Box(self.half_widths, self.center + _vec(shift, self.dim))

    def scaled(self, t):
        return Box(self.half_widths * t, self.center * t)

    def to_dict(self):
        return {"kind": "box", "half_widths": self.half_widths.tolist(), "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class SupportSamples(ConvexBody):
    """Polyhedral outer approximation {x : <x, u_j> <= h_j for all j}."""

    directions: np.ndarray
    values: np.ndarray
    center: np.ndarray = None
    kind = "support_samples"

    def __post_init__(self):
        U = _vec(self.directions)
        h = _vec(self.values)
        if U.ndim != 2 or h.shape != (U.shape[0],):
            raise BodyError("directions (m, dim) and values (m,) must be parallel arrays")
        U = U / np.linalg.norm(U, axis=1, keepdims=True)
        object.__setattr__(self, "directions", U)
        object.__setattr__(self, "values", h)
        if self.center is None:
            c = steiner_point(U, h)
        else:
            c = _vec(self.center, U.shape[1])
        object.__setattr__(self, "center", c)
        if np.any(h - U @ c <= 0):
            raise BodyError("center is not interior to the sampled body")

    @property
    def dim(self):
        return self.directions.shape[1]

    @cached_property
    def vertices(self):
        halfspaces = np.column_stack([self.directions, -self.values])
        hs = HalfspaceIntersection(halfspaces, self.center)
        return hs.intersections

    @cached_property
    def _radii(self):
        rel = self.values - self.directions @ self.center
        rout = np.max(np.linalg.norm(self.vertices - self.center, axis=1))
        return rel.min(), rout

    def support(self, dirs):
        dirs = _vec(dirs, self.dim)
        flat = dirs.reshape(-1, self.dim)
        out = np.empty(len(flat))
        # exact stored value when a direction was sampled, polytope support otherwise
        for lo in range(0, len(flat), 4096):
            d = flat[lo:lo + 4096]
            dots = d @ self.directions.T
            k = np.argmax(dots, axis=1)
            same = dots[np.arange(len(d)), k] > 1 - 1e-13
            val = np.max(d @ self.vertices.T, axis=1)
            out[lo:lo + 4096] = np.where(same, self.values[k], val)
        return out.reshape(dirs.shape[:-1])

    def gauge(self, x):
        x = _vec(x, self.dim)
        flat = (x - self.center).reshape(-1, self.dim)
        rel = self.values - self.directions @ self.center
        out = np.empty(len(flat))
        step = max(1, 4_000_000 // len(rel))
        for lo in range(0, len(flat), step):
            out[lo:lo + step] = np.max(flat[lo:lo + step] @ self.directions.T / rel, axis=1)
        return np.maximum(out, 0.0).reshape(x.shape[:-1])

    def ray_exit(self, anchor, v):
        anchor = np.broadcast_to(_vec(anchor, self.dim), np.shape(v))
        v = _vec(v, self.dim)
        A = anchor.reshape(-1, self.dim)
        V = v.reshape(-1, self.dim)
        out = np.empty(len(A))
        step = max(1, 4_000_000 // len(self.values))
        for lo in range(0, len(A), step):
            slack = self.values - A[lo:lo + step] @ self.directions.T
            if np.any(slack < -1e-12 * np.abs(self.values).max()):
                raise BodyError("anchor not interior")
            rate = V[lo:lo + step] @ self.directions.T
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(rate > 0, np.maximum(slack, 0.0) / rate, np.inf)
            out[lo:lo + step] = t.min(axis=1)
        return out.reshape(v.shape[:-1])

    def translated(self, shift):
        shift = _vec(shift, self.dim)
        return SupportSamples(self.directions, self.values + self.directions @ shift, self.center + shift)

    def scaled(self, t):
        return SupportSamples(self.directions, self.values * t, self.center * t)

    def to_dict(self):
        return {"kind": "support_samples", "directions": self.directions.tolist(),
                "values": self.values.tolist(), "center": self.center.tolist()}


# ---------------------------------------------------------------------------


def steiner_point(dirs, h):
    """Steiner point N * mean(h(u) u), using the sample mean as the sphere average."""
    dirs = np.asarray(dirs, float)
    return dirs.shape[1] * np.mean(np.asarray(h)[:, None] * dirs, axis=0)


def body_from_dict(d, dual=None):
    kind = d["kind"]
    if kind == "wulff":
        if dual is None:
            from .norms import parse_norm
            dual = DualNorm.of(parse_norm(d["norm"]))
        return Wulff(dual, d["radius"], d.get("center"))
    if kind == "ellipsoid":
        return Ellipsoid(np.asarray(d["shape"]), d.get("center"))
    if kind == "box":
        return Box(d["half_widths"], d.get("center"))
    if kind == "support_samples":
        return SupportSamples(np.asarray(d["directions"]), np.asarray(d["values"]), d.get("center"))
    raise BodyError(f"unknown body kind {kind!r}")


def _sample_directions(body):
    if isinstance(body, SupportSamples):
        return body.directions
    return with_axes(sphere_directions(2048, body.dim))


def support(body, direction):
    return body.support(direction)


def contains(body, x):
    return body.contains(x)


def minkowski_combine(lam, K, D):
    """Support samples of (1 - lam) K + lam D on the union of both direction sets."""
    if not 0.0 <= lam <= 1.0:
        raise BodyError("lambda must lie in [0, 1]")
    if K.dim != D.dim:
        raise BodyError("dimension mismatch")
    dirs_k, dirs_d = _sample_directions(K), _sample_directions(D)
    if dirs_k is dirs_d or (dirs_k.shape == dirs_d.shape and np.array_equal(dirs_k, dirs_d)):
        dirs = dirs_k
    else:
        dirs = np.unique(np.round(np.vstack([dirs_k, dirs_d]), 14), axis=0)
    h = (1 - lam) * K.support(dirs) + lam * D.support(dirs)
    center = (1 - lam) * K.center + lam * D.center
    return SupportSamples(dirs, h, center)


def boundary_sample(body, count, anchor=None):
    """Boundary points on ``count`` quasi-uniform rays from an interior anchor."""
    anchor = body.center if anchor is None else _vec(anchor, body.dim)
    if body.gauge(anchor) >= 1.0:
        raise BodyError("anchor not interior")
    dirs = sphere_directions(count, body.dim)
    s = body.ray_exit(anchor, dirs)
    return anchor + s[:, None] * dirs


def finsler_perimeter(body, norm, count=8192):
    """Integral of H(nu) over the boundary.

    Quadrature over the facets of the circumscribed polytope cut out by
    ``count`` supporting half-spaces (exact for boxes, whose face normals
    are always in the set).
    """
    if isinstance(body, SupportSamples):
        verts = body.vertices
    else:
        dirs = with_axes(sphere_directions(count, body.dim))
        h = body.support(dirs)
        hs = HalfspaceIntersection(np.column_stack([dirs, -h]), body.center)
        verts = hs.intersections
    hull = ConvexHull(verts)
    normals = hull.equations[:, :-1]
    if body.dim == 3:
        tri = verts[hull.simplices]
        areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    else:
        from math import factorial
        simp = verts[hull.simplices]
        edges = simp[:, 1:] - simp[:, :1]
        gram = edges @ np.swapaxes(edges, 1, 2)
        areas = np.sqrt(np.abs(np.linalg.det(gram))) / factorial(body.dim - 1)
    return float(np.sum(areas * norm.eval(normals)))


# ---------------------------------------------------------------------------
# fits


@dataclass
class HomothetyFit:
    ratio: float
    translation: np.ndarray
    residual: float

    def to_dict(self):
        return {"ratio": self.ratio, "translation": np.asarray(self.translation).tolist(),
                "residual": self.residual}


def fit_homothety(K, D, dirs=None):
    """Least-squares fit of h_K(u) = rho h_D(u) + <xi, u>.

    The residual is the sup deviation divided by the mean half-width of K,
    so it is invariant under translations and dilations of the pair.
    """
    if K.dim != D.dim:
        raise BodyError("dimension mismatch")
    if dirs is None:
        dirs = with_axes(sphere_directions(2048, K.dim))
    hK = K.support(dirs)
    hD = D.support(dirs)
    A = np.column_stack([hD, dirs])
    sol, *_ = np.linalg.lstsq(A, hK, rcond=None)
    rho, xi = float(sol[0]), sol[1:]
    dev = hK - A @ sol
    halfwidth = np.mean(0.5 * (hK + K.support(-dirs)))
    return HomothetyFit(rho, xi, float(np.max(np.abs(dev)) / halfwidth))


@dataclass
class WulffFit:
    center: np.ndarray
    radius: float
    spread: float
    evaluations: int


def _wulff_spread(dual, pts, c):
    r = dual.eval(pts - c)
    return r, np.std(r) / np.mean(r)


def fit_wulff(body, dual, tol=1e-3, count=2048, return_fit=False):
    """Best Wulff shape through boundary samples, or None if the spread exceeds tol.

    Coordinate descent over the center on the relative standard deviation
    of H0(x_i - c), started at the Steiner point; the reported spread is
    (max - min) / max at the final center.
    """
    pts = boundary_sample(body, count)
    dirs = with_axes(sphere_directions(2048, body.dim))
    c = steiner_point(dirs[2 * body.dim:], body.support(dirs[2 * body.dim:]))
    if body.gauge(c) >= 1:
        c = body.center.copy()
    r, f = _wulff_spread(dual, pts, c)
    scale = float(np.mean(r))
    step = 0.1 * scale
    evals = 1
    while step > 1e-11 * scale and evals < 5000:
        improved = False
        for i in range(body.dim):
            for sgn in (1.0, -1.0):
                trial = c.copy()
                trial[i] += sgn * step
                _, ft = _wulff_spread(dual, pts, trial)
                evals += 1
                if ft < f:
                    c, f, improved = trial, ft, True
                    break
        if not improved:
            step *= 0.5
    r, _ = _wulff_spread(dual, pts, c)
    spread = float((r.max() - r.min()) / r.max())
    fit = WulffFit(c, float(r.mean()), spread, evals)
    if return_fit:
        return fit
    if spread <= tol:
        return c, float(r.mean())
    return None


# ---------------------------------------------------------------------------
# parsing


def _floats(text, token):
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise BodyError(f"malformed number list in body spec: {token!r}") from None


def parse_body(spec, dual):
    """Parse ``wulff:R[@c]``, ``ellipsoid:a,b,c[@c]`` (semi-axes), ``box:hx,hy,hz[@c]``."""
    if ":" not in spec:
        raise BodyError(f"malformed body spec: {spec!r}")
    kind, rest = spec.split(":", 1)
    center = None
    if "@" in rest:
        rest, ctext = rest.split("@", 1)
        center = _floats(ctext, ctext)
        if len(center) != dual.dim:
            raise BodyError(f"center dimension mismatch in {spec!r}")
    vals = _floats(rest, rest)
    if kind == "wulff":
        if len(vals) != 1:
            raise BodyError(f"wulff takes one radius: {spec!r}")
        return Wulff(dual, vals[0], center)
    if kind == "ellipsoid":
        if len(vals) != dual.dim:
            raise BodyError(f"ellipsoid takes {dual.dim} semi-axes: {spec!r}")
        return Ellipsoid.from_semi_axes(vals, center)
    if kind == "box":
        if len(vals) != dual.dim:
            raise BodyError(f"box takes {dual.dim} half-widths: {spec!r}")
        return Box(vals, center)
    raise BodyError(f"unknown body kind {kind!r} in {spec!r}")
