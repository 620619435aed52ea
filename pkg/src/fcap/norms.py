"""Anisotropic norms H, their derivatives, and the dual norm H0.

All array-valued functions take the vector axis LAST, so a batch of
vectors is an array of shape ``(..., dim)``.  The solver uses the
components-first helpers (:meth:`NormSpec.h2_halfgrad`) to avoid
stacking large grid arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .directions import sphere_directions, with_axes


class NormError(ValueError):
    """Invalid input to a norm evaluation."""


class DualNormError(RuntimeError):
    """The dual-norm maximization did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


def _check_dim(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dim,):
        raise NormError(f"expected vectors of dimension {dim}, got shape {x.shape}")
    return x


def _check_nonzero(x):
    if np.any(np.all(x == 0.0, axis=-1)):
        raise NormError("zero input vector")


@dataclass(frozen=True)
class NormSpec:
    """A smooth, symmetric, 1-homogeneous norm on R^dim.

    ``kind`` is one of ``"euclidean"``, ``"ellipsoid"`` (H(x) = sqrt(x.A.x))
    or ``"lq"`` (the delta-regularized l^q family).
    """

    kind: str
    dim: int = 3
    matrix: tuple | None = None
    q_exp: float | None = None
    delta: float = 0.0
    _A: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 2:
            raise NormError("dimension must be at least 2")
        if self.kind == "euclidean":
            pass
        elif self.kind == "ellipsoid":
            A = np.asarray(self.matrix, dtype=float)
            if A.shape != (self.dim, self.dim):
                raise NormError(f"ellipsoid matrix must be {self.dim}x{self.dim}")
            if not np.allclose(A, A.T, rtol=0, atol=1e-14 * np.abs(A).max()):
                raise NormError("ellipsoid matrix must be symmetric")
            if np.linalg.eigvalsh(A).min() <= 0:
                raise NormError("ellipsoid matrix must be positive definite")
            A = 0.5 * (A + A.T)
            A.setflags(write=False)
            object.__setattr__(self, "_A", A)
        elif self.kind == "lq":
            if self.q_exp is None or not self.q_exp > 1:
                raise NormError("lq exponent must be > 1")
            if self.delta < 0:
                raise NormError("delta must be >= 0")
        else:
            raise NormError(f"unknown norm kind {self.kind!r}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def euclidean(cls, dim=3):
        return cls("euclidean", dim)

    @classmethod
    def ellipsoid(cls, A):
        A = np.asarray(A, dtype=float)
        return cls("ellipsoid", A.shape[0], matrix=tuple(map(tuple, A)))

    @classmethod
    def lq(cls, q, delta=0.0, dim=3):
        return cls("lq", dim, q_exp=float(q), delta=float(delta))

    @property
    def A(self):
        return self._A

    @property
    def is_smooth(self):
        """True when the norm is C^2_+ away from the origin by construction."""
        if self.kind == "lq":
            return self.delta > 0 or self.q_exp == 2.0
        return True

    def describe(self):
        if self.kind == "euclidean":
            return "euclidean"
        if self.kind == "ellipsoid":
            return "ellipsoid:" + ",".join(f"{v:.12g}" for v in self.A[np.triu_indices(self.dim)])
        return f"lq:{self.q_exp:g}:delta={self.delta:g}"

    # -- lq helpers -------------------------------------------------------
    def _lq_parts(self, x):
        q, d = self.q_exp, self.delta
        sq = x * x
        w = sq + d * sq.sum(axis=-1, keepdims=True)
        S = np.sum(w ** (q / 2), axis=-1)
        return w, S

    # -- evaluation ---------------------------------------------------------
    def eval(self, xi):
        xi = _check_dim(xi, self.dim)
        if self.kind == "euclidean":
            return np.linalg.norm(xi, axis=-1)
        if self.kind == "ellipsoid":
            return np.sqrt(np.einsum("...i,ij,...j->...", xi, self.A, xi))
        _, S = self._lq_parts(xi)
        return S ** (1.0 / self.q_exp)

    __call__ = eval

    def grad(self, xi):
        xi = _check_dim(xi, self.dim)
        _check_nonzero(xi)
        H = self.eval(xi)[..., None]
        if self.kind == "euclidean":
            return xi / H
        if self.kind == "ellipsoid":
            return xi @ self.A / H
        return self._lq_halfgrad_h2(xi) / H

    def _lq_halfgrad_h2(self, xi):
        q, d = self.q_exp, self.delta
        w, S = self._lq_parts(xi)
        if d == 0:
            core = np.sign(xi) * np.abs(xi) ** (q - 1)
        else:
            a = w ** (q / 2 - 1)
            core = a * xi + d * a.sum(axis=-1, keepdims=True) * xi
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(S > 0, S ** (2.0 / q - 1.0), 0.0)
        return scale[..., None] * core

    def hessian(self, xi):
        """Hessian of H itself, shape (..., dim, dim)."""
        xi = _check_dim(xi, self.dim)
        _check_nonzero(xi)
        n = self.dim
        eye = np.eye(n)
        if self.kind == "euclidean":
            r = np.linalg.norm(xi, axis=-1)[..., None, None]
            u = xi[..., :, None] * xi[..., None, :]
            return (eye - u / r**2) / r
        if self.kind == "ellipsoid":
            H = self.eval(xi)[..., None, None]
            Ax = xi @ self.A
            return (self.A - Ax[..., :, None] * Ax[..., None, :] / H**2) / H
        return self._lq_hessian(xi)

    def _lq_hessian(self, xi):
        q, d = self.q_exp, self.delta
        n = self.dim
        w, S = self._lq_parts(xi)
        sq = xi * xi
        if d == 0:
            a_xi = np.sign(xi) * np.abs(xi) ** (q - 1)
            diag = (q - 1) * np.abs(xi) ** (q - 2)
            hessS = q * diag[..., :, None] * np.eye(n)
        else:
            a = w ** (q / 2 - 1)
            b = (q - 2) * w ** (q / 2 - 2)
            A_ = a.sum(axis=-1)
            Bsum = b.sum(axis=-1)
            a_xi = a * xi + d * A_[..., None] * xi
            diag = a + b * sq + d * A_[..., None]
            bx = b * xi
            outer_bx_x = bx[..., :, None] * xi[..., None, :]
            xx = xi[..., :, None] * xi[..., None, :]
            hessS = q * (
                diag[..., :, None] * np.eye(n)
                + d * (outer_bx_x + np.swapaxes(outer_bx_x, -1, -2))
                + d * d * Bsum[..., None, None] * xx
            )
        gradS = q * a_xi
        Sb = S[..., None, None]
        return (1.0 / q) * Sb ** (1.0 / q - 1) * hessS + (1.0 / q) * (1.0 / q - 1) * Sb ** (
            1.0 / q - 2
        ) * gradS[..., :, None] * gradS[..., None, :]

    def hess_p(self, p, xi):
        """Hessian of H^p: p H^(p-1) D^2H + p(p-1) H^(p-2) DH (x) DH."""
        xi = _check_dim(xi, self.dim)
        _check_nonzero(xi)
        H = self.eval(xi)[..., None, None]
        g = self.grad(xi)
        return p * H ** (p - 1) * self.hessian(xi) + p * (p - 1) * H ** (p - 2) * (
            g[..., :, None] * g[..., None, :]
        )

    # -- solver kernel ----------------------------------------------------
    def h2_halfgrad(self, comps):
        """H^2 and grad(H^2)/2 for components-first input.

        ``comps`` is a sequence of ``dim`` equally shaped arrays.  Returns
        ``(h2, [g_0, ..., g_{dim-1}])``.  Both are finite at the origin.
        """
        if self.kind == "euclidean":
            h2 = comps[0] * comps[0]
            for c in comps[1:]:
                h2 = h2 + c * c
            return h2, list(comps)
        if self.kind == "ellipsoid":
            A = self.A
            n = self.dim
            out = []
            for i in range(n):
                acc = A[i, 0] * comps[0]
                for j in range(1, n):
                    if A[i, j] != 0.0:
                        acc = acc + A[i, j] * comps[j]
                out.append(acc)
            h2 = comps[0] * out[0]
            for i in range(1, n):
                h2 = h2 + comps[i] * out[i]
            return h2, out
        q, d = self.q_exp, self.delta
        sq = [c * c for c in comps]
        tot = sum(sq)
        w = [s + d * tot for s in sq]
        if d > 0:
            a = [wi ** (q / 2 - 1) for wi in w]
            S = sum(ai * wi for ai, wi in zip(a, w))
            asum = sum(a)
            core = [ai * c + d * asum * c for ai, c in zip(a, comps)]
        else:
            S = sum(np.abs(c) ** q for c in comps)
            core = [np.sign(c) * np.abs(c) ** (q - 1) for c in comps]
        with np.errstate(divide="ignore", invalid="ignore"):
            h2 = S ** (2.0 / q)
            scale = np.where(S > 0, S ** (2.0 / q - 1.0), 0.0)
        return h2, [scale * c for c in core]


# ---------------------------------------------------------------------------
# dual norm


@dataclass(frozen=True)
class DualNorm:
    """Handle for H0(x) = sup <x, xi> / H(xi).

    ``method`` is ``"closed_form"`` (euclidean, ellipsoid, and delta = 0
    l^q) or ``"generic_maximization"``.
    """

    source: NormSpec
    method: str = "closed_form"
    direction_count: int = 2048
    refine_tol: float = 1e-8

    def __post_init__(self):
        if self.method == "closed_form" and not self.has_closed_form(self.source):
            raise NormError(f"no closed-form dual for {self.source.describe()}")
        if self.method not in ("closed_form", "generic_maximization"):
            raise NormError(f"unknown dual method {self.method!r}")

    @staticmethod
    def has_closed_form(norm):
        return norm.kind in ("euclidean", "ellipsoid") or (norm.kind == "lq" and norm.delta == 0)

    @classmethod
    def of(cls, norm, **kwargs):
        """Closed form where available, generic maximization otherwise."""
        method = "closed_form" if cls.has_closed_form(norm) else "generic_maximization"
        return cls(norm, method, **kwargs)

    @property
    def dim(self):
        return self.source.dim

    def as_norm(self):
        """The dual norm as a NormSpec (closed-form cases only)."""
        s = self.source
        if s.kind == "euclidean":
            return NormSpec.euclidean(s.dim)
        if s.kind == "ellipsoid":
            return NormSpec.ellipsoid(np.linalg.inv(s.A))
        if s.kind == "lq" and s.delta == 0:
            q = s.q_exp
            return NormSpec.lq(q / (q - 1), 0.0, s.dim)
        raise NormError("dual has no closed form")

    def eval(self, x):
        x = _check_dim(x, self.dim)
        if self.method == "closed_form":
            return self.as_norm().eval(x)
        H0, _ = self._maximize(x)
        return H0

    __call__ = eval

    def grad(self, x):
        x = _check_dim(x, self.dim)
        _check_nonzero(x)
        s = self.source
        if self.method == "closed_form":
            if s.kind == "lq":
                qd = s.q_exp / (s.q_exp - 1)
                if qd < 2 and np.any(x == 0.0):
                    raise NormError("dual l^q norm is not smooth on coordinate hyperplanes")
            return self.as_norm().grad(x)
        _, eta = self._maximize(x)
        return eta / s.eval(eta)[..., None]

    # Coarse search over a direction set, then Newton on
    # phi(eta) = H(eta)^2/2 - <x, eta>, whose minimizer satisfies
    # H(eta) = H0(x) and eta / H(eta) = grad H0(x).
    def _maximize(self, x):
        H = self.source
        shape = x.shape[:-1]
        X = x.reshape(-1, self.dim)
        m = X.shape[0]
        dirs = with_axes(sphere_directions(self.direction_count, self.dim))
        Hd = H.eval(dirs)
        eta = np.empty_like(X)
        chunk = max(1, 2_000_000 // len(dirs))
        for lo in range(0, m, chunk):
            Xc = X[lo:lo + chunk]
            ratio = (Xc @ dirs.T) / Hd
            k = np.argmax(ratio, axis=1)
            best = ratio[np.arange(len(Xc)), k]
            eta[lo:lo + chunk] = (best / Hd[k])[:, None] * dirs[k]
        xnorm = np.linalg.norm(X, axis=1)
        zero = xnorm == 0
        eta[zero] = 0.0
        active = ~zero
        res = np.zeros(m)
        for _ in range(60):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            e = eta[idx]
            xs = X[idx]
            h2, hg = H.h2_halfgrad([e[:, i] for i in range(self.dim)])
            g = np.column_stack(hg) - xs
            gn = np.linalg.norm(g, axis=1)
            res[idx] = gn / xnorm[idx]
            done = res[idx] <= self.refine_tol
            active[idx[done]] = False
            if done.all():
                break
            idx, e, xs, g, h2 = idx[~done], e[~done], xs[~done], g[~done], h2[~done]
            K = 0.5 * H.hess_p(2.0, e)
            K = K + 1e-13 * np.trace(K, axis1=1, axis2=2)[:, None, None] * np.eye(self.dim)
            step = np.linalg.solve(K, -g[..., None])[..., 0]
            phi0 = 0.5 * h2 - np.einsum("ij,ij->i", xs, e)
            t = np.ones(len(idx))
            for _ in range(30):
                trial = e + t[:, None] * step
                phi = 0.5 * H.eval(trial) ** 2 - np.einsum("ij,ij->i", xs, trial)
                ok = phi <= phi0 + 1e-4 * t * np.einsum("ij,ij->i", g, step) + 1e-15 * np.abs(phi0)
                if ok.all():
                    break
                t = np.where(ok, t, 0.5 * t)
            eta[idx] = e + t[:, None] * step
        if active.any():
            worst = float(res[active].max())
            raise DualNormError(
                f"dual maximization did not reach tol {self.refine_tol:g} (achieved {worst:.3g})",
                achieved=worst,
            )
        Heta = H.eval(eta)
        with np.errstate(invalid="ignore", divide="ignore"):
            H0 = np.where(zero, 0.0, np.einsum("ij,ij->i", X, eta) / Heta)
        return H0.reshape(shape), eta.reshape(shape + (self.dim,))


# ---------------------------------------------------------------------------
# module-level operations


def eval_norm(norm, xi):
    return norm.eval(xi)


def grad_norm(norm, xi):
    return norm.grad(xi)


def hess_p(norm, p, xi):
    if not 1 < p < norm.dim:
        raise NormError(f"p must lie in (1, {norm.dim})")
    return norm.hess_p(p, xi)


def dual_eval(dual, x):
    return dual.eval(x)


def dual_grad(dual, x):
    return dual.grad(x)


@dataclass
class JpReport:
    """Sampled regularity diagnostics for membership in J_p."""

    norm: str
    p: float
    sample_count: int
    min_tangential_eigenvalue: float
    argmin_direction: list
    hess_p_lipschitz: float
    threshold: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def tangential_eigenvalues(norm, dirs):
    """Eigenvalues of D^2H restricted to the tangent space of the unit sphere."""
    dirs = np.asarray(dirs, float)
    n = norm.dim
    m = len(dirs)
    basis = np.concatenate([dirs[:, :, None], np.broadcast_to(np.eye(n), (m, n, n))], axis=2)
    Q, _ = np.linalg.qr(basis)
    T = Q[:, :, 1:n]
    Hs = norm.hessian(dirs)
    M = np.swapaxes(T, 1, 2) @ Hs @ T
    return np.linalg.eigvalsh(M)


def check_class_Jp(norm, p, sample_count=1000, seed=0, threshold=1e-6, lipschitz_bound=1e6):
    """Check strict convexity of H and Lipschitz continuity of D^2(H^p).

    Samples always include the signed coordinate axes, where the raw
    l^q norms degenerate.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    n = norm.dim
    v = rng.standard_normal((sample_count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    dirs = with_axes(v)
    eig = tangential_eigenvalues(norm, dirs)
    mins = eig.min(axis=1)
    k = int(np.argmin(mins))
    step = 1e-4
    pert = rng.standard_normal(dirs.shape)
    pert *= step / np.linalg.norm(pert, axis=1, keepdims=True)
    with np.errstate(all="ignore"):
        d2a = norm.hess_p(p, dirs)
        d2b = norm.hess_p(p, dirs + pert)
        lip = np.linalg.norm(d2a - d2b, axis=(1, 2)) / step
    lip_max = float(np.nanmax(lip)) if np.isfinite(lip).any() else math.inf
    if not np.all(np.isfinite(lip)):
        lip_max = math.inf
    passed = bool(mins.min() > threshold and lip_max < lipschitz_bound)
    return JpReport(
        norm=norm.describe(),
        p=float(p),
        sample_count=int(len(dirs)),
        min_tangential_eigenvalue=float(mins.min()),
        argmin_direction=dirs[k].tolist(),
        hess_p_lipschitz=lip_max,
        threshold=threshold,
        passed=passed,
    )


def parse_norm(spec, dim=3):
    """Parse ``euclidean``, ``ellipsoid:a11,a12,...`` (row-major upper triangle)
    or ``lq:Q:delta=D``."""
    if spec == "euclidean":
        return NormSpec.euclidean(dim)
    if spec.startswith("ellipsoid:"):
        body = spec[len("ellipsoid:"):]
        try:
            vals = [float(t) for t in body.split(",")]
        except ValueError:
            raise NormError(f"malformed ellipsoid entries: {body!r}") from None
        n = int(round((math.sqrt(8 * len(vals) + 1) - 1) / 2))
        if n * (n + 1) // 2 != len(vals):
            raise NormError(f"ellipsoid needs an upper triangle, got {len(vals)} entries")
        A = np.zeros((n, n))
        A[np.triu_indices(n)] = vals
        A = A + np.triu(A, 1).T
        return NormSpec.ellipsoid(A)
    if spec.startswith("lq:"):
        parts = spec.split(":")
        if len(parts) != 3 or not parts[2].startswith("delta="):
            raise NormError(f"expected lq:Q:delta=D, got {spec!r}")
        try:
            q = float(parts[1])
        except ValueError:
            raise NormError(f"malformed lq exponent: {parts[1]!r}") from None
        try:
            d = float(parts[2][len("delta="):])
        except ValueError:
            raise NormError(f"malformed lq delta: {parts[2]!r}") from None
        return NormSpec.lq(q, d, dim)
    raise NormError(f"unknown norm spec: {spec!r}")
