"""Deterministic quasi-uniform direction sets on the unit sphere."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

DEFAULT_COUNT = 2048


def fibonacci_sphere(count: int) -> np.ndarray:
    """Golden-angle spiral points on S^2, shape (count, 3)."""
    i = np.arange(count, dtype=float) + 0.5
    z = 1.0 - 2.0 * i / count
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def _gaussian_directions(count: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@lru_cache(maxsize=32)
def _cached(count: int, dim: int) -> np.ndarray:
    if dim == 3:
        out = fibonacci_sphere(count)
    elif dim == 2:
        t = 2 * np.pi * (np.arange(count) + 0.5) / count
        out = np.column_stack([np.cos(t), np.sin(t)])
    else:
        # random directions made antipodally balanced; seed fixed for reproducibility
        half = _gaussian_directions((count + 1) // 2, dim, seed=12345 + dim)
        out = np.vstack([half, -half])[:count]
    out.setflags(write=False)
    return out


def sphere_directions(count: int = DEFAULT_COUNT, dim: int = 3) -> np.ndarray:
    """Quasi-uniform unit vectors, shape (count, dim). Read-only and cached."""
    if count < 1:
        raise ValueError("count must be positive")
    return _cached(int(count), int(dim))


def with_axes(dirs: np.ndarray) -> np.ndarray:
    """Prepend the signed coordinate axes to a direction set."""
    dim = dirs.shape[1]
    eye = np.eye(dim)
    return np.vstack([eye, -eye, dirs])
