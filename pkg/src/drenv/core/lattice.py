"""Brute-force lattice minimization used as an independent test oracle.

These routines are deliberately naive: they evaluate a vectorized
objective on a regular grid.  When the full grid at the requested
resolution is too large, the search proceeds coarse to fine, keeping a
few of the best candidates at every level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .oracles import PreconditionError, as_point

__all__ = ["LatticeMin", "lattice_minimize", "lattice_prox", "grid"]

MAX_POINTS = 400_000


@dataclass(frozen=True)
class LatticeMin:
    """Result of a lattice search.

    Attributes
    ----------
    x : ndarray
        Best lattice point.
    value : float
        Objective at ``x`` (``inf`` if the objective is infinite on the
        whole lattice).
    on_boundary : bool
        True when the best point of the outermost level lies on the
        boundary shell of the search box and is strictly better than every
        interior point, which signals a minimizing sequence escaping the
        box (an infimum that may not be attained).
    spacing : float
        Grid spacing of the finest level.
    """

    x: np.ndarray
    value: float
    on_boundary: bool
    spacing: float


def grid(center, radius: float, spacing: float) -> np.ndarray:
    """Regular grid of spacing ``spacing`` on ``center + [-radius, radius]^d``.

    Returns an array of shape ``(m, d)``; the center is a grid point.
    """
    center = as_point(center)
    k = int(math.floor(radius / spacing + 1e-9))
    axis = np.arange(-k, k + 1, dtype=np.float64) * spacing
    mesh = np.meshgrid(*([axis] * center.size), indexing="ij")
    return center + np.stack([m.ravel() for m in mesh], axis=-1)


def _evaluate(fun: Callable, pts: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        vals = np.asarray(fun(pts), dtype=np.float64).reshape(-1)
    else:
        vals = np.array([float(fun(p)) for p in pts])
    return np.where(np.isnan(vals), np.inf, vals)


def lattice_minimize(fun: Callable, center, radius: float, resolution: float, *,
                     vectorized: bool = True, keep: int = 4,
                     max_points: int = MAX_POINTS) -> LatticeMin:
    """Minimize ``fun`` over a lattice in the box ``center + [-radius, radius]^d``.

    Parameters
    ----------
    fun : callable
        Objective; with ``vectorized=True`` it maps an ``(m, d)`` array to
        ``m`` values.
    center : array_like
    radius : float
    resolution : float
        Spacing of the finest lattice.
    keep : int
        Number of candidates refined at each coarse-to-fine level.
    max_points : int
        Size above which the coarse-to-fine scheme replaces the full grid.

    Returns
    -------
    LatticeMin
    """
    center = as_point(center)
    d = center.size
    if d > 3:
        raise PreconditionError("lattice oracles are limited to dimension <= 3")
    if not (radius > 0 and resolution > 0):
        raise PreconditionError("radius and resolution must be positive")

    full = (2 * math.floor(radius / resolution + 1e-9) + 1) ** d
    if full <= max_points:
        pts = grid(center, radius, resolution)
        vals = _evaluate(fun, pts, vectorized)
        i = int(np.argmin(vals))
        return LatticeMin(pts[i], float(vals[i]),
                          _escapes(pts, vals, center, radius, resolution), resolution)

    per_axis = max(11, int(max_points ** (1.0 / d)) // 2 * 2 + 1)
    h = max(resolution, 2.0 * radius / (per_axis - 1))
    pts = grid(center, radius, h)
    vals = _evaluate(fun, pts, vectorized)
    order = np.argsort(vals, kind="stable")[:keep]
    boundary = _escapes(pts, vals, center, radius, h)
    cands = [(float(vals[j]), pts[j]) for j in order]
    while h > resolution:
        r = 2.0 * h
        h_new = max(resolution, 2.0 * r / (per_axis - 1))
        nxt = []
        for _, c in cands:
            p = grid(c, r, h_new)
            v = _evaluate(fun, p, vectorized)
            for j in np.argsort(v, kind="stable")[:keep]:
                nxt.append((float(v[j]), p[j]))
        nxt.sort(key=lambda t: t[0])
        cands = nxt[:keep]
        h = h_new
    val, x = cands[0]
    return LatticeMin(x, val, boundary, h)


def _escapes(pts, vals, center, radius, spacing) -> bool:
    shell = np.any(np.abs(pts - center) >= radius - 0.5 * spacing, axis=1)
    if not np.any(shell) or np.all(shell):
        return False
    best_shell, best_inner = vals[shell].min(), vals[~shell].min()
    if not np.isfinite(best_shell):
        return False
    return bool(best_shell < best_inner - 1e-12 * max(1.0, abs(best_inner)))


def lattice_prox(value: Callable, gamma: float, x, radius: float, resolution: float,
                 center=None) -> LatticeMin:
    """Brute-force proximal point of a vectorized value oracle."""
    x = as_point(x)
    c = x if center is None else as_point(center)

    def obj(w):
        return np.asarray(value(w), dtype=np.float64) + np.sum((w - x) ** 2, axis=-1) / (2 * gamma)

    return lattice_minimize(obj, c, radius, resolution)
