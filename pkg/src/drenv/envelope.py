"""Douglas-Rachford envelope, forward-backward envelope and augmented Lagrangian.

For a composite problem ``f + g`` and a stepsize ``gamma`` the
Douglas-Rachford envelope at ``s`` is

    DRE(s) = f(u) + g(v) + <grad f(u), v - u> + ||v - u||^2 / (2 gamma),

with ``u = prox_{gamma f}(s)`` and ``v = prox_{gamma g}(2u - s)``.  It
coincides with the forward-backward envelope at ``u`` and with the
augmented Lagrangian of the splitting at ``(u, v, (u - s)/gamma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    CompositeProblem,
    PreconditionError,
    as_point,
    eval_prox,
    smooth_prox,
)
from .core.lattice import grid, lattice_minimize

__all__ = [
    "DreEvaluation",
    "dre_from_pair",
    "eval_dre",
    "eval_fbe",
    "augmented_lagrangian",
    "SandwichReport",
    "sandwich_check",
    "MinEquivalenceReport",
    "check_min_equivalence",
    "ContinuityReport",
    "continuity_probe",
    "RayProbe",
    "ray_probe",
]


def _plus(a: float, b: float) -> float:
    # +inf dominates sums
    if a == math.inf or b == math.inf:
        return math.inf
    return a + b


def dre_from_pair(problem: CompositeProblem, gamma: float, u: np.ndarray, v: np.ndarray) -> float:
    """Envelope value from an already computed pair ``(u, v)``."""
    d = v - u
    return _plus(float(problem.g.value(v)),
                 float(problem.f.value(u)) + float(problem.f.grad(u) @ d)
                 + float(d @ d) / (2.0 * gamma))


@dataclass(frozen=True)
class DreEvaluation:
    """Envelope value together with the points that define it.

    Attributes
    ----------
    s, u, v : ndarray
        ``u = prox_{gamma f}(s)`` and ``v = prox_{gamma g}(2u - s)``.
    dre_value : float
    phi_u, phi_v : float
        Cost at ``u`` (possibly ``inf``) and at ``v``.
    gamma : float
    outside_theory : bool
        True when ``gamma >= 1/L_f``: the value is well defined but the
        envelope properties (sandwich, decrease) are not guaranteed.
    """

    s: np.ndarray
    u: np.ndarray
    v: np.ndarray
    dre_value: float
    phi_u: float
    phi_v: float
    gamma: float
    outside_theory: bool

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.u - self.v))


def eval_dre(problem: CompositeProblem, gamma: float, s) -> DreEvaluation:
    """Evaluate the Douglas-Rachford envelope at ``s``.

    Parameters
    ----------
    problem : CompositeProblem
    gamma : float
        ``0 < gamma < 1/[sigma_f]_-``.
    s : array_like

    Raises
    ------
    StepsizeInfeasibleError
        If either proximal map is undefined at ``gamma``.
    """
    s = as_point(s)
    u = smooth_prox(problem.f, gamma, s)
    v = eval_prox(problem.g, gamma, 2.0 * u - s)
    value = dre_from_pair(problem, gamma, u, v)
    return DreEvaluation(s, u, v, value, problem.phi(u), problem.phi(v), float(gamma),
                         bool(gamma * problem.f.L >= 1.0))


def eval_fbe(problem: CompositeProblem, gamma: float, u) -> float:
    """Forward-backward envelope at ``u``.

    ``v = prox_{gamma g}(u - gamma grad f(u))`` is substituted into the
    same expression as the Douglas-Rachford envelope.
    """
    u = as_point(u)
    v = eval_prox(problem.g, gamma, u - gamma * problem.f.grad(u))
    return dre_from_pair(problem, gamma, u, v)


def augmented_lagrangian(f_val: float, g_val: float, beta: float, x, z, y,
                         A=None, B=None, b=None) -> float:
    """``f(x) + g(z) + <y, Ax + Bz - b> + beta/2 ||Ax + Bz - b||^2``.

    Defaults ``A = I``, ``B = -I``, ``b = 0`` give the splitting form
    ``x - z = 0`` used by DRS.
    """
    if not beta > 0:
        raise PreconditionError("beta must be positive")
    x, z, y = as_point(x), as_point(z), as_point(y)
    Ax = x if A is None else np.atleast_2d(A) @ x
    Bz = -z if B is None else np.atleast_2d(B) @ z
    r = Ax + Bz - (0.0 if b is None else as_point(b))
    if r.shape != y.shape:
        raise PreconditionError(f"dimension mismatch: residual {r.shape}, multiplier {y.shape}")
    return _plus(float(f_val), float(g_val) + float(y @ r) + 0.5 * beta * float(r @ r))


@dataclass(frozen=True)
class SandwichReport:
    """Slacks of the two sandwich inequalities.

    ``upper_slack = phi(u) - DRE(s)`` and
    ``lower_slack = DRE(s) - (1 - gamma L)/(2 gamma) ||u - v||^2 - phi(v)``;
    both are nonnegative when the inequalities hold.
    """

    upper_slack: float
    lower_slack: float
    dre_value: float

    def holds(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, abs(self.dre_value))
        return self.upper_slack >= -tol * scale and self.lower_slack >= -tol * scale


def sandwich_check(problem: CompositeProblem, gamma: float, s) -> SandwichReport:
    """Evaluate both sandwich inequalities at ``s`` (requires ``gamma < 1/L_f``)."""
    if not (0 < gamma and gamma * problem.f.L < 1.0):
        raise PreconditionError("sandwich_check requires 0 < gamma < 1/L_f")
    ev = eval_dre(problem, gamma, s)
    r2 = float((ev.u - ev.v) @ (ev.u - ev.v))
    upper = ev.phi_u - ev.dre_value if ev.phi_u < math.inf else math.inf
    lower = ev.dre_value - (1.0 - gamma * problem.f.L) / (2.0 * gamma) * r2 - ev.phi_v
    return SandwichReport(upper, lower, ev.dre_value)


def _vectorized(fun: Callable) -> Callable:
    """Wrap ``fun`` so that it maps an ``(m, d)`` batch to ``m`` values."""

    def batch(pts):
        try:
            vals = np.asarray(fun(pts), dtype=np.float64)
            if vals.shape == (pts.shape[0],):
                return vals
        except Exception:
            pass
        return np.array([float(fun(p)) for p in pts])

    return batch


def _dre_batch(problem: CompositeProblem, gamma: float) -> Callable:
    def batch(pts):
        return np.array([eval_dre(problem, gamma, p).dre_value for p in pts])

    return batch


@dataclass(frozen=True)
class MinEquivalenceReport:
    """Lattice comparison of the minimization of the cost and of the envelope.

    Attributes
    ----------
    inf_phi, inf_dre : float
        Lattice minima of the cost and of the envelope.
    phi_argmin : ndarray
        Lattice minimizer of the cost.
    dre_argmin : ndarray
        Lattice minimizer of the envelope.
    prox_of_dre_argmin : ndarray
        ``prox_{gamma f}`` of the envelope minimizer.
    value_gap : float
        ``|inf_phi - inf_dre|``.
    argmin_gap : float
        Distance from ``prox_of_dre_argmin`` to the set of near-optimal
        lattice points of the cost.
    resolution : float
    """

    inf_phi: float
    inf_dre: float
    phi_argmin: np.ndarray
    dre_argmin: np.ndarray
    prox_of_dre_argmin: np.ndarray
    value_gap: float
    argmin_gap: float
    resolution: float


def check_min_equivalence(problem: CompositeProblem, gamma: float, radius: float = 10.0,
                          resolution: float = 1e-3, value_tol: Optional[float] = None
                          ) -> MinEquivalenceReport:
    """Compare inf and argmin of the cost with those of the envelope on a lattice.

    Parameters
    ----------
    problem : CompositeProblem
        Dimension at most 2.
    gamma : float
        ``0 < gamma < 1/L_f``.
    radius, resolution : float
        Lattice box half-width and spacing (both centered at the origin).
    value_tol : float, optional
        Level used to collect near-optimal cost points for the argmin
        comparison; defaults to ``10 * resolution``.
    """
    if problem.dim > 2:
        raise PreconditionError("check_min_equivalence is limited to dimension <= 2")
    if not (0 < gamma and gamma * problem.f.L < 1.0):
        raise PreconditionError("check_min_equivalence requires 0 < gamma < 1/L_f")
    center = np.zeros(problem.dim)
    phi_b = _vectorized(problem.phi)
    mp = lattice_minimize(phi_b, center, radius, resolution)
    cap = 40_000 if problem.dim == 2 else 400_000
    md = lattice_minimize(_dre_batch(problem, gamma), center, radius, resolution, max_points=cap)
    u = smooth_prox(problem.f, gamma, md.x)
    tol = 10.0 * resolution if value_tol is None else value_tol
    # near-optimal cost points around the candidate
    local = grid(u, 4.0 * resolution + 2.0 * resolution, resolution)
    pts = np.concatenate([local, mp.x[None, :]])
    vals = phi_b(pts)
    good = pts[vals <= mp.value + tol]
    gap = float(np.min(np.linalg.norm(good - u, axis=1))) if good.size else math.inf
    return MinEquivalenceReport(mp.value, md.value, mp.x, md.x, u, abs(mp.value - md.value),
                                gap, max(mp.spacing, md.spacing))


@dataclass(frozen=True)
class ContinuityReport:
    """Outcome of a jump search along a segment.

    Attributes
    ----------
    max_slope : float
        Largest difference quotient between consecutive samples.
    jumps : int
        Number of sampling intervals whose increment does not shrink
        under repeated bisection (a discontinuity).
    finite : bool
        True when every sampled value is finite.
    """

    max_slope: float
    jumps: int
    finite: bool


def continuity_probe(problem: CompositeProblem, gamma: float, a, b, n: int = 1000,
                     refinements: int = 30) -> ContinuityReport:
    """Sample the envelope on the segment ``[a, b]`` and search for jumps.

    An interval is flagged when its increment is more than ten times that
    of both neighbours; it is then bisected ``refinements`` times, always
    following the half with the larger increment.  A continuous function
    sees that increment vanish, a jump keeps at least half of it.
    """
    a, b = as_point(a), as_point(b)
    ts = np.linspace(0.0, 1.0, n)
    h = float(np.linalg.norm(b - a)) / (n - 1)

    def dre(t):
        return eval_dre(problem, gamma, a + t * (b - a)).dre_value

    vals = np.array([dre(t) for t in ts])
    finite = bool(np.all(np.isfinite(vals)))
    if not finite:
        return ContinuityReport(math.inf, 0, False)
    inc = np.abs(np.diff(vals))
    jumps = 0
    for i in range(inc.size):
        nb = max(inc[i - 1] if i > 0 else 0.0, inc[i + 1] if i + 1 < inc.size else 0.0)
        if inc[i] <= 10.0 * nb or inc[i] <= 1e-12 * max(1.0, abs(vals[i])):
            continue
        lo, hi = ts[i], ts[i + 1]
        flo, fhi = vals[i], vals[i + 1]
        for _ in range(refinements):
            mid = 0.5 * (lo + hi)
            fm = dre(mid)
            if abs(fm - flo) >= abs(fhi - fm):
                hi, fhi = mid, fm
            else:
                lo, flo = mid, fm
        if abs(fhi - flo) >= 0.5 * inc[i]:
            jumps += 1
    return ContinuityReport(float(inc.max() / h) if h > 0 else 0.0, jumps, True)


@dataclass(frozen=True)
class RayProbe:
    """Cost and envelope values along a ray ``t * direction``."""

    radii: np.ndarray
    phi: np.ndarray
    dre: np.ndarray

    def exceeds(self, threshold: float) -> tuple:
        """Whether the cost and the envelope both exceed ``threshold`` at the far end."""
        return bool(self.phi[-1] > threshold), bool(self.dre[-1] > threshold)


def ray_probe(problem: CompositeProblem, gamma: float, direction,
              radii: Sequence[float]) -> RayProbe:
    """Evaluate the cost and the envelope at ``t * direction`` for ``t`` in ``radii``."""
    d = as_point(direction)
    d = d / np.linalg.norm(d)
    r = np.asarray(radii, dtype=np.float64)
    phi = np.array([problem.phi(t * d) for t in r])
    dre = np.array([eval_dre(problem, gamma, t * d).dre_value for t in r])
    return RayProbe(r, phi, dre)
