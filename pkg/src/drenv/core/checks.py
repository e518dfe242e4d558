"""Numerical audits of smoothness, hypoconvexity and proximal regularity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .oracles import PreconditionError, SmoothOracle, as_point, smooth_prox

__all__ = [
    "ProxRegularityReport",
    "check_smooth_prox_regularity",
    "MoreauGradientReport",
    "check_moreau_gradient",
    "LowerBoundReport",
    "check_hypoconvex_lower_bound",
    "SmoothnessEstimate",
    "check_subdiff_smoothness",
]


@dataclass(frozen=True)
class ProxRegularityReport:
    """Largest violations of the proximal regularity inequalities.

    Violations are ``max(0, rhs - lhs)`` divided by ``max(1, ||s - s'||^2)``
    so that they are comparable across pairs.

    Attributes
    ----------
    strong_monotonicity : float
        ``<u-u', s-s'> >= ||s-s'||^2 / (1 + gamma L)``.
    cocoercivity : float
        ``<u-u', s-s'> >= (1 + gamma sigma) ||u-u'||^2``.
    lower_lipschitz : float
        ``||u-u'|| >= ||s-s'|| / (1 + gamma L)``.
    upper_lipschitz : float
        ``||u-u'|| <= ||s-s'|| / (1 + gamma sigma)``.
    n_pairs : int
    """

    strong_monotonicity: float
    cocoercivity: float
    lower_lipschitz: float
    upper_lipschitz: float
    n_pairs: int

    @property
    def max_violation(self) -> float:
        return max(self.strong_monotonicity, self.cocoercivity,
                   self.lower_lipschitz, self.upper_lipschitz)


def check_smooth_prox_regularity(f: SmoothOracle, gamma: float,
                                 pairs: Iterable[Tuple[np.ndarray, np.ndarray]]) -> ProxRegularityReport:
    """Audit monotonicity, cocoercivity and bi-Lipschitz bounds of ``prox_{gamma f}``.

    Parameters
    ----------
    f : SmoothOracle
    gamma : float
        ``0 < gamma < 1/[sigma]_-``.
    pairs : iterable of (s, s') pairs
    """
    lo_gain = 1.0 / (1.0 + gamma * f.L)
    hi_gain = 1.0 / (1.0 + gamma * f.sigma)
    viol = np.zeros(4)
    n = 0
    for s, s2 in pairs:
        s, s2 = as_point(s), as_point(s2)
        du = smooth_prox(f, gamma, s) - smooth_prox(f, gamma, s2)
        ds = s - s2
        ip = float(du @ ds)
        nds = float(np.linalg.norm(ds))
        ndu = float(np.linalg.norm(du))
        scale = max(1.0, nds * nds)
        cur = np.array([
            lo_gain * nds * nds - ip,
            (1.0 + gamma * f.sigma) * ndu * ndu - ip,
            # squared forms keep the comparison free of square-root rounding
            (lo_gain * nds) ** 2 - ndu * ndu,
            ndu * ndu - (hi_gain * nds) ** 2,
        ]) / scale
        viol = np.maximum(viol, np.maximum(cur, 0.0))
        n += 1
    return ProxRegularityReport(*(float(v) for v in viol), n_pairs=n)


@dataclass(frozen=True)
class MoreauGradientReport:
    """Comparison of ``(s - u)/gamma`` with finite differences of the envelope.

    Attributes
    ----------
    analytic : ndarray
    central : ndarray
        Central-difference gradient.
    rel_error : float
        ``||analytic - central|| / max(1, ||analytic||)``.
    kink : bool
        True when the left and right second differences disagree, which
        marks a branch change of the proximal map inside the stencil.
    one_sided_error : float
        Largest relative error of the forward and backward differences.
    step : float
    """

    analytic: np.ndarray
    central: np.ndarray
    rel_error: float
    kink: bool
    one_sided_error: float
    step: float

    @property
    def agrees(self) -> bool:
        """Central agreement to 1e-6 away from kinks, first-order agreement at kinks."""
        if self.kink:
            return self.one_sided_error <= 10.0 * self.step
        return self.rel_error <= 1e-6


def _envelope(f: SmoothOracle, gamma: float, s: np.ndarray) -> float:
    u = smooth_prox(f, gamma, s)
    d = u - s
    return float(f.value(u)) + float(d @ d) / (2.0 * gamma)


def check_moreau_gradient(f: SmoothOracle, gamma: float, s) -> MoreauGradientReport:
    """Compare the envelope gradient formula with finite differences.

    Uses the step ``h = 1e-5 max(1, ||s||)``.
    """
    s = as_point(s)
    h = 1e-5 * max(1.0, float(np.linalg.norm(s)))
    analytic = (s - smooth_prox(f, gamma, s)) / gamma
    e0 = _envelope(f, gamma, s)
    central = np.empty_like(s)
    one_sided = 0.0
    kink = False
    for i in range(s.size):
        e = np.zeros_like(s)
        e[i] = h
        ep, em = _envelope(f, gamma, s + e), _envelope(f, gamma, s - e)
        ep2, em2 = _envelope(f, gamma, s + 2 * e), _envelope(f, gamma, s - 2 * e)
        central[i] = (ep - em) / (2 * h)
        fwd, bwd = (ep - e0) / h, (e0 - em) / h
        scale = max(1.0, abs(analytic[i]))
        one_sided = max(one_sided, abs(fwd - analytic[i]) / scale, abs(bwd - analytic[i]) / scale)
        curv_r = (ep2 - 2 * ep + e0) / (h * h)
        curv_l = (e0 - 2 * em + em2) / (h * h)
        if abs(curv_r - curv_l) > 1e-3 * max(1.0, abs(curv_r), abs(curv_l)):
            kink = True
    rel = float(np.linalg.norm(analytic - central)) / max(1.0, float(np.linalg.norm(analytic)))
    return MoreauGradientReport(analytic, central, rel, kink, float(one_sided), h)


@dataclass(frozen=True)
class LowerBoundReport:
    """Slack ``f(y) - f(x) - <grad f(x), y - x> - rho(y, x)`` (nonnegative when the bound holds)."""

    slack: float
    rho: float
    variant: str

    @property
    def holds(self) -> bool:
        return self.slack >= -1e-12 * max(1.0, abs(self.rho))


def check_hypoconvex_lower_bound(f: SmoothOracle, variant: str, x, y) -> LowerBoundReport:
    """Check a lower bound of ``f(y)`` by its linearization at ``x``.

    ``variant="simple"`` uses ``rho = sigma/2 ||y - x||^2``.
    ``variant="mixed"`` requires ``-L < sigma <= 0`` and uses
    ``rho = sigma L / (2 (L + sigma)) ||y - x||^2
    + ||grad f(y) - grad f(x)||^2 / (2 (L + sigma))``.

    Raises
    ------
    PreconditionError
        For ``variant="mixed"`` outside ``-L < sigma <= 0``, or an unknown
        variant.
    """
    x, y = as_point(x), as_point(y)
    L, sig = f.L, f.sigma
    d = y - x
    gx = f.grad(x)
    if variant == "simple":
        rho = 0.5 * sig * float(d @ d)
    elif variant == "mixed":
        if not (-L < sig <= 0):
            raise PreconditionError("mixed lower bound requires -L < sigma <= 0")
        dg = f.grad(y) - gx
        rho = (sig * L * float(d @ d) + float(dg @ dg)) / (2.0 * (L + sig))
    else:
        raise PreconditionError(f"unknown variant {variant!r}")
    slack = float(f.value(y)) - float(f.value(x)) - float(gx @ d) - rho
    return LowerBoundReport(slack, rho, variant)


@dataclass(frozen=True)
class SmoothnessEstimate:
    """Empirical moduli from gradient samples."""

    L: float
    sigma: float
    n_pairs: int

    def __iter__(self):
        return iter((self.L, self.sigma))


def check_subdiff_smoothness(samples: Sequence[Tuple[np.ndarray, np.ndarray]],
                             chunk: int = 512) -> SmoothnessEstimate:
    """Tightest empirical ``(L, sigma)`` from ``(point, gradient)`` samples.

    Returns the max and min of ``<v1 - v2, x1 - x2> / ||x1 - x2||^2``
    over all pairs of distinct points.  Unpacks as ``L, sigma``.

    Raises
    ------
    PreconditionError
        With fewer than two samples or when all points coincide.
    """
    if len(samples) < 2:
        raise PreconditionError("need at least two samples")
    X = np.array([as_point(p) for p, _ in samples])
    V = np.array([as_point(v) for _, v in samples])
    hi, lo, count = -math.inf, math.inf, 0
    n = X.shape[0]
    for a in range(0, n, chunk):
        dx = X[a:a + chunk, None, :] - X[None, :, :]
        dv = V[a:a + chunk, None, :] - V[None, :, :]
        nrm = np.einsum("ijk,ijk->ij", dx, dx)
        ii = np.arange(a, min(a + chunk, n))[:, None]
        mask = (nrm > 0) & (ii < np.arange(n)[None, :])
        if not np.any(mask):
            continue
        ratio = np.einsum("ijk,ijk->ij", dv, dx)[mask] / nrm[mask]
        hi, lo = max(hi, float(ratio.max())), min(lo, float(ratio.min()))
        count += int(mask.sum())
    if count == 0:
        raise PreconditionError("all sample points coincide")
    return SmoothnessEstimate(hi, lo, count)
