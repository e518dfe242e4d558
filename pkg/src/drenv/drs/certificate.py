"""Stepsize/relaxation certificates and sufficient-decrease constants.

For ``f`` L-smooth and sigma-hypoconvex, one DRS step with stepsize
``gamma`` and relaxation ``lam`` decreases the envelope by at least
``c / (1 + gamma L)^2 * ||s - s+||^2`` with ``c > 0`` exactly when

* ``lam < 2``: ``0 < gamma < min{(2 - lam) / (2 [sigma]_-), 1/L}``;
* ``lam >= 2``: ``sigma > 0``, ``lam < 4 / (1 + sqrt(1 - p))`` with
  ``p = sigma/L``, and ``gamma`` strictly between
  ``(p lam -+ delta) / (4 sigma)``,
  ``delta = sqrt((p lam)^2 - 8 p (lam - 2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..core import PreconditionError, StepsizeInfeasibleError, neg_part

__all__ = [
    "StepsizeCertificate",
    "stepsize_certificate",
    "decrease_constant_formula",
    "decrease_constant_closed_form",
    "sufficient_decrease_constant",
    "simple_bound",
]

# relative shrink of the open interval for lam >= 2
OPEN_MARGIN = 1e-12
# agreement required between the two closed forms of c
FORM_AGREEMENT = 1e-14


def _validate(L: float, sigma: float, lam: float) -> None:
    if not L >= 0.0:
        raise PreconditionError(f"L must be nonnegative, got {L}")
    if abs(sigma) > L * (1 + 1e-12):
        raise PreconditionError(f"|sigma| must not exceed L (sigma={sigma}, L={L})")
    if not (0.0 < lam < 4.0):
        raise PreconditionError(f"lambda must lie in (0, 4), got {lam}")


def decrease_constant_formula(L: float, sigma: float, gamma: float, lam: float) -> float:
    """Case-wise decrease constant, evaluated without a feasibility check.

    ``lam < 2``, with ``q = [sigma]_- / L``:

    * if ``sigma/L >= lam/2 - 1``:
      ``c = (2 - lam)/(2 lam gamma) - L max{q/(2(1 - q)), gamma L/lam - 1/2}``;
    * otherwise ``c = (2 - lam)/(2 lam gamma) - [sigma]_-/lam``.

    ``lam >= 2``: ``c = (2 - lam)/(2 lam gamma) + sigma (1/2 - gamma L/lam)``.

    The returned value is positive exactly inside the certified region
    and is meaningful as a sign test outside of it.
    """
    base = (2.0 - lam) / (2.0 * lam * gamma)
    if lam >= 2.0:
        return base + sigma * (0.5 - gamma * L / lam)
    if L == 0.0:
        return base
    p = sigma / L
    q = neg_part(p)
    if p >= lam / 2.0 - 1.0:
        return base - L * max(q / (2.0 * (1.0 - q)), gamma * L / lam - 0.5)
    return base - neg_part(sigma) / lam


def decrease_constant_closed_form(L: float, sigma: float, gamma: float, lam: float) -> float:
    """Single-expression form of the ``lam < 2`` constant.

    ``c = (2 - lam)/(2 lam gamma)
    - L max{min{q/lam, q/(2(1 - q))}, gamma L/lam - 1/2}``
    with ``q = [sigma/L]_-`` and ``q/(2(1 - q)) = inf`` at ``q = 1``.
    Inside the certified region it equals :func:`decrease_constant_formula`.
    """
    if lam >= 2.0:
        return decrease_constant_formula(L, sigma, gamma, lam)
    base = (2.0 - lam) / (2.0 * lam * gamma)
    if L == 0.0:
        return base
    q = neg_part(sigma / L)
    ratio = math.inf if q >= 1.0 else q / (2.0 * (1.0 - q))
    return base - L * max(min(q / lam, ratio), gamma * L / lam - 0.5)


@dataclass(frozen=True)
class StepsizeCertificate:
    """Certified stepsize interval for given ``(L, sigma, lam)``.

    Attributes
    ----------
    L, sigma, lam : float
    gamma_lo, gamma_hi : float
        Open interval of certified stepsizes; empty when
        ``gamma_hi <= gamma_lo``.
    branch : str
        ``"lambda<2"`` or ``"lambda>=2"``.
    p : float
        ``sigma / L`` (0 when ``L = 0``).
    delta : float
        Discriminant root of the ``lam >= 2`` branch (``nan`` otherwise
        or when it is not real).
    """

    L: float
    sigma: float
    lam: float
    gamma_lo: float
    gamma_hi: float
    branch: str
    p: float
    delta: float = math.nan

    @property
    def feasible(self) -> bool:
        return self.gamma_hi > self.gamma_lo

    @property
    def interval(self) -> tuple:
        return (self.gamma_lo, self.gamma_hi)

    def contains(self, gamma: float) -> bool:
        """Membership in the open interval (shrunk by a relative 1e-12 for ``lam >= 2``)."""
        if not self.feasible:
            return False
        lo, hi = self.gamma_lo, self.gamma_hi
        if self.branch == "lambda>=2":
            width = hi - lo
            lo, hi = lo + OPEN_MARGIN * width, hi - OPEN_MARGIN * width
        return lo < gamma < hi

    def c(self, gamma: float) -> float:
        """Sufficient-decrease constant at ``gamma`` (raises outside the interval)."""
        return sufficient_decrease_constant(self.L, self.sigma, gamma, self.lam)

    def quartiles(self) -> list:
        """Stepsizes at 1/4, 1/2 and 3/4 of the interval (empty if infeasible)."""
        if not self.feasible or not math.isfinite(self.gamma_hi):
            return []
        w = self.gamma_hi - self.gamma_lo
        return [self.gamma_lo + k * w / 4.0 for k in (1, 2, 3)]


def stepsize_certificate(L: float, sigma: float, lam: float) -> StepsizeCertificate:
    """Certified stepsize interval and decrease-constant handle.

    Parameters
    ----------
    L : float
        Lipschitz modulus of ``grad f`` (``L = 0`` for affine ``f``).
    sigma : float
        Hypoconvexity modulus, ``|sigma| <= L``.
    lam : float
        Relaxation in ``(0, 4)``.

    Returns
    -------
    StepsizeCertificate
        Possibly empty; an empty interval is a value, not an error.
    """
    L, sigma, lam = float(L), float(sigma), float(lam)
    _validate(L, sigma, lam)
    p = sigma / L if L > 0 else 0.0
    if lam < 2.0:
        m = neg_part(sigma)
        hi = math.inf if m == 0.0 else (2.0 - lam) / (2.0 * m)
        if L > 0:
            hi = min(hi, 1.0 / L)
        return StepsizeCertificate(L, sigma, lam, 0.0, hi, "lambda<2", p)
    empty = StepsizeCertificate(L, sigma, lam, 0.0, 0.0, "lambda>=2", p)
    if sigma <= 0.0 or L == 0.0:
        return empty
    if lam >= 4.0 / (1.0 + math.sqrt(max(0.0, 1.0 - p))):
        return empty
    disc = (p * lam) ** 2 - 8.0 * p * (lam - 2.0)
    if disc < 0.0:
        return empty
    delta = math.sqrt(disc)
    lo = (p * lam - delta) / (4.0 * sigma)
    hi = min((p * lam + delta) / (4.0 * sigma), 1.0 / L)
    return StepsizeCertificate(L, sigma, lam, max(lo, 0.0), hi, "lambda>=2", p, delta)


def sufficient_decrease_constant(L: float, sigma: float, gamma: float, lam: float) -> float:
    """Certified decrease constant ``c > 0``.

    Evaluates the case-wise expression and the single-expression form and
    asserts that they agree.

    Raises
    ------
    StepsizeInfeasibleError
        If ``(gamma, lam)`` is outside the certificate.
    AssertionError
        If the two closed forms disagree (an implementation bug).
    """
    cert = stepsize_certificate(L, sigma, lam)
    if not cert.contains(gamma):
        raise StepsizeInfeasibleError(
            f"gamma={gamma} outside certified interval {cert.interval} for "
            f"L={L}, sigma={sigma}, lambda={lam}")
    c0 = decrease_constant_formula(L, sigma, gamma, lam)
    c1 = decrease_constant_closed_form(L, sigma, gamma, lam)
    scale = max(1.0, abs((2.0 - lam) / (2.0 * lam * gamma)), abs(L), abs(c0))
    assert abs(c0 - c1) <= FORM_AGREEMENT * scale, (c0, c1)
    return c0


def simple_bound(L: float, lam: float, convex: bool) -> tuple:
    """Stepsize bound and constant used when only ``L`` is trusted.

    Returns ``(gamma_sup, c)`` where ``c(gamma)`` is the decrease constant
    for a convex ``f`` (``gamma < 1/L``) or for an arbitrary L-smooth ``f``
    (``gamma < (2 - lam)/(2L)``), with ``lam`` in ``(0, 2)``.  These
    constants satisfy ``c(gamma/2, 2L) = 2 c(gamma, L)``.
    """
    if not (0.0 < lam < 2.0):
        raise PreconditionError("simple bounds need lambda in (0, 2)")
    if convex:
        def c(gamma, L=L):
            return (2.0 - lam) / (2.0 * lam * gamma) - L * max(gamma * L / lam - 0.5, 0.0)
        return 1.0 / L, c

    def c(gamma, L=L):
        return (2.0 - lam) / (2.0 * lam * gamma) - L / lam
    return (2.0 - lam) / (2.0 * L), c
