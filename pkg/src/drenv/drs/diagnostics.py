"""Convergence diagnostics for DRS traces and the relaxed-projection identity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import CompositeProblem, PreconditionError, as_point
from ..core.catalog import WholeSpace, half_sq_distance, set_indicator, sq_distance_proxable
from ..trace import IterationTrace
from .solver import DECREASE_SLACK, drs_step

__all__ = ["RateReport", "residual_rate_report", "MarpReport", "marp_equivalence_check",
           "relaxed_projection"]


@dataclass(frozen=True)
class RateReport:
    """Tail behaviour of the running minimum of the residual.

    Attributes
    ----------
    checkpoints : tuple of int
        ``(K/4, K/2, K)``.
    scaled : tuple of float
        ``sqrt(k) * min_{i<k} r_i`` at the checkpoints.
    tail_ok : bool
        Each scaled value is at most 1.05 times the previous one.
    telescoped_sum : float
        ``sum_{k<K-1} r_k^2``.
    telescoped_bound : float
        ``(1 + gamma L)^2 / (c lam^2) * (merit_0 - merit_{K-1})``.
    telescoped_slack : float
        Accumulated per-step rounding allowance of the decrease assertion.
    telescoping_ok : bool
    finite_termination : bool
        The residual reached zero up to rounding (``floor``).
    """

    checkpoints: tuple
    scaled: tuple
    tail_ok: bool
    telescoped_sum: float
    telescoped_bound: float
    telescoped_slack: float
    telescoping_ok: bool
    finite_termination: bool

    @property
    def ok(self) -> bool:
        return self.tail_ok and self.telescoping_ok


def residual_rate_report(trace: IterationTrace, band: float = 1.05,
                         floor: float = 1e-13) -> RateReport:
    """Check the ``o(1/sqrt k)`` tail and the telescoped decrease on a trace.

    Parameters
    ----------
    trace : IterationTrace
        Certified run; ``trace.meta`` must carry ``c``, ``gamma``, ``lam``
        and ``L``.
    band : float
        Tolerance factor of the monotone tail test.
    floor : float
        Residuals at most ``floor * max(1, max_k r_k)`` count as zero: once
        the iteration sits at rounding level the running minimum stalls
        and ``sqrt(k) r_k`` grows for purely numerical reasons.

    Notes
    -----
    ADMM traces qualify as well: their constraint residual equals
    ``||u - v||`` of the equivalent DRS run and ``gamma = 1/beta``.
    """
    meta = trace.meta
    c, gamma, lam, L = meta.get("c"), meta.get("gamma"), meta.get("lam"), meta.get("L")
    if c is None or not (isinstance(c, float) and c > 0):
        raise PreconditionError("residual_rate_report needs a certified trace (c > 0)")
    r = trace.residuals
    m = trace.merits
    K = r.size
    finite = bool(K and r.min() <= floor * max(1.0, float(r.max())))
    if K >= 4 and not finite:
        rmin = np.minimum.accumulate(r)
        ks = (K // 4, K // 2, K)
        scaled = tuple(math.sqrt(k) * float(rmin[k - 1]) for k in ks)
        tail_ok = scaled[1] <= band * scaled[0] and scaled[2] <= band * scaled[1]
    else:
        ks, scaled, tail_ok = (), (), True
    lhs = float(np.sum(r[:-1] ** 2)) if K > 1 else 0.0
    coef = c * lam * lam / (1.0 + gamma * L) ** 2
    rhs = (float(m[0]) - float(m[-1])) / coef if K > 1 else 0.0
    slack = DECREASE_SLACK * float(np.sum(np.maximum(1.0, np.abs(m[:-1])))) / coef if K > 1 else 0.0
    return RateReport(ks, scaled, bool(tail_ok), lhs, rhs, slack, lhs <= rhs + slack, finite)


def relaxed_projection(project, t: float, x: np.ndarray) -> np.ndarray:
    """``(1 - t) x + t P(x)``."""
    return (1.0 - t) * x + t * np.asarray(project(x), dtype=np.float64).reshape(x.shape)


@dataclass(frozen=True)
class MarpReport:
    """One DRS step on a sum of squared distances versus relaxed projections."""

    drs_point: np.ndarray
    marp_point: np.ndarray
    discrepancy: float
    p: float
    q: float


def marp_equivalence_check(A_set, B_set, alpha: float, beta: float, gamma: float, lam: float,
                           s) -> MarpReport:
    """Compare a DRS step with the alternating relaxed projection formula.

    The DRS step is applied to ``alpha/2 dist^2_A + beta/2 dist^2_B``
    (``beta = inf`` turns the second term into the indicator of ``B``,
    ``alpha = inf`` the first into the indicator of ``A``; the matching
    relaxation is then 2, a reflection) and compared
    with ``(1 - lam/2) s + (lam/2) P_{B,q}(P_{A,p}(s))`` where
    ``p = 2 alpha gamma/(1 + alpha gamma)``,
    ``q = 2 beta gamma/(1 + beta gamma)`` and
    ``P_{C,t} = (1 - t) id + t P_C``.

    Parameters
    ----------
    A_set : set with a ``project`` method, or None for the whole space
        Must be convex when ``alpha`` is finite.
    B_set : set with a ``project`` method, or None for the whole space
    """
    s = as_point(s)
    A = WholeSpace(s.size) if A_set is None else A_set
    B = WholeSpace(s.size) if B_set is None else B_set
    if not (alpha > 0 and beta > 0 and gamma > 0 and lam > 0):
        raise PreconditionError("alpha, beta, gamma, lambda must be positive")
    p = 2.0 if math.isinf(alpha) else 2.0 * alpha * gamma / (1.0 + alpha * gamma)
    q = 2.0 if math.isinf(beta) else 2.0 * beta * gamma / (1.0 + beta * gamma)
    if math.isinf(beta):
        g = set_indicator(B)
    else:
        g = sq_distance_proxable(B, beta)
    if math.isinf(alpha):
        # prox of the indicator of A is the projection
        u = np.asarray(A.project(s), dtype=np.float64).reshape(s.shape)
        v = g.prox(gamma, 2.0 * u - s)
        drs_point = s + lam * (v - u)
    else:
        problem = CompositeProblem(half_sq_distance(A, alpha), g)
        _, _, drs_point = drs_step(problem, gamma, lam, s)
    w = relaxed_projection(A.project, p, s)
    marp = (1.0 - lam / 2.0) * s + (lam / 2.0) * relaxed_projection(B.project, q, w)
    return MarpReport(drs_point, marp, float(np.linalg.norm(drs_point - marp)), p, q)
