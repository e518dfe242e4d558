"""DRS/PRS stepper, certified solver loop and adaptive-stepsize variant."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..core import (
    CompositeProblem,
    InvariantViolation,
    PreconditionError,
    StepsizeInfeasibleError,
    as_point,
    eval_prox,
    smooth_prox,
)
from ..envelope import augmented_lagrangian, dre_from_pair
from ..trace import IterationTrace
from .certificate import simple_bound, stepsize_certificate

__all__ = [
    "DrsConfig",
    "drs_step",
    "run_drs",
    "StationarityWitness",
    "stationarity_witness",
    "run_adaptive_drs",
    "DECREASE_SLACK",
]

# relative slack of the certified decrease assertion
DECREASE_SLACK = 1e-10
# relative slack of the adaptive tests, absorbing rounding once iterates settle
ADAPTIVE_SLACK = 1e-12


@dataclass(frozen=True)
class DrsConfig:
    """Parameters of a DRS run.

    Parameters
    ----------
    gamma : float
        Stepsize, positive.
    lam : float
        Relaxation in ``(0, 4)``; ``lam = 2`` is Peaceman-Rachford.
    max_iter : int
    tol : float
        Stop when ``||u - v|| <= tol * max(1, ||u||)``.
    unsafe : bool
        Skip the certificate and the decrease assertion (used by the
        tightness experiments).
    """

    gamma: float
    lam: float = 1.0
    max_iter: int = 100_000
    tol: float = 1e-8
    unsafe: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise PreconditionError("gamma must be positive")
        if not (0 < self.lam < 4):
            raise PreconditionError("lambda must lie in (0, 4)")
        if int(self.max_iter) < 1 or not self.tol > 0:
            raise PreconditionError("max_iter must be >= 1 and tol > 0")


def drs_step(problem: CompositeProblem, gamma: float, lam: float, s):
    """One relaxed Douglas-Rachford step.

    Returns
    -------
    u, v, s_next : ndarray
        ``u = prox_{gamma f}(s)``, ``v = prox_{gamma g}(2u - s)`` and
        ``s_next = s + lam (v - u)``.
    """
    if not lam > 0:
        raise PreconditionError("lambda must be positive")
    s = as_point(s)
    u = smooth_prox(problem.f, gamma, s)
    v = eval_prox(problem.g, gamma, 2.0 * u - s)
    return u, v, s + lam * (v - u)


def _stop(u: np.ndarray, v: np.ndarray, tol: float) -> bool:
    return float(np.linalg.norm(u - v)) <= tol * max(1.0, float(np.linalg.norm(u)))


def run_drs(problem: CompositeProblem, config: DrsConfig, s0) -> IterationTrace:
    """Run DRS and record the envelope at every iterate.

    Row ``k`` of the trace holds ``||u^k - v^k||`` and the envelope at
    ``s^k``.  Unless ``config.unsafe`` is set, ``(gamma, lam)`` must be
    certified and the decrease
    ``DRE(s^k) - DRE(s^{k+1}) >= c/(1 + gamma L)^2 ||s^k - s^{k+1}||^2``
    is asserted with relative slack 1e-10.

    Raises
    ------
    StepsizeInfeasibleError
        If the configuration is not certified and not flagged unsafe.
    InvariantViolation
        If the certified decrease fails.
    """
    f = problem.f
    gamma, lam = config.gamma, config.lam
    coef = None
    c = math.nan
    if not config.unsafe:
        cert = stepsize_certificate(f.L, f.sigma, lam)
        if not cert.contains(gamma):
            raise StepsizeInfeasibleError(
                f"(gamma={gamma}, lambda={lam}) not certified: interval {cert.interval}")
        c = cert.c(gamma)
        coef = c / (1.0 + gamma * f.L) ** 2
    trace = IterationTrace(meta={"algorithm": "drs" if lam != 2 else "prs", "gamma": gamma,
                                 "lam": lam, "L": f.L, "sigma": f.sigma, "c": c,
                                 "certified": not config.unsafe, "halvings": 0})
    s = as_point(s0)
    t0 = time.perf_counter_ns()
    prev_merit = prev_s = None
    trace.reason = "max_iter"
    u = v = s
    for k in range(int(config.max_iter)):
        u, v, s_next = drs_step(problem, gamma, lam, s)
        merit = dre_from_pair(problem, gamma, u, v)
        res = float(np.linalg.norm(u - v))
        trace.append(k, res, merit, gamma, time.perf_counter_ns() - t0)
        if coef is not None and prev_merit is not None:
            ds = s - prev_s
            need = coef * float(ds @ ds)
            if prev_merit - merit < need - DECREASE_SLACK * max(1.0, abs(prev_merit)):
                trace.reason = "violation"
                raise InvariantViolation(
                    f"certified decrease failed at k={k}",
                    {"k": k, "previous": prev_merit, "current": merit, "required": need,
                     "gamma": gamma, "lam": lam, "c": c, "trace": trace})
        if _stop(u, v, config.tol):
            trace.reason = "converged"
            break
        prev_merit, prev_s = merit, s
        s = s_next
    trace.final = {"s": s, "u": u, "v": v}
    return trace


@dataclass(frozen=True)
class StationarityWitness:
    """Explicit element of the regular subdifferential of the cost at ``v``.

    Attributes
    ----------
    xi : ndarray
        ``(u - v)/gamma + grad f(v) - grad f(u)``.
    norm : float
    bound : float
        ``(1/gamma + L) ||u - v||``, always an upper bound on ``norm``.
    reference_bound : float
        ``(1 - gamma sigma)/(2 gamma) ||u - v||``, reported for comparison
        only.
    """

    xi: np.ndarray
    norm: float
    bound: float
    reference_bound: float

    def __iter__(self):
        return iter((self.xi, self.bound))


def stationarity_witness(problem: CompositeProblem, gamma: float, u, v) -> StationarityWitness:
    """Subgradient witness at ``v`` built from a DRS pair ``(u, v)``."""
    u, v = as_point(u), as_point(v)
    f = problem.f
    xi = (u - v) / gamma + f.grad(v) - f.grad(u)
    r = float(np.linalg.norm(u - v))
    return StationarityWitness(xi, float(np.linalg.norm(xi)), (1.0 / gamma + f.L) * r,
                               (1.0 - gamma * f.sigma) / (2.0 * gamma) * r)


def _lagrangian(problem: CompositeProblem, gamma: float, s, u, v) -> float:
    return augmented_lagrangian(problem.f.value(u), problem.g.value(v), 1.0 / gamma,
                                u, v, (u - s) / gamma)


def run_adaptive_drs(problem: CompositeProblem, s0, L_init: float, lam: float = 1.0, *,
                     convex: bool = False, gamma_fraction: float = 0.5, tol: float = 1e-8,
                     max_iter: int = 100_000, max_halvings: int = 64) -> IterationTrace:
    """DRS with a backtracked stepsize for an unknown Lipschitz modulus.

    Starting from the estimate ``L = L_init``, the stepsize and the
    decrease constant come from the simple bounds (convex or general
    ``f``), with ``gamma = gamma_fraction * gamma_sup``.  At every
    iteration the augmented Lagrangian ``L_k`` at
    ``(u^k, v^k, (u^k - s^k)/gamma)`` must satisfy

        L_k <= L_{k-1} - c lam^2/(1 + gamma L)^2 ||v^{k-1} - u^{k-1}||^2
        and  phi(v^k) <= L_k;

    otherwise ``gamma, c, L <- gamma/2, 2c, 2L``, step ``k-1`` is
    recomputed from the stored ``s^{k-1}`` and the test is retried.  An
    undefined proximal map at the current stepsize counts as a failed
    test.  Both tests carry a relative slack of 1e-12.

    ``problem.f.L`` and ``problem.f.sigma`` are not used.

    Raises
    ------
    InvariantViolation
        After more than ``max_halvings`` halvings.
    """
    if not (0.0 < lam < 2.0):
        raise PreconditionError("adaptive DRS requires lambda in (0, 2)")
    if not L_init > 0:
        raise PreconditionError("L_init must be positive")
    L = float(L_init)
    gamma_sup, cfun = simple_bound(L, lam, convex)
    gamma = gamma_fraction * gamma_sup
    c = cfun(gamma, L)
    halvings = 0
    where = []

    def halve(k):
        nonlocal gamma, c, L, halvings
        gamma, c, L = gamma / 2.0, 2.0 * c, 2.0 * L
        halvings += 1
        where.append(k)
        if halvings > max_halvings:
            raise InvariantViolation(f"more than {max_halvings} stepsize halvings",
                                     {"gamma": gamma, "L": L})

    def step(s):
        try:
            return drs_step(problem, gamma, lam, s)
        except StepsizeInfeasibleError:
            return None

    trace = IterationTrace(meta={"algorithm": "adaptive-drs", "lam": lam, "L_init": L_init})
    t0 = time.perf_counter_ns()
    s_prev = as_point(s0)
    while (st := step(s_prev)) is None:
        halve(0)
    u_prev, v_prev, s_cur = st
    L_prev = _lagrangian(problem, gamma, s_prev, u_prev, v_prev)
    trace.append(0, np.linalg.norm(u_prev - v_prev), L_prev, gamma, time.perf_counter_ns() - t0)
    trace.reason = "max_iter"
    u, v = u_prev, v_prev
    if _stop(u_prev, v_prev, tol):
        trace.reason = "converged"
    k = 1
    while trace.reason != "converged" and k < max_iter:
        st = step(s_cur)
        ok = st is not None
        if ok:
            u, v, s_next = st
            L_k = _lagrangian(problem, gamma, s_cur, u, v)
            d = v_prev - u_prev
            need = c * lam * lam / (1.0 + gamma * L) ** 2 * float(d @ d)
            ok = (L_k <= L_prev - need + ADAPTIVE_SLACK * max(1.0, abs(L_prev))
                  and problem.phi(v) <= L_k + ADAPTIVE_SLACK * max(1.0, abs(L_k)))
        if not ok:
            halve(k)
            while (st := step(s_prev)) is None:
                halve(k)
            u_prev, v_prev, s_cur = st
            L_prev = _lagrangian(problem, gamma, s_prev, u_prev, v_prev)
            trace.records.pop()
            trace.append(k - 1, np.linalg.norm(u_prev - v_prev), L_prev, gamma,
                         time.perf_counter_ns() - t0)
            continue
        trace.append(k, np.linalg.norm(u - v), L_k, gamma, time.perf_counter_ns() - t0)
        if _stop(u, v, tol):
            trace.reason = "converged"
            break
        s_prev, s_cur = s_cur, s_next
        u_prev, v_prev, L_prev = u, v, L_k
        k += 1
    trace.meta.update({"gamma": gamma, "c": c, "L": L, "halvings": halvings,
                       "halving_iterations": where, "certified": True})
    trace.final = {"s": s_cur, "u": u, "v": v}
    return trace
