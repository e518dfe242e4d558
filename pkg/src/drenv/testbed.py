"""Tightness fixtures, random instances, experiment drivers and bound curves.

Fixtures
--------
gamma-necessity
    ``f`` the one-dimensional piecewise quadratic of
    :func:`drenv.core.catalog.counterexample` with ``t > 1`` and ``g`` the
    indicator of ``{-1, 1}``.  DRS stalls for ``gamma > 1/L``.
lambda-necessity
    The same ``f`` with ``t = 1`` and ``g`` the indicator of ``{p}``,
    ``p > 1``.  On the branch ``u > 1`` the distance ``|u - p|`` is
    multiplied by ``|1 - lam/(1 + gamma sigma)|`` at every step.

Randomness comes from :func:`numpy.random.default_rng` seeded explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .admm import AdmmProblem, penalty_certificate, quadratic_admm
from .core import CompositeProblem, PreconditionError, catalog
from .drs import DrsConfig, run_drs, stepsize_certificate
from .trace import IterationTrace

__all__ = [
    "TightnessFixture",
    "gamma_necessity_problem",
    "lambda_necessity_problem",
    "GammaExperiment",
    "gamma_necessity_experiment",
    "LambdaExperiment",
    "lambda_necessity_experiment",
    "RANDOM_KINDS",
    "random_instance",
    "random_quadratic",
    "bound_curve",
    "gamma_transition",
    "lambda_transition",
    "SWEEP_HEADER",
    "sweep_rows",
]

RANDOM_KINDS = ("convex-quadratic+l1", "nonconvex-quadratic+l1", "quadratic+l0",
                "quadratic+finite-set")


@dataclass(frozen=True)
class TightnessFixture:
    """A tightness counterexample and its parameters."""

    kind: str
    params: dict
    problem: CompositeProblem


def gamma_necessity_problem(L: float = 1.0, sigma: float = -0.5, t: float = 2.0) -> TightnessFixture:
    """Counterexample ``f`` with ``t > 1`` plus the indicator of ``{-1, 1}``."""
    if not t > 1:
        raise PreconditionError("gamma-necessity fixture requires t > 1")
    prob = CompositeProblem(catalog.counterexample(L, sigma, t), catalog.finite_set([[-1.0], [1.0]]))
    return TightnessFixture("gamma-necessity", {"L": L, "sigma": sigma, "t": t}, prob)


def lambda_necessity_problem(L: float = 1.0, sigma: float = 0.0, p: float = 2.0) -> TightnessFixture:
    """Counterexample ``f`` with ``t = 1`` plus the indicator of ``{p}``, ``p > 1``."""
    if not p > 1:
        raise PreconditionError("lambda-necessity fixture requires p > 1")
    prob = CompositeProblem(catalog.counterexample(L, sigma, 1.0), catalog.finite_set([[p]]))
    return TightnessFixture("lambda-necessity", {"L": L, "sigma": sigma, "p": p}, prob)


@dataclass(frozen=True)
class GammaExperiment:
    """Outcome of a gamma-necessity run.

    Attributes
    ----------
    tail_min_residual : float
        Minimum of ``||u^k - v^k||`` over the second half of the trace.
    threshold : float
        ``10 * tol``.
    stalled : bool
        ``tail_min_residual > threshold``.
    converged : bool
        The stopping rule fired.
    trace : IterationTrace
    """

    tail_min_residual: float
    threshold: float
    stalled: bool
    converged: bool
    trace: IterationTrace


def gamma_necessity_experiment(L: float, sigma: float, t: float, gamma: float, lam: float,
                               s0=3.0, K: int = 10_000, tol: float = 1e-8) -> GammaExperiment:
    """Run ``K`` unsafe DRS iterations on the gamma-necessity fixture."""
    if sigma < 0 and not gamma < 1.0 / -sigma:
        raise PreconditionError("gamma must stay below 1/[sigma]_- for a well-defined prox")
    fx = gamma_necessity_problem(L, sigma, t)
    tr = run_drs(fx.problem, DrsConfig(gamma, lam, max_iter=K, tol=tol, unsafe=True), [s0])
    r = tr.residuals
    tail = float(r[len(r) // 2:].min())
    thr = 10.0 * tol
    return GammaExperiment(tail, thr, tail > thr, tr.converged, tr)


@dataclass(frozen=True)
class LambdaExperiment:
    """Outcome of a lambda-necessity run.

    Attributes
    ----------
    distances : ndarray
        ``|u^k - p|`` (the run stops early once it drops below 1e-12).
    branch_steps : int
        Length of the leading segment with ``u^k > 1``, where the one-step
        recursion applies.
    monotone : bool
        The distances never decrease on the leading segment (relative
        rounding slack 1e-12).
    contracting : bool
        The whole run stays on the branch, no step increases the distance
        and the last distance is below ``(1 - 1e-9)`` times the first.
    tail_ratio : float
        Median of ``|u^{k+1} - p| / |u^k - p|`` over the second half of the
        leading segment, restricted to ``|u^k - p| > 1e-8`` (the whole
        segment when its second half is empty; ``nan`` if no step
        qualifies).
    expected_ratio : float
        ``|1 - lam/(1 + gamma sigma)|``.
    """

    distances: np.ndarray
    branch_steps: int
    monotone: bool
    contracting: bool
    tail_ratio: float
    expected_ratio: float


def _lambda_iterates(fx: TightnessFixture, gamma: float, lam: float, s0: float, K: int):
    p = fx.params["p"]
    f = fx.problem.f
    s = float(s0)
    us = []
    for _ in range(K):
        u = float(f.prox(gamma, np.array([s]))[0])
        us.append(u)
        if abs(u - p) < 1e-12:
            break
        s = s + lam * (p - u)
        if not math.isfinite(s) or abs(s) > 1e150:
            break
    return np.array(us)


def _ratios(d: np.ndarray) -> np.ndarray:
    ok = d[:-1] > 1e-8
    return d[1:][ok] / d[:-1][ok]


def lambda_necessity_experiment(L: float, sigma: float, p: float, gamma: float, lam: float,
                                s0: Optional[float] = None, K: int = 200) -> LambdaExperiment:
    """Run ``K`` unsafe DRS iterations on the lambda-necessity fixture.

    ``s0`` defaults to the fixed point ``(1 + gamma sigma) p + gamma (L - sigma)``
    shifted by 0.1, so the run starts on the branch ``u > 1``.
    """
    if not (0 < gamma < 1.0 / L):
        raise PreconditionError("lambda-necessity experiment requires 0 < gamma < 1/L")
    fixed = (1.0 + gamma * sigma) * p + gamma * (L - sigma)
    s0 = fixed + 0.1 if s0 is None else float(s0)
    if s0 == fixed:
        raise PreconditionError("s0 is the fixed point")
    fx = lambda_necessity_problem(L, sigma, p)
    us = _lambda_iterates(fx, gamma, lam, s0, K)
    d = np.abs(us - p)
    off = np.flatnonzero(us <= 1.0)
    nb = int(off[0]) if off.size else us.size
    seg = d[:nb]
    mono = bool(nb >= 2 and np.all(seg[1:] >= seg[:-1] * (1.0 - 1e-12)))
    contracting = bool(nb == us.size and nb >= 2 and np.all(seg[1:] <= seg[:-1])
                       and seg[-1] < (1.0 - 1e-9) * seg[0])
    ratios = _ratios(seg[nb // 2:])
    if not ratios.size:
        ratios = _ratios(seg)
    tail = float(np.median(ratios)) if ratios.size else math.nan
    return LambdaExperiment(d, nb, mono, contracting, tail,
                            abs(1.0 - lam / (1.0 + gamma * sigma)))


def random_quadratic(rng: np.random.Generator, n: int, lo: float, hi: float):
    """Symmetric matrix with spectrum in ``[lo, hi]`` containing both endpoints."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = rng.uniform(lo, hi, n)
    ev[0], ev[-1] = lo, hi
    Q = (U * ev) @ U.T
    return 0.5 * (Q + Q.T)


def random_instance(seed: int, n: int, kind: str, admm: bool = False
                    ) -> Union[CompositeProblem, AdmmProblem]:
    """Reproducible random instance.

    Parameters
    ----------
    seed : int
    n : int
        Dimension, at most 100.
    kind : str
        One of :data:`RANDOM_KINDS`:

        ``convex-quadratic+l1``
            Spectrum in ``[0.1, 1]``, ``g = w ||.||_1``.
        ``nonconvex-quadratic+l1``
            Spectrum in ``[-1, 1]`` with minimum ``-u``, ``u ~ U(0.1, 1)``,
            ``g = w ||.||_1`` restricted to the box ``||.||_inf <= 2``.
        ``quadratic+l0``
            Spectrum in ``[0.1, 1]``, ``g = w ||.||_0``.
        ``quadratic+finite-set``
            Spectrum in ``[-0.5, 1]``, ``g`` the indicator of five Gaussian
            points.
    admm : bool
        Return an :class:`AdmmProblem` with a well-conditioned invertible
        ``A`` (singular values in ``[1, 2]``), ``B = -I`` and random ``b``.

    Returns
    -------
    CompositeProblem or AdmmProblem
    """
    if kind not in RANDOM_KINDS:
        raise PreconditionError(f"unknown kind {kind!r}; expected one of {RANDOM_KINDS}")
    if not 1 <= n <= 100:
        raise PreconditionError("n must lie in [1, 100]")
    rng = np.random.default_rng(seed)
    scale = float(rng.uniform(0.5, 2.0))
    if kind == "nonconvex-quadratic+l1":
        lo = -float(rng.uniform(0.1, 1.0)) * scale
    elif kind == "quadratic+finite-set":
        lo = -0.5 * scale
    else:
        lo = 0.1 * scale
    Q = random_quadratic(rng, n, lo, scale) if n > 1 else np.array([[lo if lo < 0 else scale]])
    q = rng.standard_normal(n)
    w = float(rng.uniform(0.1, 1.0))
    if kind == "convex-quadratic+l1":
        g = catalog.one_norm(w, n)
    elif kind == "nonconvex-quadratic+l1":
        g = catalog.one_norm(w, n, bound=2.0)
    elif kind == "quadratic+l0":
        g = catalog.zero_norm(w, n)
    else:
        g = catalog.finite_set(rng.standard_normal((5, n)))
    if not admm:
        return CompositeProblem(catalog.quadratic(Q, q, name=kind.split("+")[0]), g)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = (U * rng.uniform(1.0, 2.0, n)) @ V.T
    b = rng.standard_normal(n)
    return quadratic_admm(Q, q, A, g, b=b)


def bound_curve(lam: float, L: float, sigma_grid: Sequence[float]) -> list:
    """Certified stepsize suprema over a grid of hypoconvexity moduli.

    Returns
    -------
    list of dict
        Keys ``sigma``, ``gamma_sup`` (supremum of the DRS interval, ``nan``
        when empty) and ``admm_gamma_sup`` (``1/beta_lo`` of the ADMM
        certificate with ``||A|| = 1``; ``nan`` when empty or ``lam > 2``).
    """
    if not 0 < lam < 4:
        raise PreconditionError("lambda must lie in (0, 4)")
    rows = []
    for sig in sigma_grid:
        sig = float(sig)
        if not -L <= sig <= L:
            raise PreconditionError("sigma_grid must lie in [-L, L]")
        cert = stepsize_certificate(L, sig, lam)
        gsup = cert.gamma_hi if cert.feasible else math.nan
        asup = math.nan
        if lam <= 2:
            pc = penalty_certificate(L, sig, lam)
            if pc.feasible:
                asup = pc.gamma_sup
        rows.append({"sigma": sig, "gamma_sup": gsup, "admm_gamma_sup": asup})
    return rows


def _bisect(pred, lo: float, hi: float, tol: float) -> float:
    # pred(lo) is True, pred(hi) is False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gamma_transition(L: float = 1.0, sigma: float = -0.5, t: float = 2.0, lam: float = 1.0,
                     s0=3.0, K: int = 2000, tol: float = 1e-4) -> float:
    """Bisect the convergence/stall transition over ``gamma`` on the gamma fixture.

    The search interval is ``(0, 2/L]``, capped below ``1/[sigma]_-`` so
    that the proximal map stays defined; when the cap binds and every
    stepsize converges, the cap is returned.
    """
    hi = 2.0 / L
    if sigma < 0:
        hi = min(hi, (1.0 - 1e-9) / -sigma)

    def converges(g):
        return not gamma_necessity_experiment(L, sigma, t, g, lam, s0, K).stalled

    lo = 1e-3 / L
    if not converges(lo):
        return lo
    if converges(hi):
        return hi
    return _bisect(converges, lo, hi, tol)


def lambda_transition(L: float = 1.0, sigma: float = 0.0, p: float = 2.0, gamma: float = 0.5,
                      s0: Optional[float] = None, K: int = 200, tol: float = 1e-5) -> float:
    """Bisect the contracting/non-contracting transition over ``lam`` on the lambda fixture."""

    def contracts(lam):
        return lambda_necessity_experiment(L, sigma, p, gamma, lam, s0, K).contracting

    return _bisect(contracts, 1e-3, 4.0 - 1e-9, tol)


SWEEP_HEADER = ("sigma_over_L", "lambda", "gamma_sup_certified", "gamma_transition_empirical",
                "admm_gamma_sup")


def sweep_rows(lams: Sequence[float], ratios: Sequence[float], L: float = 1.0,
               empirical: bool = False, K: int = 2000) -> list:
    """Rows of the sweep summary, one per ``(sigma/L, lambda)`` cell.

    ``gamma_sup_certified`` and ``admm_gamma_sup`` are in units of ``1/L``
    when ``L = 1``; ``gamma_transition_empirical`` is the bisected stall
    transition of the gamma fixture (``nan`` unless ``empirical``).
    """
    rows = []
    for lam in lams:
        curve = bound_curve(lam, L, [r * L for r in ratios])
        for r, c in zip(ratios, curve):
            emp = math.nan
            if empirical:
                emp = gamma_transition(L, r * L, 2.0, lam, K=K)
            rows.append((float(r), float(lam), c["gamma_sup"], emp, c["admm_gamma_sup"]))
    return rows
