"""Relaxed ADMM for ``min f(x) + g(z)`` subject to ``Ax + Bz = b``.

One step with penalty ``beta`` and relaxation ``lam`` performs, in order,

    y_half = y - beta (1 - lam)(Ax + Bz - b)
    x+     = argmin_x L_beta(x, z, y_half)
    y+     = y_half + beta (Ax+ + Bz - b)
    z+     = argmin_z L_beta(x+, z, y+)

Under the change of variables ``s = Ax - y/beta``, ``u = Ax``,
``v = b - Bz`` and ``gamma = 1/beta`` the iterates are those of DRS on
``A|>f`` and ``B|>g(b - .)``, so the DRS certificates transfer.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .core import (
    CompositeProblem,
    InnerSolverError,
    InvariantViolation,
    PreconditionError,
    ProxableOracle,
    StepsizeInfeasibleError,
    as_point,
)
from .core.catalog import quadratic
from .drs.certificate import StepsizeCertificate, stepsize_certificate
from .envelope import augmented_lagrangian
from .trace import IterationTrace

__all__ = [
    "AdmmProblem",
    "QuadraticAdmmProblem",
    "quadratic_admm",
    "AdmmState",
    "admm_step",
    "admm_to_drs_vars",
    "PenaltyCertificate",
    "penalty_certificate",
    "run_admm",
    "KktResiduals",
    "kkt_residuals",
    "x_solver_stationarity",
    "run_adaptive_admm",
]

DECREASE_SLACK = 1e-10
ADAPTIVE_SLACK = 1e-12
SURJECTIVITY_TOL = 1e-10


@dataclass(frozen=True)
class AdmmProblem:
    """Two-block problem with user-supplied subproblem solvers.

    Parameters
    ----------
    x_solver : callable
        ``x_solver(z, y, beta)`` returns a minimizer of ``L_beta(., z, y)``.
    z_solver : callable
        ``z_solver(x, y, beta)`` returns a minimizer of ``L_beta(x, ., y)``.
    f_value, g_value : callable
        Value oracles of ``f`` and ``g``.
    A, B : ndarray
        Constraint matrices of shapes ``(p, m)`` and ``(p, n)``; ``A`` must
        be surjective.
    b : ndarray
        Right-hand side of length ``p``.
    L, sigma : float
        Smoothness and hypoconvexity moduli of the image function ``A|>f``.
    f_grad : callable, optional
        Gradient of ``f`` when it is smooth, used by the KKT audit.
    A_inv : ndarray, optional
        Inverse of a square ``A``; enables the lower-bound guard of the
        adaptive variant.
    """

    x_solver: Callable
    z_solver: Callable
    f_value: Callable
    g_value: Callable
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    L: float
    sigma: float
    f_grad: Optional[Callable] = None
    A_inv: Optional[np.ndarray] = None
    name: str = "admm"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        b = as_point(self.b)
        if A.shape[0] != B.shape[0] or A.shape[0] != b.size:
            raise PreconditionError(f"nonconformable A {A.shape}, B {B.shape}, b {b.shape}")
        sv = np.linalg.svd(A, compute_uv=False)
        if A.shape[0] > A.shape[1] or sv[A.shape[0] - 1] <= SURJECTIVITY_TOL:
            raise PreconditionError("A must be surjective (full row rank)")
        if not (self.L >= 0 and abs(self.sigma) <= self.L * (1 + 1e-12)):
            raise PreconditionError("need L >= 0 and |sigma| <= L")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)

    @property
    def shape(self) -> tuple:
        """``(p, m, n)``."""
        return self.A.shape[0], self.A.shape[1], self.B.shape[1]

    @property
    def norm_A(self) -> float:
        return float(np.linalg.norm(self.A, 2))

    @property
    def norm_B(self) -> float:
        return float(np.linalg.norm(self.B, 2))

    def residual(self, x, z) -> np.ndarray:
        return self.A @ as_point(x) + self.B @ as_point(z) - self.b

    def lagrangian(self, beta: float, x, z, y) -> float:
        return augmented_lagrangian(self.f_value(as_point(x)), self.g_value(as_point(z)), beta,
                                    x, z, y, self.A, self.B, self.b)

    def phi_primal(self, z) -> float:
        """``f(A^{-1}(b - Bz)) + g(z)``; requires ``A_inv``."""
        if self.A_inv is None:
            raise PreconditionError("phi_primal requires A_inv")
        z = as_point(z)
        gv = float(self.g_value(z))
        if gv == math.inf:
            return math.inf
        return float(self.f_value(self.A_inv @ (self.b - self.B @ z))) + gv


@dataclass(frozen=True)
class QuadraticAdmmProblem(AdmmProblem):
    """ADMM problem with ``f(x) = x'Qx/2 + q'x`` and a proximable ``g``."""

    Q: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    g: Optional[ProxableOracle] = None

    def to_composite(self) -> CompositeProblem:
        """The equivalent DRS problem ``A|>f + B|>g(b - .)``.

        Requires an invertible ``A`` and an invertible diagonal ``B``.
        """
        if self.A_inv is None:
            raise PreconditionError("to_composite requires an invertible A")
        d = _diagonal(self.B)
        if d is None or np.any(d == 0):
            raise PreconditionError("to_composite requires an invertible diagonal B")
        Ai = self.A_inv
        fhat = quadratic(Ai.T @ self.Q @ Ai, Ai.T @ self.q, name="A|>f")
        g, b = self.g, self.b

        def value(v):
            return g.value((b - np.asarray(v, dtype=np.float64)) / d)

        def prox(gamma, x):
            z = g.prox(_scaled_gamma(gamma, d), (b - as_point(x)) / d)
            return b - d * z

        ghat = ProxableOracle(value, prox, g.prox_threshold * float(np.min(d * d)), b.size,
                              "B|>g(b - .)")
        return CompositeProblem(fhat, ghat)


def _diagonal(B: np.ndarray) -> Optional[np.ndarray]:
    if B.shape[0] != B.shape[1]:
        return None
    d = np.diag(B).copy()
    return d if np.array_equal(B, np.diag(d)) else None


def _scaled_gamma(gamma, d: np.ndarray):
    g = gamma / (d * d)
    return float(g[0]) if np.all(g == g[0]) else g


def quadratic_admm(Q, q, A, g: ProxableOracle, B=None, b=None, L: Optional[float] = None,
                   sigma: Optional[float] = None) -> QuadraticAdmmProblem:
    """ADMM problem with quadratic ``f`` and exact subproblem solvers.

    The x-subproblem is the linear system
    ``(Q + beta A'A) x = -q - A'y - beta A'(Bz - b)`` solved by Cholesky.
    The z-subproblem requires a diagonal ``B = diag(d)`` and reduces to
    ``prox_{g, 1/(beta d^2)}(-(Ax - b + y/beta)/d)``.

    The moduli of ``A|>f`` are computed from ``A^{-T} Q A^{-1}`` when ``A``
    is invertible, from the convex transfer rule when ``Q`` is positive
    semidefinite, and must be given otherwise.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    Q = 0.5 * (Q + Q.T)
    m = Q.shape[0]
    q = np.zeros(m) if q is None else as_point(q)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    p = A.shape[0]
    B = -np.eye(p) if B is None else np.atleast_2d(np.asarray(B, dtype=np.float64))
    b = np.zeros(p) if b is None else as_point(b)
    d = _diagonal(B)
    if d is None or np.any(d == 0):
        raise PreconditionError("quadratic_admm ships a z-solver for invertible diagonal B only")
    A_inv = None
    if A.shape[0] == A.shape[1] and np.linalg.matrix_rank(A) == p:
        A_inv = np.linalg.inv(A)
        if L is None or sigma is None:
            ev = np.linalg.eigvalsh(0.5 * (A_inv.T @ Q @ A_inv + (A_inv.T @ Q @ A_inv).T))
            L = float(np.max(np.abs(ev))) if L is None else L
            sigma = float(ev[0]) if sigma is None else sigma
    if L is None or sigma is None:
        ev = np.linalg.eigvalsh(Q)
        if ev[0] < 0:
            raise PreconditionError("moduli of A|>f must be given for nonconvex f and non-invertible A")
        from .imagefn import image_constants
        L, sigma = image_constants("convex", float(ev[-1]), float(ev[0]), A)

    AtA = A.T @ A

    def x_solver(z, y, beta):
        M = Q + beta * AtA
        rhs = -q - A.T @ y - beta * (A.T @ (B @ z - b))
        try:
            fac = scipy.linalg.cho_factor(M)
        except np.linalg.LinAlgError:
            lam_min = float(np.linalg.eigvalsh(M)[0])
            raise InnerSolverError(
                f"x-subproblem not strongly convex at beta={beta}: smallest eigenvalue {lam_min:.3e}",
                lam_min) from None
        return scipy.linalg.cho_solve(fac, rhs)

    def z_solver(x, y, beta):
        w = -(A @ x - b + y / beta) / d
        return as_point(g.prox(_scaled_gamma(1.0 / beta, d), w))

    def f_value(x):
        x = as_point(x)
        return 0.5 * float(x @ Q @ x) + float(q @ x)

    return QuadraticAdmmProblem(x_solver, z_solver, f_value, g.value, A, B, b, float(L),
                                float(sigma), lambda x: Q @ as_point(x) + q, A_inv,
                                "quadratic+" + g.name, Q, q, g)


@dataclass(frozen=True)
class AdmmState:
    """ADMM iterate ``(x, z, y)`` with the half-updated multiplier."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    y_half: Optional[np.ndarray] = None
    beta: float = math.nan
    lam: float = math.nan

    @classmethod
    def initial(cls, x, z, y) -> "AdmmState":
        y = as_point(y)
        return cls(as_point(x), as_point(z), y, y.copy())


def admm_step(problem: AdmmProblem, beta: float, lam: float, state: AdmmState) -> AdmmState:
    """Apply the four updates ``y_half, x, y, z`` in this order.

    Raises
    ------
    InnerSolverError
        Propagated from a failing subproblem solver.
    """
    if not (beta > 0 and lam > 0):
        raise PreconditionError("beta and lambda must be positive")
    A, B, b = problem.A, problem.B, problem.b
    x, z, y = state.x, state.z, state.y
    y_half = y - beta * (1.0 - lam) * (A @ x + B @ z - b)
    x_new = as_point(problem.x_solver(z, y_half, beta))
    y_new = y_half + beta * (A @ x_new + B @ z - b)
    z_new = as_point(problem.z_solver(x_new, y_new, beta))
    return AdmmState(x_new, z_new, y_new, y_half, float(beta), float(lam))


def admm_to_drs_vars(problem: AdmmProblem, state: AdmmState, beta: Optional[float] = None):
    """DRS variables ``(s, u, v) = (Ax - y/beta, Ax, b - Bz)`` of an ADMM state."""
    beta = state.beta if beta is None else beta
    Ax = problem.A @ state.x
    return Ax - state.y / beta, Ax, problem.b - problem.B @ state.z


@dataclass(frozen=True)
class PenaltyCertificate:
    """Certified penalty range of ADMM.

    Attributes
    ----------
    beta_lo, beta_hi : float
        Open interval of certified penalties (``beta_hi`` may be ``inf``).
    lam : float
    L : float
        Smoothness modulus of ``A|>f``.
    sigma : float
        Hypoconvexity modulus of ``A|>f`` used by the certificate.
    drs : StepsizeCertificate
        The matching DRS certificate in ``gamma = 1/beta``.
    """

    beta_lo: float
    beta_hi: float
    lam: float
    L: float
    sigma: float
    drs: StepsizeCertificate

    @property
    def feasible(self) -> bool:
        return self.drs.feasible

    @property
    def gamma_sup(self) -> float:
        """``1/beta_lo``."""
        return self.drs.gamma_hi

    def contains(self, beta: float) -> bool:
        return beta > 0 and self.drs.contains(1.0 / beta)

    def c(self, beta: float) -> float:
        """Decrease constant at ``beta`` (the DRS constant at ``gamma = 1/beta``)."""
        if not self.contains(beta):
            raise StepsizeInfeasibleError(f"beta={beta} outside ({self.beta_lo}, {self.beta_hi})")
        return self.drs.c(1.0 / beta)


def penalty_certificate(L: float, sigma: float, lam: float, norm_A: float = 1.0) -> PenaltyCertificate:
    """Certified penalties for relaxed ADMM.

    Parameters
    ----------
    L : float
        Smoothness modulus of ``A|>f``, positive.
    sigma : float
        A positive value is the strong-convexity modulus of ``f`` and is
        transferred to ``A|>f`` as ``sigma / norm_A^2``; a nonpositive
        value is used as the hypoconvexity modulus of ``A|>f`` directly.
    lam : float
        Relaxation in ``(0, 2]``.
    norm_A : float
        Spectral norm of ``A``.

    Returns
    -------
    PenaltyCertificate
        ``beta`` ranges over ``(1/gamma_hi, 1/gamma_lo)`` of the DRS
        certificate; for ``lam = 2`` without strong convexity it is empty.
    """
    if not L > 0:
        raise PreconditionError("L must be positive")
    if not (0.0 < lam <= 2.0):
        raise PreconditionError("ADMM certificates need lambda in (0, 2]")
    sig = sigma / norm_A ** 2 if sigma > 0 else sigma
    sig = max(min(sig, L), -L)
    cert = stepsize_certificate(L, sig, lam)
    if not cert.feasible:
        return PenaltyCertificate(math.inf, math.inf, lam, L, sig, cert)
    lo = 1.0 / cert.gamma_hi
    hi = math.inf if cert.gamma_lo == 0 else 1.0 / cert.gamma_lo
    return PenaltyCertificate(lo, hi, lam, L, sig, cert)


def _converged(problem: AdmmProblem, r: np.ndarray, tol: float) -> bool:
    return float(np.linalg.norm(r)) <= tol * max(1.0, float(np.linalg.norm(problem.b)))


def _same(a: AdmmState, b: AdmmState) -> bool:
    return all(np.allclose(p, q, rtol=1e-14, atol=1e-300)
               for p, q in ((a.x, b.x), (a.z, b.z), (a.y, b.y)))


def run_admm(problem: AdmmProblem, beta: float, lam: float, state0: AdmmState, *,
             tol: float = 1e-8, max_iter: int = 100_000, unsafe: bool = False) -> IterationTrace:
    """Run relaxed ADMM and record the augmented Lagrangian.

    Row ``k`` holds ``||Ax^k + Bz^k - b||`` and ``L_beta(x^k, z^k, y^k)``
    of the state after ``k + 1`` steps.  With a certified ``(beta, lam)``
    the decrease
    ``L_beta^{k+1} <= L_beta^k - c lam^2/(1 + L/beta)^2 ||Ax^k + Bz^k - b||^2``
    is asserted with relative slack 1e-10.  A starting state that is a
    feasible fixed point returns immediately with zero iterations.

    Raises
    ------
    StepsizeInfeasibleError
        Uncertified ``(beta, lam)`` without ``unsafe``.
    InvariantViolation
        Certified decrease failure.
    """
    coef = None
    c = math.nan
    if not unsafe:
        if lam > 2:
            raise StepsizeInfeasibleError("lambda > 2 is only available in unsafe mode")
        cert = penalty_certificate(problem.L, problem.sigma, lam)
        if not cert.contains(beta):
            raise StepsizeInfeasibleError(
                f"beta={beta} not certified: range ({cert.beta_lo}, {cert.beta_hi})")
        c = cert.c(beta)
        coef = c * lam * lam / (1.0 + problem.L / beta) ** 2
    trace = IterationTrace(meta={"algorithm": "admm", "beta": beta, "gamma": 1.0 / beta,
                                 "lam": lam, "L": problem.L, "sigma": problem.sigma, "c": c,
                                 "certified": not unsafe, "doublings": 0})
    state = state0
    trace.reason = "max_iter"
    if _converged(problem, problem.residual(state.x, state.z), tol):
        nxt = admm_step(problem, beta, lam, state)
        if _same(nxt, state):
            trace.reason = "converged"
            trace.final = {"state": state}
            return trace
    t0 = time.perf_counter_ns()
    prev_merit = prev_r = None
    for k in range(int(max_iter)):
        state = admm_step(problem, beta, lam, state)
        r = problem.residual(state.x, state.z)
        merit = problem.lagrangian(beta, state.x, state.z, state.y)
        trace.append(k, np.linalg.norm(r), merit, 1.0 / beta, time.perf_counter_ns() - t0)
        if coef is not None and prev_merit is not None:
            need = coef * float(prev_r @ prev_r)
            if prev_merit - merit < need - DECREASE_SLACK * max(1.0, abs(prev_merit)):
                trace.reason = "violation"
                raise InvariantViolation(f"certified Lagrangian decrease failed at k={k}",
                                         {"k": k, "previous": prev_merit, "current": merit,
                                          "required": need, "trace": trace})
        if _converged(problem, r, tol):
            trace.reason = "converged"
            break
        prev_merit, prev_r = merit, r
    trace.final = {"state": state}
    return trace


@dataclass(frozen=True)
class KktResiduals:
    """Primal residual, f-stationarity residual and a bound on the g-stationarity residual."""

    primal: float
    dual_f: float
    dual_g_bound: float
    dual_f_structural: bool = False

    def __iter__(self):
        return iter((self.primal, self.dual_f, self.dual_g_bound))


def kkt_residuals(problem: AdmmProblem, state: AdmmState) -> KktResiduals:
    """KKT diagnostics of a state produced by :func:`admm_step`.

    ``dual_f = ||grad f(x) + A'y||`` when a gradient is available;
    otherwise it is zero by construction of the x-update and flagged
    as structural.  ``dual_g_bound = beta ||B|| primal`` bounds the
    distance of ``-B'y`` to the subdifferential of ``g`` at ``z``.
    """
    primal = float(np.linalg.norm(problem.residual(state.x, state.z)))
    if problem.f_grad is not None:
        dual_f = float(np.linalg.norm(problem.f_grad(state.x) + problem.A.T @ state.y))
        structural = False
    else:
        dual_f, structural = 0.0, True
    return KktResiduals(primal, dual_f, state.beta * problem.norm_B * primal, structural)


def x_solver_stationarity(problem: AdmmProblem, z, y, beta: float) -> float:
    """Gradient norm of the x-subproblem at the solver output (requires ``f_grad``)."""
    if problem.f_grad is None:
        raise PreconditionError("x_solver_stationarity requires f_grad")
    x = as_point(problem.x_solver(as_point(z), as_point(y), beta))
    r = problem.residual(x, z)
    return float(np.linalg.norm(problem.f_grad(x) + problem.A.T @ (as_point(y) + beta * r)))


def _simple_penalty_c(beta: float, L: float, convex: bool) -> float:
    # lambda = 1 rows of the penalty bounds
    if convex:
        return beta / 2.0 - L * max(L / beta - 0.5, 0.0)
    return beta / 2.0 - L


def run_adaptive_admm(problem: AdmmProblem, L_init: float, state0: AdmmState,
                      beta_init: Optional[float] = None, phi_lb: Optional[float] = None, *,
                      convex: bool = False, tol: float = 1e-8, max_iter: int = 100_000,
                      max_doublings: int = 64) -> IterationTrace:
    """ADMM (``lam = 1``) with a penalty doubled on failed decrease tests.

    With the estimate ``L = L_init`` the constant is
    ``c = beta/2 - L [L/beta - 1/2]_+`` (convex ``f``) or
    ``c = beta/2 - L``; ``beta_init`` defaults to twice the smallest
    penalty allowed by these formulas.  Each step must satisfy
    ``L_{k+1} <= L_k - c/(1 + L/beta)^2 ||Ax^k + Bz^k - b||^2`` and a
    lower-bound guard: ``f(A^{-1}(b - Bz)) + g(z) <= L_{k+1}`` when
    ``problem.A_inv`` is available, else ``phi_lb <= L_{k+1}`` when
    ``phi_lb`` is given, else no guard (reported in ``meta["guard"]``).
    On failure ``beta, c, L <- 2 beta, 2c, 2L`` and step ``k`` is
    recomputed from the stored state ``k - 1``.  A failing x-subproblem
    solver counts as a failed test.

    Raises
    ------
    PreconditionError
        If ``beta_init`` gives ``c <= 0`` for ``L_init``.
    InvariantViolation
        After more than ``max_doublings`` doublings.
    """
    if not L_init > 0:
        raise PreconditionError("L_init must be positive")
    L = float(L_init)
    beta = (2.0 * (L if convex else 2.0 * L)) if beta_init is None else float(beta_init)
    c = _simple_penalty_c(beta, L, convex)
    if not c > 0:
        raise PreconditionError(f"beta_init={beta} is not admissible for L_init={L_init}")
    lam = 1.0
    guard = "inverse" if problem.A_inv is not None else ("lower-bound" if phi_lb is not None else "none")
    doublings = 0
    where = []

    def double(k):
        nonlocal beta, c, L, doublings
        beta, c, L = 2.0 * beta, 2.0 * c, 2.0 * L
        doublings += 1
        where.append(k)
        if doublings > max_doublings:
            raise InvariantViolation(f"more than {max_doublings} penalty doublings", {"beta": beta})

    def guard_ok(st: AdmmState, merit: float) -> bool:
        tol_g = ADAPTIVE_SLACK * max(1.0, abs(merit))
        if guard == "inverse":
            return problem.phi_primal(st.z) <= merit + tol_g
        if guard == "lower-bound":
            return phi_lb <= merit + tol_g
        return True

    def step(st: AdmmState) -> Optional[AdmmState]:
        try:
            return admm_step(problem, beta, lam, st)
        except InnerSolverError:
            return None

    trace = IterationTrace(meta={"algorithm": "adaptive-admm", "lam": lam, "L_init": L_init,
                                 "beta_init": beta, "guard": guard})
    t0 = time.perf_counter_ns()
    prev = state0
    while (cur := step(prev)) is None:
        double(0)
    L_cur = problem.lagrangian(beta, cur.x, cur.z, cur.y)
    r_cur = problem.residual(cur.x, cur.z)
    trace.append(0, np.linalg.norm(r_cur), L_cur, 1.0 / beta, time.perf_counter_ns() - t0)
    trace.reason = "converged" if _converged(problem, r_cur, tol) else "max_iter"
    k = 0
    while trace.reason != "converged" and k + 1 < max_iter:
        new = step(cur)
        ok = new is not None
        if ok:
            L_new = problem.lagrangian(beta, new.x, new.z, new.y)
            need = c * lam * lam / (1.0 + L / beta) ** 2 * float(r_cur @ r_cur)
            ok = (L_new <= L_cur - need + ADAPTIVE_SLACK * max(1.0, abs(L_cur))
                  and guard_ok(new, L_new))
        if not ok:
            double(k + 1)
            while (cur := step(prev)) is None:
                double(k + 1)
            L_cur = problem.lagrangian(beta, cur.x, cur.z, cur.y)
            r_cur = problem.residual(cur.x, cur.z)
            trace.records.pop()
            trace.append(k, np.linalg.norm(r_cur), L_cur, 1.0 / beta, time.perf_counter_ns() - t0)
            continue
        k += 1
        r_new = problem.residual(new.x, new.z)
        trace.append(k, np.linalg.norm(r_new), L_new, 1.0 / beta, time.perf_counter_ns() - t0)
        prev, cur, L_cur, r_cur = cur, new, L_new, r_new
        if _converged(problem, r_new, tol):
            trace.reason = "converged"
    trace.meta.update({"beta": beta, "gamma": 1.0 / beta, "c": c, "L": L, "doublings": doublings,
                       "doubling_iterations": where, "certified": True})
    trace.final = {"state": cur}
    return trace
