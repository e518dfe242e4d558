"""Function oracles, error types and the basic proximal operations.

A composite problem ``min f(x) + g(x)`` is described by a smooth oracle
for ``f`` (value, gradient, Lipschitz modulus ``L`` of the gradient and
hypoconvexity modulus ``sigma``) and a proximable oracle for ``g``
(extended-real value and a proximal mapping).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DrenvError",
    "StepsizeInfeasibleError",
    "InnerSolverError",
    "InvariantViolation",
    "PreconditionError",
    "SmoothOracle",
    "ProxableOracle",
    "CompositeProblem",
    "as_point",
    "neg_part",
    "pos_part",
    "inv_neg_part",
    "eval_prox",
    "moreau_envelope",
    "smooth_prox",
]

INNER_TOL = 1e-12
INNER_MAX_ITER = 10_000


class DrenvError(Exception):
    """Base class of all errors raised by the package."""


class StepsizeInfeasibleError(DrenvError, ValueError):
    """A stepsize or relaxation lies outside the range where an operation is defined."""


class InnerSolverError(DrenvError, RuntimeError):
    """An inner iterative solver failed to reach its tolerance.

    Attributes
    ----------
    residual : float
        Last residual norm reached by the solver.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message: str, residual: float = math.nan, iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InvariantViolation(DrenvError, AssertionError):
    """A certified invariant failed at run time.

    Attributes
    ----------
    diagnostics : dict
        Values that characterize the violation.
    """

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class PreconditionError(DrenvError, ValueError):
    """Arguments violate the documented precondition of an operation."""


def as_point(x) -> np.ndarray:
    """Return ``x`` as a 1-D float64 array (scalars become length-1 arrays)."""
    return np.atleast_1d(np.asarray(x, dtype=np.float64))


def neg_part(t: float) -> float:
    """Negative part ``max(-t, 0)``."""
    return max(-float(t), 0.0)


def pos_part(t: float) -> float:
    """Positive part ``max(t, 0)``."""
    return max(float(t), 0.0)


def inv_neg_part(t: float) -> float:
    """Return ``1 / max(-t, 0)`` with the convention ``1/0 = inf``."""
    m = neg_part(t)
    return math.inf if m == 0.0 else 1.0 / m


@dataclass(frozen=True)
class SmoothOracle:
    """Oracle of an L-smooth, sigma-hypoconvex function.

    Parameters
    ----------
    value : callable
        ``value(x) -> float``.  Catalog entries also accept a batch of
        points stacked along the leading axis.
    grad : callable
        ``grad(x) -> ndarray`` of the same shape as ``x``.
    L : float
        Lipschitz modulus of the gradient, ``L >= 0``.
    sigma : float
        Hypoconvexity modulus, ``|sigma| <= L``.  Negative values mean
        weak convexity, positive values strong convexity.
    dim : int
        Dimension of the domain.
    prox : callable, optional
        Closed-form proximal mapping ``prox(gamma, s)``.  When absent the
        proximal point is computed by a damped fixed-point iteration.
    name : str
        Label used in reports.
    """

    value: Callable
    grad: Callable
    L: float
    sigma: float
    dim: int = 1
    prox: Optional[Callable] = None
    name: str = "smooth"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.L >= 0.0:
            raise PreconditionError(f"L must be nonnegative, got {self.L}")
        if abs(self.sigma) > self.L * (1 + 1e-12) + 1e-300:
            raise PreconditionError(f"|sigma| must not exceed L, got sigma={self.sigma}, L={self.L}")
        if int(self.dim) < 1:
            raise PreconditionError("dim must be a positive integer")

    def __call__(self, x) -> float:
        return self.value(x)

    @property
    def is_affine(self) -> bool:
        return self.L == 0.0


@dataclass(frozen=True)
class ProxableOracle:
    """Oracle of a proper lsc function with an explicit proximal mapping.

    Parameters
    ----------
    value : callable
        ``value(x) -> float`` returning ``inf`` outside the domain.
    prox : callable
        ``prox(gamma, x) -> ndarray`` returning one minimizer of
        ``g(w) + ||w - x||^2 / (2 gamma)``.  Ties are broken by a fixed
        rule so the mapping is deterministic.
    prox_threshold : float
        Supremum of the stepsizes for which the proximal mapping is well
        defined (``inf`` for functions bounded below).
    dim : int
        Dimension of the domain.
    name : str
        Label used in reports.
    """

    value: Callable
    prox: Callable
    prox_threshold: float = math.inf
    dim: int = 1
    name: str = "proxable"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.prox_threshold > 0.0:
            raise PreconditionError("prox_threshold must be positive")
        if int(self.dim) < 1:
            raise PreconditionError("dim must be a positive integer")

    def __call__(self, x) -> float:
        return self.value(x)


@dataclass(frozen=True)
class CompositeProblem:
    """The problem ``minimize phi(x) = f(x) + g(x)``.

    Parameters
    ----------
    f : SmoothOracle
    g : ProxableOracle
    """

    f: SmoothOracle
    g: ProxableOracle

    def __post_init__(self):
        if self.f.dim != self.g.dim:
            raise PreconditionError(f"dimension mismatch: f has {self.f.dim}, g has {self.g.dim}")

    @property
    def dim(self) -> int:
        return self.f.dim

    def phi(self, x) -> float:
        """Cost ``f(x) + g(x)``; ``inf`` outside ``dom g``."""
        gv = float(self.g.value(x))
        if gv == math.inf:
            return math.inf
        return float(self.f.value(x)) + gv


def eval_prox(g: ProxableOracle, gamma: float, x) -> np.ndarray:
    """Evaluate the proximal mapping of ``g``.

    Parameters
    ----------
    g : ProxableOracle
    gamma : float
        Stepsize, ``0 < gamma < g.prox_threshold``.
    x : array_like

    Returns
    -------
    ndarray
        A minimizer of ``w -> g(w) + ||w - x||^2 / (2 gamma)``.

    Raises
    ------
    StepsizeInfeasibleError
        If ``gamma`` is outside the prox-bounded range of ``g``.
    """
    gamma = float(gamma)
    if not (gamma > 0.0 and gamma < g.prox_threshold):
        raise StepsizeInfeasibleError(
            f"gamma={gamma} outside (0, {g.prox_threshold}) for {g.name}")
    return as_point(g.prox(gamma, as_point(x)))


def moreau_envelope(g: ProxableOracle, gamma: float, x) -> float:
    """Moreau envelope ``g(p) + ||p - x||^2 / (2 gamma)`` with ``p = prox(x)``."""
    x = as_point(x)
    p = eval_prox(g, gamma, x)
    d = p - x
    return float(g.value(p)) + float(d @ d) / (2.0 * gamma)


def smooth_prox(f: SmoothOracle, gamma: float, s, tol: float = INNER_TOL,
                max_iter: int = INNER_MAX_ITER) -> np.ndarray:
    """Proximal point of a smooth function.

    Returns the unique ``u`` with ``s = u + gamma * grad f(u)``.  The
    closed form is used when the oracle provides one; otherwise the
    damped fixed-point iteration
    ``u <- u - (u + gamma grad f(u) - s) / (1 + gamma L)`` is run, which
    contracts with factor ``1 - (1 + gamma sigma) / (1 + gamma L)``.

    Parameters
    ----------
    f : SmoothOracle
    gamma : float
        Stepsize, ``0 < gamma < 1/[sigma]_-``.
    s : array_like
    tol : float
        Inner tolerance on ``||u + gamma grad f(u) - s||``, scaled by
        ``max(1, ||s||)`` so that it stays attainable in floating point.
    max_iter : int
        Inner iteration budget.

    Raises
    ------
    StepsizeInfeasibleError
        If ``gamma >= 1/[sigma]_-``, where the proximal mapping may be
        set-valued.
    InnerSolverError
        If the fixed-point iteration does not reach ``tol``.
    """
    gamma = float(gamma)
    if not (gamma > 0.0 and gamma < inv_neg_part(f.sigma)):
        raise StepsizeInfeasibleError(
            f"gamma={gamma} outside (0, 1/[sigma]_-) = (0, {inv_neg_part(f.sigma)}) for {f.name}")
    s = as_point(s)
    if f.prox is not None:
        return as_point(f.prox(gamma, s))
    damp = 1.0 + gamma * f.L
    scale = max(1.0, float(np.linalg.norm(s)))
    u = s.copy()
    res = math.inf
    for it in range(max_iter + 1):
        r = u + gamma * np.asarray(f.grad(u), dtype=np.float64) - s
        res = float(np.linalg.norm(r))
        if res <= tol * scale:
            return u
        u = u - r / damp
    raise InnerSolverError(
        f"smooth_prox did not converge for {f.name}: residual {res:.3e}", res, max_iter)
