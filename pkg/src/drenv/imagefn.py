"""Image functions ``(C|>h)(s) = inf {h(x) : Cx = s}`` and their brute-force audits.

The lattice oracle parameterizes the fibre ``{x : Cx = s}`` as
``x0 + N t`` with ``x0 = pinv(C) s`` and ``N`` an orthonormal kernel
basis, minimizes over a lattice in ``t`` and optionally polishes the best
lattice point with a box-constrained local solver.  These are test-time
tools, limited to ``n <= 3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .core import PreconditionError, as_point
from .core.lattice import grid, lattice_minimize

__all__ = [
    "ImageFunction",
    "ImageSearch",
    "image_search",
    "image_value",
    "ProxInclusionReport",
    "image_prox_inclusion_check",
    "SubgradientReport",
    "image_subgradient_check",
    "image_constants",
    "strong_convexity_transfer_check",
    "CP2PReport",
    "cp2p_check",
    "nlsc_function",
]


def _batch_values(h: Callable, pts: np.ndarray) -> np.ndarray:
    try:
        v = np.asarray(h(pts), dtype=np.float64)
        if v.shape == (pts.shape[0],):
            return v
    except Exception:
        pass
    return np.array([float(h(p)) for p in pts])


@dataclass(frozen=True)
class ImageFunction:
    """The image of ``h`` under a linear map ``C``.

    Parameters
    ----------
    h : callable
        Value oracle on ``R^n`` (vectorized over a leading batch axis
        when possible).
    C : ndarray
        Nonzero ``(p, n)`` matrix.
    mode : {"lattice", "closed-form"}
        ``"closed-form"`` evaluates ``closed_form(s)``.
    closed_form : callable, optional
    radius, resolution : float
        Lattice box half-width and spacing in the kernel coordinates.
    polish : bool
        Refine the best lattice point with L-BFGS-B inside the box.
    """

    h: Callable
    C: np.ndarray
    mode: str = "lattice"
    closed_form: Optional[Callable] = None
    radius: float = 10.0
    resolution: float = 1e-3
    polish: bool = False

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        if not np.any(C):
            raise PreconditionError("C must be nonzero")
        if self.mode == "lattice" and C.shape[1] > 3:
            raise PreconditionError("lattice mode requires n <= 3")
        if self.mode == "closed-form" and self.closed_form is None:
            raise PreconditionError("closed-form mode needs closed_form")
        if self.mode not in ("lattice", "closed-form"):
            raise PreconditionError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "_pinv", np.linalg.pinv(C))
        object.__setattr__(self, "_kernel", scipy.linalg.null_space(C))

    def __call__(self, s) -> float:
        return image_value(self, s)


@dataclass(frozen=True)
class ImageSearch:
    """Value and minimizer found for one ``s``.

    Attributes
    ----------
    value : float
        ``inf`` when ``s`` is not in the range of ``C``.
    x : ndarray or None
    escaping : bool
        The lattice minimizer lies on the boundary shell and beats every
        interior point: the infimum over the whole fibre may be lower and
        unattained.
    """

    value: float
    x: Optional[np.ndarray]
    escaping: bool


def image_search(img: ImageFunction, s) -> ImageSearch:
    """Minimize ``h`` over the fibre ``{x : Cx = s}``."""
    s = as_point(s)
    if img.mode == "closed-form":
        return ImageSearch(float(img.closed_form(s)), None, False)
    x0 = img._pinv @ s
    if np.linalg.norm(img.C @ x0 - s) > 1e-9 * max(1.0, float(np.linalg.norm(s))):
        return ImageSearch(math.inf, None, False)
    N = img._kernel
    if N.shape[1] == 0:
        return ImageSearch(float(img.h(x0)), x0, False)

    def obj(T):
        return _batch_values(img.h, x0 + T @ N.T)

    res = lattice_minimize(obj, np.zeros(N.shape[1]), img.radius, img.resolution)
    t, val = res.x, res.value
    if img.polish and np.isfinite(val):
        bounds = [(-img.radius, img.radius)] * N.shape[1]
        out = scipy.optimize.minimize(lambda tt: float(img.h(x0 + N @ tt)), t, method="L-BFGS-B",
                                      bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-12})
        if out.fun < val:
            t, val = out.x, float(out.fun)
    return ImageSearch(val, x0 + N @ t, res.on_boundary)


def image_value(img: ImageFunction, s) -> float:
    """``inf {h(x) : Cx = s}`` (``inf`` outside the range of ``C``)."""
    return image_search(img, s).value


@dataclass(frozen=True)
class ProxInclusionReport:
    """Outcome of the proximal inclusion and exactness audit.

    Attributes
    ----------
    x_beta : ndarray
        Lattice minimizer of ``h + beta/2 ||C . - s_bar||^2``.
    s_beta : ndarray
        ``C x_beta``.
    objective_gap : float
        ``F(s_beta) - min_s F(s)`` over the s-lattice, where
        ``F = C|>h + beta/2 ||. - s_bar||^2``; the inclusion holds when it
        is not positive beyond the tolerance.
    exactness_gap : float
        ``|C|>h(s_beta) - h(x_beta)|``.
    tol : float
    """

    x_beta: np.ndarray
    s_beta: np.ndarray
    objective_gap: float
    exactness_gap: float
    tol: float

    @property
    def inclusion_holds(self) -> bool:
        return self.objective_gap <= self.tol

    @property
    def exact(self) -> bool:
        return self.exactness_gap <= self.tol


def image_prox_inclusion_check(h: Callable, C, beta: float, s_bar, radius: float = 10.0,
                               resolution: float = 1e-3, s_radius: float = 3.0,
                               s_resolution: float = 1e-2, tol: Optional[float] = None
                               ) -> ProxInclusionReport:
    """Check that ``C x_beta`` minimizes ``C|>h + beta/2 ||. - s_bar||^2``.

    ``x_beta`` is found on a lattice in ``x``; the image function is then
    evaluated (lattice plus polish) on an s-lattice of radius ``s_radius``
    around ``s_bar`` and at ``C x_beta``.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    s_bar = as_point(s_bar)
    n = C.shape[1]

    def obj_x(X):
        r = X @ C.T - s_bar
        return _batch_values(h, X) + 0.5 * beta * np.sum(r * r, axis=1)

    xb = lattice_minimize(obj_x, np.zeros(n), radius, resolution)
    x_beta = xb.x
    if n <= 3:
        out = scipy.optimize.minimize(lambda x: float(obj_x(x[None, :])[0]), x_beta,
                                      method="L-BFGS-B", bounds=[(-radius, radius)] * n,
                                      options={"ftol": 1e-15, "gtol": 1e-12})
        if out.fun < float(obj_x(x_beta[None, :])[0]):
            x_beta = out.x
    s_beta = C @ x_beta
    img = ImageFunction(h, C, radius=radius, resolution=resolution, polish=True)

    def F(s):
        d = s - s_bar
        return image_value(img, s) + 0.5 * beta * float(d @ d)

    S = grid(s_bar, s_radius, s_resolution)
    best = min(F(s) for s in S)
    f_beta = F(s_beta)
    t = 10.0 * resolution if tol is None else tol
    return ProxInclusionReport(x_beta, s_beta, f_beta - best,
                               abs(image_value(img, s_beta) - float(h(x_beta))), t)


@dataclass(frozen=True)
class SubgradientReport:
    """Comparison of ``C' v_bar`` with ``grad h(x_bar)``."""

    x_bar: np.ndarray
    v_bar: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    error: float


def image_subgradient_check(h: Callable, grad_h: Callable, C, s_bar, v_bar=None,
                            radius: float = 10.0, resolution: float = 1e-3,
                            step: float = 1e-5) -> SubgradientReport:
    """Check ``C' v_bar = grad h(x_bar)`` with ``x_bar`` a fibre minimizer at ``s_bar``.

    When ``v_bar`` is omitted it is the central finite-difference gradient
    of the (polished) image function at ``s_bar``.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    s_bar = as_point(s_bar)
    img = ImageFunction(h, C, radius=radius, resolution=resolution, polish=True)
    x_bar = image_search(img, s_bar).x
    if v_bar is None:
        hh = step * max(1.0, float(np.linalg.norm(s_bar)))
        v = np.empty_like(s_bar)
        for i in range(s_bar.size):
            e = np.zeros_like(s_bar)
            e[i] = hh
            v[i] = (image_value(img, s_bar + e) - image_value(img, s_bar - e)) / (2 * hh)
        v_bar = v
    v_bar = as_point(v_bar)
    lhs = C.T @ v_bar
    rhs = as_point(grad_h(x_bar))
    return SubgradientReport(x_bar, v_bar, lhs, rhs, float(np.linalg.norm(lhs - rhs)))


def image_constants(case: str, L_f: float, sigma_f: float, A, M: Optional[float] = None):
    """Smoothness and hypoconvexity moduli of ``A|>f``.

    Parameters
    ----------
    case : {"invertible", "lipschitz-minimizers", "convex"}
        ``"invertible"``: square nonsingular ``A`` with ``M = 1/sigma_min(A)``.
        ``"lipschitz-minimizers"``: fibre minimizers ``M``-Lipschitz in ``s``.
        ``"convex"``: convex ``f`` (``sigma_f >= 0``).
    L_f, sigma_f : float
    A : ndarray
    M : float, optional
        Required for ``"lipschitz-minimizers"``.

    Returns
    -------
    (L, sigma) : tuple of float
        ``L_f M^2`` and ``sigma_f/||A||^2`` (``sigma_f >= 0``) or
        ``sigma_f M^2`` in the first two cases;
        ``L_f / sigma_+(A'A)`` and ``sigma_f/||A||^2`` in the convex case.

    Raises
    ------
    PreconditionError
        When the case precondition fails.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    nA2 = float(np.linalg.norm(A, 2)) ** 2
    if case == "invertible":
        if A.shape[0] != A.shape[1]:
            raise PreconditionError("invertible case needs a square A")
        smin = float(np.linalg.svd(A, compute_uv=False)[-1])
        if smin <= 1e-12 * max(1.0, math.sqrt(nA2)):
            raise PreconditionError("A is singular")
        M = 1.0 / smin
        case = "lipschitz-minimizers"
    if case == "lipschitz-minimizers":
        if M is None or not M > 0:
            raise PreconditionError("a positive Lipschitz modulus M is required")
        sig = sigma_f / nA2 if sigma_f >= 0 else sigma_f * M * M
        return L_f * M * M, sig
    if case == "convex":
        if sigma_f < 0:
            raise PreconditionError("convex case requires sigma_f >= 0")
        ev = np.linalg.eigvalsh(A.T @ A)
        pos = ev[ev > 1e-12 * max(1.0, ev[-1])]
        return L_f / float(pos[0]), sigma_f / nA2
    raise PreconditionError(f"unknown case {case!r}")


def strong_convexity_transfer_check(img: ImageFunction, sigma: float,
                                    pairs: Sequence) -> float:
    """Smallest midpoint slack of the ``sigma``-strong convexity inequality.

    For each pair ``(s1, s2)`` computes
    ``(F(s1) + F(s2))/2 - F((s1 + s2)/2) - sigma/8 ||s1 - s2||^2`` with
    ``F`` the image function; nonnegative values certify the bound.
    """
    worst = math.inf
    for s1, s2 in pairs:
        s1, s2 = as_point(s1), as_point(s2)
        d = s1 - s2
        slack = (0.5 * (image_value(img, s1) + image_value(img, s2))
                 - image_value(img, 0.5 * (s1 + s2)) - sigma / 8.0 * float(d @ d))
        worst = min(worst, slack)
    return worst


@dataclass(frozen=True)
class CP2PReport:
    """Lattice minima of the constrained and of the reduced formulation."""

    constrained_min: float
    reduced_min: float
    gap: float


def cp2p_check(f: Callable, g: Callable, A, B, b, radius: float = 10.0,
               resolution: float = 1e-3) -> CP2PReport:
    """Compare ``min f(x) + g(z) s.t. Ax + Bz = b`` with ``min A|>f(s) + B|>g(b - s)``.

    Both ``A`` and ``B`` must be square and invertible; the constrained
    problem is searched over ``x`` (``z = B^{-1}(b - Ax)``), the reduced
    one over ``s``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    b = as_point(b)
    Ai, Bi = np.linalg.inv(A), np.linalg.inv(B)

    def constrained(X):
        Z = (b - X @ A.T) @ Bi.T
        return _batch_values(f, X) + _batch_values(g, Z)

    def reduced(S):
        return _batch_values(f, S @ Ai.T) + _batch_values(g, (b - S) @ Bi.T)

    c1 = lattice_minimize(constrained, np.zeros(A.shape[1]), radius, resolution).value
    c2 = lattice_minimize(reduced, np.zeros(A.shape[0]), radius, resolution).value
    return CP2PReport(c1, c2, abs(c1 - c2))


def nlsc_function(points) -> np.ndarray:
    """Continuously differentiable ``g`` on ``R^2`` whose image under ``[1 0]`` is not lsc.

    ``g(x, y) = -|x|`` when ``|xy| >= 1`` and
    ``1 - q(|xy|)(1 + |x|)`` otherwise, with ``q(t) = (1 - cos(pi t))/2``.
    The image is ``1`` at ``s = 0`` and ``-|s|`` elsewhere.
    """
    P = np.asarray(points, dtype=np.float64)
    x, y = P[..., 0], P[..., 1]
    t = np.abs(x * y)
    q = 0.5 * (1.0 - np.cos(np.pi * np.minimum(t, 1.0)))
    v = np.where(t >= 1.0, -np.abs(x), 1.0 - q * (1.0 + np.abs(x)))
    return float(v) if v.ndim == 0 else v
