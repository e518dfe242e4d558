"""Built-in function catalog with closed-form gradients and proximal maps.

Every value oracle accepts a single point or a batch of points stacked
along the leading axes (the last axis is the coordinate axis), which the
lattice oracles rely on.  Proximal maps act on a single point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .oracles import (
    PreconditionError,
    ProxableOracle,
    SmoothOracle,
    as_point,
    inv_neg_part,
    smooth_prox,
)

__all__ = [
    "quadratic",
    "zero",
    "affine",
    "one_norm",
    "zero_norm",
    "finite_set",
    "box",
    "Ball",
    "Halfspace",
    "AffineSet",
    "WholeSpace",
    "ClosedSet",
    "half_sq_distance",
    "sq_distance_proxable",
    "set_indicator",
    "counterexample",
    "counterexample_prox",
    "as_proxable",
    "zero_prox",
    "from_config",
]

# membership tolerance for indicator values, relative to max(1, ||x||)
MEMBER_TOL = 1e-9


def _batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(1) if x.ndim == 0 else x


def _out(v):
    v = np.asarray(v, dtype=np.float64)
    return float(v) if v.ndim == 0 else v


# ---------------------------------------------------------------------------
# smooth functions


def quadratic(Q, q=None, c: float = 0.0, name: str = "quadratic") -> SmoothOracle:
    """Quadratic ``x'Qx/2 + q'x + c``.

    ``L`` is the largest eigenvalue magnitude of the symmetric part of
    ``Q`` and ``sigma`` its smallest eigenvalue.  The proximal map is
    evaluated through the eigendecomposition,
    ``prox(s) = (I + gamma Q)^{-1} (s - gamma q)``.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if Q.shape[0] != Q.shape[1]:
        raise PreconditionError("Q must be square")
    Q = 0.5 * (Q + Q.T)
    n = Q.shape[0]
    q = np.zeros(n) if q is None else as_point(q)
    if q.shape != (n,):
        raise PreconditionError("q has the wrong length")
    c = float(c)
    evals, evecs = np.linalg.eigh(Q)
    L = float(np.max(np.abs(evals))) if n else 0.0
    sigma = float(evals[0])

    def value(x):
        x = _batch(x)
        return _out(0.5 * np.einsum("...i,ij,...j->...", x, Q, x) + x @ q + c)

    def grad(x):
        return as_point(x) @ Q + q

    def prox(gamma, s):
        w = evecs.T @ (as_point(s) - gamma * q)
        return evecs @ (w / (1.0 + gamma * evals))

    return SmoothOracle(value, grad, L, sigma, n, prox, name,
                        params={"Q": Q, "q": q, "c": c})


def zero(dim: int = 1) -> SmoothOracle:
    """The zero function as a smooth oracle (``L = sigma = 0``)."""
    return quadratic(np.zeros((dim, dim)), name="zero")


def affine(q, c: float = 0.0) -> SmoothOracle:
    """Affine function ``q'x + c`` (``L = sigma = 0``)."""
    q = as_point(q)
    return quadratic(np.zeros((q.size, q.size)), q, c, name="affine")


def counterexample_prox(L: float, sigma: float, t: float, gamma: float, s) -> np.ndarray:
    """Closed-form proximal map of :func:`counterexample`.

    ``s / (1 + gamma L)`` when ``s <= t (1 + gamma L)``, otherwise
    ``(s - gamma (L - sigma) t) / (1 + gamma sigma)``; applied entrywise.
    """
    s = np.asarray(s, dtype=np.float64)
    first = s / (1.0 + gamma * L)
    second = (s - gamma * (L - sigma) * t) / (1.0 + gamma * sigma)
    return np.where(s <= t * (1.0 + gamma * L), first, second)


def counterexample(L: float, sigma: float, t: float) -> SmoothOracle:
    """One-dimensional piecewise quadratic used by the tightness fixtures.

    ``f(x) = L x^2 / 2`` for ``x <= t`` and
    ``f(x) = L x^2 / 2 - (L - sigma)(x - t)^2 / 2`` for ``x > t``.
    Its gradient is L-Lipschitz and it is sigma-hypoconvex.
    """
    L, sigma, t = float(L), float(sigma), float(t)
    if not (L > 0 and -L <= sigma <= L):
        raise PreconditionError("counterexample requires L > 0 and |sigma| <= L")

    def value(x):
        x = _batch(x)
        tail = np.maximum(x - t, 0.0)
        return _out(np.sum(0.5 * L * x * x - 0.5 * (L - sigma) * tail * tail, axis=-1))

    def grad(x):
        x = as_point(x)
        return L * x - (L - sigma) * np.maximum(x - t, 0.0)

    def prox(gamma, s):
        return as_point(counterexample_prox(L, sigma, t, gamma, as_point(s)))

    return SmoothOracle(value, grad, L, sigma, 1, prox, f"counterexample(L={L},sigma={sigma},t={t})",
                        params={"L": L, "sigma": sigma, "t": t})


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius >= 0:
            raise PreconditionError("radius must be nonnegative")

    @property
    def dim(self) -> int:
        return self.center.size

    def project(self, x) -> np.ndarray:
        d = _batch(x) - self.center
        nrm = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = np.where(nrm > self.radius, self.radius / np.where(nrm > 0, nrm, 1.0), 1.0)
        return self.center + d * scale


@dataclass(frozen=True)
class Halfspace:
    """Halfspace ``{x : a'x <= offset}``."""

    a: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "a", as_point(self.a))
        if not np.any(self.a):
            raise PreconditionError("normal vector must be nonzero")

    @property
    def dim(self) -> int:
        return self.a.size

    def project(self, x) -> np.ndarray:
        x = _batch(x)
        excess = np.maximum(x @ self.a - self.offset, 0.0)
        return x - np.multiply.outer(excess, self.a) / (self.a @ self.a)


@dataclass(frozen=True)
class AffineSet:
    """Affine subspace ``{x : Ax = b}`` (assumed nonempty)."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", as_point(self.b))
        object.__setattr__(self, "_pinv", np.linalg.pinv(A))

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def project(self, x) -> np.ndarray:
        x = _batch(x)
        return x - (x @ self.A.T - self.b) @ self._pinv.T


@dataclass(frozen=True)
class WholeSpace:
    """The whole space; projection is the identity."""

    dim: int = 1

    def project(self, x) -> np.ndarray:
        return _batch(x).copy()


@dataclass(frozen=True)
class ClosedSet:
    """Closed set given by a projection oracle (a selection if nonconvex)."""

    projector: Callable
    dim: int = 1
    name: str = "set"

    def project(self, x) -> np.ndarray:
        return np.asarray(self.projector(_batch(x)), dtype=np.float64)


def _dist(cset, x) -> np.ndarray:
    x = _batch(x)
    return np.linalg.norm(x - cset.project(x), axis=-1)


def half_sq_distance(cset, weight: float = 1.0) -> SmoothOracle:
    """Smooth function ``weight/2 * dist(x, C)^2`` for a convex set ``C``.

    Its gradient ``weight (x - P_C x)`` is ``weight``-Lipschitz and the
    function is convex, so ``L = weight`` and ``sigma = 0``.  The proximal
    map is ``x + (weight gamma / (1 + weight gamma)) (P_C x - x)``.
    """
    w = float(weight)
    if not w > 0:
        raise PreconditionError("weight must be positive")

    def value(x):
        d = _dist(cset, x)
        return _out(0.5 * w * d * d)

    def grad(x):
        x = as_point(x)
        return w * (x - cset.project(x))

    def prox(gamma, x):
        x = as_point(x)
        return x + (w * gamma / (1.0 + w * gamma)) * (cset.project(x) - x)

    return SmoothOracle(value, grad, w, 0.0, cset.dim, prox,
                        f"half_sq_distance({type(cset).__name__})", params={"weight": w})


def sq_distance_proxable(cset, weight: float = 1.0) -> ProxableOracle:
    """``weight/2 * dist(x, C)^2`` for a possibly nonconvex closed set ``C``."""
    w = float(weight)

    def value(x):
        d = _dist(cset, x)
        return _out(0.5 * w * d * d)

    def prox(gamma, x):
        x = as_point(x)
        return x + (w * gamma / (1.0 + w * gamma)) * (cset.project(x) - x)

    return ProxableOracle(value, prox, math.inf, cset.dim, "sq_distance", params={"weight": w})


def set_indicator(cset) -> ProxableOracle:
    """Indicator of a closed set; the proximal map is the projection."""

    def value(x):
        x = _batch(x)
        scale = np.maximum(1.0, np.linalg.norm(x, axis=-1))
        return _out(np.where(_dist(cset, x) <= MEMBER_TOL * scale, 0.0, np.inf))

    def prox(gamma, x):
        return as_point(cset.project(as_point(x)))

    return ProxableOracle(value, prox, math.inf, cset.dim, f"indicator({type(cset).__name__})")


# ---------------------------------------------------------------------------
# nonsmooth functions


def zero_prox(dim: int = 1) -> ProxableOracle:
    """The zero function as a proximable oracle."""

    def value(x):
        return _out(np.zeros(_batch(x).shape[:-1]))

    return ProxableOracle(value, lambda gamma, x: as_point(x).copy(), math.inf, dim, "zero")


def _box_value(x, lo, hi):
    x = _batch(x)
    inside = np.all((x >= lo) & (x <= hi), axis=-1)
    return np.where(inside, 0.0, np.inf)


def box(lower, upper, dim: Optional[int] = None) -> ProxableOracle:
    """Indicator of the box ``[lower, upper]``; the proximal map clips."""
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    if dim is None:
        dim = max(lo.size, hi.size)
    lo = np.broadcast_to(lo, (dim,)).copy()
    hi = np.broadcast_to(hi, (dim,)).copy()
    if np.any(lo > hi):
        raise PreconditionError("box requires lower <= upper")

    return ProxableOracle(lambda x: _out(_box_value(x, lo, hi)),
                          lambda gamma, x: np.clip(as_point(x), lo, hi),
                          math.inf, dim, "box", params={"lower": lo, "upper": hi})


def one_norm(weight: float = 1.0, dim: int = 1, bound: Optional[float] = None) -> ProxableOracle:
    """``weight * ||x||_1``, optionally restricted to ``||x||_inf <= bound``.

    The proximal map is soft thresholding at ``gamma * weight``, followed
    by clipping when a bound is present.
    """
    w = float(weight)
    if w < 0:
        raise PreconditionError("weight must be nonnegative")
    R = math.inf if bound is None else float(bound)

    def value(x):
        x = _batch(x)
        v = w * np.sum(np.abs(x), axis=-1)
        if R < math.inf:
            v = np.where(np.all(np.abs(x) <= R, axis=-1), v, np.inf)
        return _out(v)

    def prox(gamma, x):
        x = as_point(x)
        p = np.sign(x) * np.maximum(np.abs(x) - gamma * w, 0.0)
        return np.clip(p, -R, R) if R < math.inf else p

    return ProxableOracle(value, prox, math.inf, dim, "one_norm",
                          params={"weight": w, "bound": bound})


def zero_norm(weight: float = 1.0, dim: int = 1, bound: Optional[float] = None) -> ProxableOracle:
    """``weight * ||x||_0``, optionally restricted to ``||x||_inf <= bound``.

    The proximal map is hard thresholding: each entry keeps its (clipped)
    value when that costs no more than zeroing it.  On a tie the larger of
    the two candidates is returned.
    """
    w = float(weight)
    if w < 0:
        raise PreconditionError("weight must be nonnegative")
    R = math.inf if bound is None else float(bound)

    def value(x):
        x = _batch(x)
        v = w * np.count_nonzero(x, axis=-1).astype(np.float64)
        if R < math.inf:
            v = np.where(np.all(np.abs(x) <= R, axis=-1), v, np.inf)
        return _out(v)

    def prox(gamma, x):
        x = as_point(x)
        keep = np.clip(x, -R, R)
        cost_keep = w + (keep - x) ** 2 / (2.0 * gamma)
        cost_zero = x * x / (2.0 * gamma)
        out = np.where(cost_keep < cost_zero, keep, 0.0)
        tie = cost_keep == cost_zero
        return np.where(tie, np.maximum(keep, 0.0), out)

    return ProxableOracle(value, prox, math.inf, dim, "zero_norm",
                          params={"weight": w, "bound": bound})


def finite_set(points: Union[Sequence, np.ndarray]) -> ProxableOracle:
    """Indicator of a finite set of points.

    The proximal map returns the nearest point; among equidistant points
    the lexicographically largest one is returned.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2 or P.shape[0] == 0:
        raise PreconditionError("points must be a nonempty (m, d) array")
    dim = P.shape[1]
    # rows sorted lexicographically so the last tied row is the largest
    order = np.lexsort(P.T[::-1])
    P = P[order]

    def value(x):
        x = _batch(x)
        d = np.min(np.linalg.norm(x[..., None, :] - P, axis=-1), axis=-1)
        scale = np.maximum(1.0, np.linalg.norm(x, axis=-1))
        return _out(np.where(d <= MEMBER_TOL * scale, 0.0, np.inf))

    def prox(gamma, x):
        x = as_point(x)
        d2 = np.sum((P - x) ** 2, axis=1)
        m = d2.min()
        tied = np.flatnonzero(d2 <= m + 8 * np.finfo(float).eps * max(m, 1e-300))
        return P[tied[-1]].copy()

    return ProxableOracle(value, prox, math.inf, dim, "finite_set", params={"points": P})


def as_proxable(f: SmoothOracle) -> ProxableOracle:
    """View a smooth function as a proximable one (threshold ``1/[sigma]_-``)."""
    return ProxableOracle(f.value, lambda gamma, x: smooth_prox(f, gamma, x),
                          inv_neg_part(f.sigma), f.dim, f.name, params=dict(f.params))


# ---------------------------------------------------------------------------
# declarative construction

_SMOOTH_KINDS = ("quadratic", "zero", "affine", "counterexample", "half_sq_distance")
_PROX_KINDS = ("zero", "one_norm", "zero_norm", "finite_set", "box", "indicator")


def _set_from_config(rec: dict):
    kind = rec.pop("set", None)
    if kind == "ball":
        return Ball(rec.pop("center"), float(rec.pop("radius")))
    if kind == "halfspace":
        return Halfspace(rec.pop("a"), float(rec.pop("offset")))
    if kind == "affine":
        return AffineSet(rec.pop("A"), rec.pop("b"))
    raise PreconditionError(f"unknown set kind {kind!r}")


def _build(kind, rec: dict, role: str, dim: Optional[int]):
    if role == "smooth":
        if kind == "quadratic":
            return quadratic(rec.pop("Q"), rec.pop("q", None), rec.pop("c", 0.0))
        if kind == "zero":
            return zero(int(rec.pop("dim", dim or 1)))
        if kind == "affine":
            return affine(rec.pop("q"), rec.pop("c", 0.0))
        if kind == "counterexample":
            return counterexample(rec.pop("L"), rec.pop("sigma"), rec.pop("t"))
        if kind == "half_sq_distance":
            w = rec.pop("weight", 1.0)
            return half_sq_distance(_set_from_config(rec), w)
        raise PreconditionError(f"unknown smooth kind {kind!r}; expected one of {_SMOOTH_KINDS}")
    if role == "nonsmooth":
        n = int(rec.pop("dim", dim or 1))
        if kind == "zero":
            return zero_prox(n)
        if kind == "one_norm":
            return one_norm(rec.pop("weight", 1.0), n, rec.pop("bound", None))
        if kind == "zero_norm":
            return zero_norm(rec.pop("weight", 1.0), n, rec.pop("bound", None))
        if kind == "finite_set":
            return finite_set(rec.pop("points"))
        if kind == "box":
            return box(rec.pop("lower"), rec.pop("upper"), n)
        if kind == "indicator":
            return set_indicator(_set_from_config(rec))
        raise PreconditionError(f"unknown nonsmooth kind {kind!r}; expected one of {_PROX_KINDS}")
    raise PreconditionError(f"unknown role {role!r}")


def from_config(record: Mapping, role: str = "smooth", dim: Optional[int] = None):
    """Build a catalog entry from a ``{"kind": ..., **params}`` record.

    Parameters
    ----------
    record : mapping
        Kind tag plus numeric parameters.
    role : {"smooth", "nonsmooth"}
        Whether a :class:`SmoothOracle` or a :class:`ProxableOracle` is
        requested.
    dim : int, optional
        Dimension used by kinds that do not carry one.

    Raises
    ------
    PreconditionError
        On unknown kinds, missing parameters or unknown parameters.
    """
    rec = dict(record)
    kind = rec.pop("kind", None)
    try:
        out = _build(kind, rec, role, dim)
    except KeyError as exc:
        raise PreconditionError(f"{kind}: missing parameter {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PreconditionError):
            raise
        raise PreconditionError(f"{kind}: bad parameter ({exc})") from None
    if rec:
        raise PreconditionError(f"{kind}: unknown fields {sorted(rec)}")
    return out
