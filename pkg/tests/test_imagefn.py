import math

import numpy as np
import pytest

from drenv.core import PreconditionError, check_subdiff_smoothness
from drenv.imagefn import (
    ImageFunction,
    cp2p_check,
    image_constants,
    image_prox_inclusion_check,
    image_search,
    image_subgradient_check,
    image_value,
    nlsc_function,
    strong_convexity_transfer_check,
)

C11 = np.array([[1.0, 1.0]])


def half_sq(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * np.sum(x * x, axis=-1)


def test_image_value_lagrange_example():
    img = ImageFunction(half_sq, C11, radius=5.0, resolution=1e-3)
    res = image_search(img, [2.0])
    assert res.value == pytest.approx(1.0, abs=1e-6)  # s^2 / (2 ||C||^2)
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-3)
    assert not res.escaping


def test_image_value_invertible_is_substitution(rng):
    C = np.array([[2.0, 1.0], [0.0, 1.0]])
    img = ImageFunction(half_sq, C)
    for _ in range(10):
        s = rng.standard_normal(2)
        assert image_value(img, s) == pytest.approx(float(half_sq(np.linalg.solve(C, s))), abs=1e-14)


def test_image_value_outside_range():
    img = ImageFunction(half_sq, np.array([[1.0, 1.0], [2.0, 2.0]]))
    assert image_value(img, [1.0, 0.0]) == math.inf


def test_closed_form_mode():
    img = ImageFunction(half_sq, C11, mode="closed-form", closed_form=lambda s: float(s @ s) / 4)
    assert img([2.0]) == 1.0


def test_image_function_preconditions():
    with pytest.raises(PreconditionError):
        ImageFunction(half_sq, np.zeros((1, 2)))
    with pytest.raises(PreconditionError):
        ImageFunction(half_sq, np.ones((1, 4)))
    with pytest.raises(PreconditionError):
        ImageFunction(half_sq, C11, mode="closed-form")


def test_nlsc_fixture():
    B = np.array([[1.0, 0.0]])
    img = ImageFunction(nlsc_function, B, radius=10.0, resolution=1e-3)
    at0 = image_search(img, [0.0])
    assert at0.value == pytest.approx(1.0, abs=1e-12)
    assert not at0.escaping
    # away from 0 the infimum -|s| needs |y| >= 1/|s|
    for s in (0.5, -1.0, 2.0, 3.0):
        r = image_search(img, [s])
        assert r.value == pytest.approx(-abs(s), abs=1e-12)
    # for small s the fibre minimizers leave the lattice box: escape is flagged
    r = image_search(img, [0.05])
    assert r.escaping and r.value > -0.05


def test_nlsc_function_is_vectorized():
    pts = np.array([[0.0, 5.0], [2.0, 1.0], [0.5, 1.0]])
    v = nlsc_function(pts)
    assert v.shape == (3,)
    assert v[0] == 1.0 and v[1] == -2.0
    assert nlsc_function([2.0, 1.0]) == -2.0


def test_prox_inclusion_and_exactness():
    rep = image_prox_inclusion_check(half_sq, C11, 1.0, [2.0], radius=3.0, resolution=1e-3,
                                     s_radius=1.5, s_resolution=1e-2)
    # closed form: s_beta = beta s_bar/(beta + 1/||C||^2) = 4/3
    assert rep.s_beta[0] == pytest.approx(4.0 / 3.0, abs=1e-6)
    assert rep.inclusion_holds and rep.exact


def test_prox_inclusion_invertible():
    C = np.array([[1.0, 0.5], [0.0, 2.0]])
    rep = image_prox_inclusion_check(half_sq, C, 2.0, [1.0, -1.0], radius=3.0, resolution=1e-2,
                                     s_radius=0.5, s_resolution=5e-2)
    assert rep.inclusion_holds and rep.exactness_gap <= 1e-12


def test_subgradient_example():
    rep = image_subgradient_check(half_sq, lambda x: np.asarray(x), C11, [2.0], radius=3.0)
    # C|>h(s) = s^2/4, so the gradient at 2 is 1 and x_bar = (1, 1)
    assert rep.v_bar[0] == pytest.approx(1.0, abs=1e-6)
    assert rep.error <= 1e-6


def test_subgradient_invertible_chain_rule(rng):
    C = np.array([[1.0, 2.0], [-1.0, 1.0]])
    s = rng.standard_normal(2)
    rep = image_subgradient_check(half_sq, lambda x: np.asarray(x), C, s)
    Ci = np.linalg.inv(C)
    assert np.allclose(rep.v_bar, Ci.T @ (Ci @ s), atol=1e-6)
    assert rep.error <= 1e-6


def test_subgradient_random_quadratic_n3_p1(rng):
    M = rng.standard_normal((3, 3))
    Q = M @ M.T + 0.5 * np.eye(3)
    C = rng.standard_normal((1, 3))

    def h(X):
        X = np.asarray(X, dtype=np.float64)
        return 0.5 * np.einsum("...i,ij,...j->...", X, Q, X)

    rep = image_subgradient_check(h, lambda x: Q @ x, C, [0.7], radius=4.0, resolution=1e-2)
    assert rep.error <= 1e-5


def test_image_constants_examples():
    assert image_constants("convex", 1.0, 1.0, 2.0 * np.eye(2)) == pytest.approx((0.25, 0.25))
    assert image_constants("invertible", 3.0, -1.0, np.eye(2)) == pytest.approx((3.0, -1.0))
    assert image_constants("convex", 3.0, 0.5, np.eye(2)) == pytest.approx((3.0, 0.5))
    assert image_constants("lipschitz-minimizers", 1.0, -1.0, C11, M=2.0) == (4.0, -4.0)
    with pytest.raises(PreconditionError):
        image_constants("convex", 1.0, -0.5, np.eye(2))
    with pytest.raises(PreconditionError):
        image_constants("invertible", 1.0, 0.0, C11)
    with pytest.raises(PreconditionError):
        image_constants("lipschitz-minimizers", 1.0, 0.0, C11)


def _fd_pairs(img, pts, h=1e-4):
    out = []
    for s in pts:
        g = np.empty_like(s)
        for i in range(s.size):
            e = np.zeros_like(s)
            e[i] = h
            g[i] = (image_value(img, s + e) - image_value(img, s - e)) / (2 * h)
        out.append((s, g))
    return out


def test_image_constants_audit_invertible(rng):
    A = np.array([[2.0, 0.5], [0.3, 1.0]])
    Qf = np.diag([1.0, -0.5])

    def f(X):
        X = np.asarray(X, dtype=np.float64)
        return 0.5 * np.einsum("...i,ij,...j->...", X, Qf, X)

    L, sig = image_constants("invertible", 1.0, -0.5, A)
    img = ImageFunction(f, A)
    est = check_subdiff_smoothness(_fd_pairs(img, rng.uniform(-2, 2, (60, 2))))
    assert est.L <= L + 5e-3
    assert est.sigma >= sig - 5e-3


def test_image_constants_audit_convex(rng):
    A = np.array([[1.0, 2.0]])
    Qf = np.diag([2.0, 1.0])

    def f(X):
        X = np.asarray(X, dtype=np.float64)
        return 0.5 * np.einsum("...i,ij,...j->...", X, Qf, X)

    L, sig = image_constants("convex", 2.0, 1.0, A)
    img = ImageFunction(f, A, radius=5.0, resolution=1e-3, polish=True)
    est = check_subdiff_smoothness(_fd_pairs(img, rng.uniform(-2, 2, (30, 1))))
    # A|>f(s) = s^2 / (2 A Q^{-1} A') = s^2 / 9
    assert est.L == pytest.approx(2 / 9, abs=5e-3) and est.sigma == pytest.approx(2 / 9, abs=5e-3)
    assert est.L <= L + 5e-3 and est.sigma >= sig - 5e-3


def test_strong_convexity_transfer(rng):
    C = np.array([[1.0, 2.0]])
    img = ImageFunction(half_sq, C, radius=5.0, resolution=1e-3, polish=True)
    sigma = 1.0 / float(np.linalg.norm(C, 2)) ** 2
    pairs = [(rng.uniform(-3, 3, 1), rng.uniform(-3, 3, 1)) for _ in range(100)]
    assert strong_convexity_transfer_check(img, sigma, pairs) >= -1e-9
    # a modulus above the transferred one fails somewhere
    assert strong_convexity_transfer_check(img, 2.0 * sigma, pairs) < 0


def test_cp2p_reformulation():
    A = np.array([[1.0, 0.5], [0.0, 1.0]])
    B = np.array([[-1.0, 0.0], [0.0, -2.0]])
    b = np.array([0.5, -0.3])

    def g(Z):
        return np.sum(np.abs(np.asarray(Z, dtype=np.float64)), axis=-1)

    rep = cp2p_check(half_sq, g, A, B, b, radius=3.0, resolution=1e-3)
    assert rep.gap <= 1e-3


def test_properness_on_fixtures(rng):
    for C in (C11, np.array([[1.0, 0.0]]), np.array([[2.0, 1.0], [0.0, 1.0]])):
        img = ImageFunction(half_sq, C, radius=5.0, resolution=1e-2)
        for _ in range(5):
            x0 = rng.uniform(-1, 1, 2)
            assert math.isfinite(image_value(img, C @ x0))
    img = ImageFunction(nlsc_function, np.array([[1.0, 0.0]]), radius=5.0, resolution=1e-2)
    assert math.isfinite(image_value(img, [0.3]))
