import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drenv.core import (
    CompositeProblem,
    InnerSolverError,
    PreconditionError,
    SmoothOracle,
    StepsizeInfeasibleError,
    catalog,
    check_hypoconvex_lower_bound,
    check_moreau_gradient,
    check_smooth_prox_regularity,
    check_subdiff_smoothness,
    eval_prox,
    lattice_minimize,
    lattice_prox,
    moreau_envelope,
    smooth_prox,
)

# ---------------------------------------------------------------- eval_prox


def test_one_norm_prox_example():
    g = catalog.one_norm()
    assert eval_prox(g, 1.0, [2.0])[0] == pytest.approx(1.0, abs=1e-15)
    # independent grid oracle on [-3, 3] with step 1e-4
    w = np.arange(-30000, 30001) * 1e-4
    best = w[np.argmin(np.abs(w) + 0.5 * (w - 2.0) ** 2)]
    assert abs(best - 1.0) <= 1e-4


def test_finite_set_tie_goes_to_largest():
    g = catalog.finite_set([[-1.0], [1.0]])
    assert eval_prox(g, 1.0, [0.0])[0] == 1.0
    assert eval_prox(g, 1.0, [-0.2])[0] == -1.0


def test_counterexample_prox_first_branch():
    f = catalog.counterexample(1.0, -0.5, 2.0)
    u = smooth_prox(f, 0.5, [2.0])[0]
    assert u == pytest.approx(2.0 / 1.5, abs=1e-15)
    res = lattice_prox(f.value, 0.5, [2.0], radius=3.0, resolution=1e-4)
    assert abs(res.x[0] - u) <= 1e-4


def test_eval_prox_rejects_large_gamma():
    g = catalog.ProxableOracle(lambda x: -float(np.sum(np.square(x))),
                               lambda gm, x: x / (1 - 2 * gm), prox_threshold=0.5)
    with pytest.raises(StepsizeInfeasibleError):
        eval_prox(g, 0.5, [1.0])
    with pytest.raises(StepsizeInfeasibleError):
        eval_prox(g, 0.0, [1.0])


def test_prox_determinism(rng):
    g = catalog.zero_norm(0.7, 3)
    x = rng.standard_normal(3)
    a, b = eval_prox(g, 0.4, x), eval_prox(g, 0.4, x)
    assert a.tobytes() == b.tobytes()


# ------------------------------------------------------------ moreau envelope


def test_moreau_envelope_examples():
    assert moreau_envelope(catalog.zero_prox(2), 0.3, [1.0, -2.0]) == 0.0
    sq = catalog.as_proxable(catalog.quadratic([[1.0]]))
    assert moreau_envelope(sq, 1.0, [2.0]) == pytest.approx(1.0, abs=1e-14)
    pm = catalog.finite_set([[-1.0], [1.0]])
    assert moreau_envelope(pm, 1.0, [3.0]) == pytest.approx(2.0, abs=1e-15)


# -------------------------------------------------------------- smooth_prox


def test_smooth_prox_examples():
    half = catalog.quadratic([[1.0]])
    assert smooth_prox(half, 1.0, [2.0])[0] == pytest.approx(1.0, abs=1e-15)
    f = catalog.counterexample(1.0, -0.5, 2.0)
    assert smooth_prox(f, 0.5, [4.0])[0] == pytest.approx(2.5 / 0.75, abs=1e-14)
    aff = catalog.affine([2.0, -1.0])
    assert np.allclose(smooth_prox(aff, 0.25, [1.0, 1.0]), [0.5, 1.25], atol=1e-15)


def test_smooth_prox_iterative_matches_closed_form(rng):
    Q = np.array([[1.0, 0.3], [0.3, -0.4]])
    closed = catalog.quadratic(Q, [0.2, -0.1])
    bare = SmoothOracle(closed.value, closed.grad, closed.L, closed.sigma, 2)
    for _ in range(20):
        s = rng.standard_normal(2) * 3
        a = smooth_prox(closed, 0.8, s)
        b = smooth_prox(bare, 0.8, s)
        assert np.allclose(a, b, atol=1e-10)
        assert np.linalg.norm(b + 0.8 * bare.grad(b) - s) <= 1e-12 * max(1, np.linalg.norm(s))


def test_smooth_prox_rejects_gamma_beyond_weak_convexity():
    f = catalog.counterexample(1.0, -0.5, 2.0)
    with pytest.raises(StepsizeInfeasibleError):
        smooth_prox(f, 2.0, [0.0])


def test_smooth_prox_reports_inner_failure():
    f = SmoothOracle(lambda x: float(np.sum(x ** 4)), lambda x: 4 * x ** 3, 1.0, 0.0, 1)
    with np.errstate(all="ignore"), pytest.raises(InnerSolverError) as exc:
        smooth_prox(f, 0.5, [50.0], max_iter=5)
    assert exc.value.residual > 0


# ---------------------------------------------------------------- catalog


def _grid_prox_1d(value, gamma, x, radius=4.0, h=1e-4):
    w = x + np.arange(-int(radius / h), int(radius / h) + 1) * h
    obj = np.array(value(w[:, None]), dtype=float) + (w - x) ** 2 / (2 * gamma)
    i = int(np.argmin(obj))
    return w[i], obj[i]


@pytest.mark.parametrize("g", [
    catalog.one_norm(0.8),
    catalog.one_norm(0.8, bound=1.5),
    catalog.zero_norm(0.6),
    catalog.box([-1.0], [2.0]),
    catalog.finite_set([[-1.0], [0.5], [2.0]]),
    catalog.set_indicator(catalog.Ball([0.5], 1.0)),
], ids=lambda g: g.name)
def test_catalog_prox_matches_grid_oracle(g, rng):
    for _ in range(50):
        gamma = float(rng.uniform(0.05, 2.0))
        x = float(rng.uniform(-3, 3))
        p = eval_prox(g, gamma, [x])[0]
        w, best = _grid_prox_1d(g.value, gamma, x)
        obj_p = float(g.value(np.array([p]))) + (p - x) ** 2 / (2 * gamma)
        assert obj_p <= best + 1e-12, (g.name, gamma, x, p, w)


@pytest.mark.parametrize("f", [
    catalog.quadratic([[2.0, 0.5], [0.5, -1.0]], [0.3, 0.1]),
    catalog.half_sq_distance(catalog.Ball([1.0, 0.0], 0.5), 2.0),
    catalog.half_sq_distance(catalog.Halfspace([1.0, 1.0], 0.5), 1.0),
    catalog.half_sq_distance(catalog.AffineSet([[1.0, -1.0]], [0.3]), 1.5),
], ids=lambda f: f.name)
def test_smooth_catalog_prox_matches_2d_lattice(f, rng):
    for _ in range(5):
        gamma = 0.9 / max(f.L, 1e-12) if f.sigma >= 0 else 0.9 / -f.sigma
        gamma = min(gamma, 0.8)
        x = rng.uniform(-2, 2, 2)
        u = smooth_prox(f, gamma, x)
        res = lattice_prox(f.value, gamma, x, radius=3.0, resolution=1e-3)
        obj_u = float(f.value(u)) + float((u - x) @ (u - x)) / (2 * gamma)
        assert obj_u <= res.value + 1e-12


@pytest.mark.parametrize("f", [
    catalog.quadratic([[1.0]]),
    catalog.quadratic([[2.0, 0.5], [0.5, -1.0]]),
    catalog.counterexample(1.0, -0.5, 2.0),
    catalog.counterexample(2.0, 1.0, 1.0),
    catalog.half_sq_distance(catalog.Ball([0.0, 0.0], 1.0), 3.0),
], ids=lambda f: f.name)
def test_declared_moduli_pass_subdiff_audit(f, rng):
    X = rng.uniform(-4, 4, (1200, f.dim))
    est = check_subdiff_smoothness([(x, f.grad(x)) for x in X])
    assert est.sigma >= f.sigma - 1e-9
    assert est.L <= f.L + 1e-9
    assert est.n_pairs >= 1000


def test_quadratic_declared_moduli():
    f = catalog.quadratic([[3.0, 0.0], [0.0, -2.0]])
    assert (f.L, f.sigma) == (3.0, -2.0)


def test_from_config_round_trip_and_rejections():
    f = catalog.from_config({"kind": "counterexample", "L": 1.0, "sigma": -0.5, "t": 2.0})
    assert f.params == {"L": 1.0, "sigma": -0.5, "t": 2.0}
    g = catalog.from_config({"kind": "one_norm", "weight": 0.5, "dim": 3}, "nonsmooth")
    assert g.dim == 3
    ind = catalog.from_config({"kind": "indicator", "set": "ball", "center": [0.0], "radius": 1.0},
                              "nonsmooth")
    assert ind.value(np.array([2.0])) == math.inf
    with pytest.raises(PreconditionError):
        catalog.from_config({"kind": "one_norm", "wieght": 1.0}, "nonsmooth")
    with pytest.raises(PreconditionError):
        catalog.from_config({"kind": "counterexample", "L": 1.0})
    with pytest.raises(PreconditionError):
        catalog.from_config({"kind": "nope"})


def test_feasible_stepsize_lower_bound_on_lattice():
    # g + ||.||^2/(2 gamma) stays above inf phi - f(0) - ||grad f(0)|| R - L R^2/2 for gamma < 1/L
    f = catalog.quadratic([[1.0]], [0.5])
    R = 5.0
    w = np.linspace(-R, R, 20001)[:, None]
    for g in (catalog.one_norm(1.0), catalog.zero_norm(0.5), catalog.finite_set([[-1.0], [2.0]]),
              catalog.box([-1.0], [1.0])):
        phi = np.array(f.value(w)) + np.array(g.value(w))
        inf_phi = float(np.min(phi))
        bound = inf_phi - float(f.value(np.zeros(1))) - abs(f.grad(np.zeros(1))[0]) * R - f.L * R * R / 2
        for gamma in (0.2, 0.5, 0.99):
            vals = np.array(g.value(w)) + (w[:, 0] ** 2) / (2 * gamma)
            assert np.min(vals) >= bound


# ---------------------------------------------------------------- checks


def test_prox_regularity_examples(rng):
    half = catalog.quadratic([[1.0]])
    rep = check_smooth_prox_regularity(half, 1.0, [(np.array([2.0]), np.array([-1.0]))])
    assert rep.max_violation <= 1e-15
    assert rep.lower_lipschitz == pytest.approx(0.0, abs=1e-15)
    f = catalog.quadratic([[1.0, 0.0], [0.0, -0.5]])
    pairs = [(rng.standard_normal(2), rng.standard_normal(2)) for _ in range(100)]
    assert check_smooth_prox_regularity(f, 0.5, pairs).max_violation <= 1e-10
    s = np.array([0.3, 0.1])
    assert check_smooth_prox_regularity(f, 0.5, [(s, s)]).max_violation == 0.0


def test_moreau_gradient_examples():
    half = catalog.quadratic([[1.0]])
    rep = check_moreau_gradient(half, 1.0, [2.0])
    assert rep.analytic[0] == pytest.approx(1.0, abs=1e-15)
    assert rep.rel_error <= 1e-6 and not rep.kink and rep.agrees
    f = catalog.counterexample(1.0, -0.5, 2.0)
    kink = check_moreau_gradient(f, 0.5, [3.0])  # branch point t (1 + gamma L) = 3
    assert kink.kink and kink.agrees
    aff = catalog.affine([2.0, -1.0])
    rep = check_moreau_gradient(aff, 0.3, [0.4, 5.0])
    assert np.allclose(rep.analytic, [2.0, -1.0], atol=1e-14)


def test_hypoconvex_lower_bound(rng):
    half = catalog.quadratic([[1.0]])
    rep = check_hypoconvex_lower_bound(half, "simple", [1.0], [-2.0])
    assert rep.slack == pytest.approx(0.0, abs=1e-14)
    f = catalog.counterexample(1.0, -0.5, 2.0)
    for _ in range(1000):
        x, y = rng.uniform(-1, 5, 1), rng.uniform(-1, 5, 1)
        assert check_hypoconvex_lower_bound(f, "mixed", x, y).holds
        assert check_hypoconvex_lower_bound(f, "simple", x, y).holds
    with pytest.raises(PreconditionError):
        check_hypoconvex_lower_bound(catalog.counterexample(1.0, 0.3, 2.0), "mixed", [0.0], [1.0])


def test_subdiff_smoothness_examples():
    half = catalog.quadratic([[1.0]])
    xs = np.linspace(-2, 2, 11)
    L, sig = check_subdiff_smoothness([(np.array([x]), half.grad(np.array([x]))) for x in xs])
    assert (L, sig) == pytest.approx((1.0, 1.0), abs=1e-12)
    f = catalog.counterexample(1.0, -0.5, 2.0)
    xs = np.linspace(0.0, 4.0, 801)
    L, sig = check_subdiff_smoothness([(np.array([x]), f.grad(np.array([x]))) for x in xs])
    assert L == pytest.approx(1.0, abs=1e-9) and sig == pytest.approx(-0.5, abs=1e-9)
    L, sig = check_subdiff_smoothness([(np.array([0.0]), np.array([1.0])),
                                       (np.array([1.0]), np.array([1.0]))])
    assert sig <= 0 <= L
    with pytest.raises(PreconditionError):
        check_subdiff_smoothness([(np.array([1.0]), np.array([1.0]))] * 3)


# ---------------------------------------------------------------- properties


@given(st.floats(-0.99, 1.0), st.floats(0.05, 0.95), st.floats(-10, 10), st.floats(-10, 10))
def test_counterexample_prox_solves_optimality(sig, frac, s1, s2):
    f = catalog.counterexample(1.0, sig, 1.5)
    gamma = frac  # below 1 <= 1/[sigma]_- for sigma > -1
    for s in (s1, s2):
        u = smooth_prox(f, gamma, [s])
        assert abs(u[0] + gamma * f.grad(u)[0] - s) <= 1e-12 * max(1.0, abs(s))


@given(st.floats(0.01, 3.0), st.lists(st.floats(-5, 5), min_size=1, max_size=4))
def test_one_norm_prox_minimality(gamma, xs):
    g = catalog.one_norm(0.7, len(xs))
    x = np.array(xs)
    p = eval_prox(g, gamma, x)
    obj = float(g.value(p)) + float((p - x) @ (p - x)) / (2 * gamma)
    rng = np.random.default_rng(len(xs))
    for w in x + rng.standard_normal((50, len(xs))):
        assert obj <= float(g.value(w)) + float((w - x) @ (w - x)) / (2 * gamma) + 1e-12


@given(st.floats(0.01, 3.0), st.floats(-5, 5), st.floats(-5, 5))
def test_zero_norm_prox_minimality(gamma, a, b):
    g = catalog.zero_norm(0.5, 2)
    x = np.array([a, b])
    p = eval_prox(g, gamma, x)
    obj = float(g.value(p)) + float((p - x) @ (p - x)) / (2 * gamma)
    for w in ([0.0, 0.0], [a, 0.0], [0.0, b], [a, b]):
        w = np.array(w)
        assert obj <= float(g.value(w)) + float((w - x) @ (w - x)) / (2 * gamma) + 1e-12


def test_lattice_minimize_coarse_to_fine_matches_closed_form():
    f = catalog.quadratic([[2.0, 0.3], [0.3, 1.0]], [1.0, -2.0])
    res = lattice_minimize(f.value, [0.0, 0.0], 10.0, 1e-3)
    x_star = np.linalg.solve([[2.0, 0.3], [0.3, 1.0]], [-1.0, 2.0])
    assert np.linalg.norm(res.x - x_star) <= 2e-3
    assert not res.on_boundary


def test_lattice_flags_escaping_minimizer():
    res = lattice_minimize(lambda X: -X[:, 0], [0.0], 5.0, 1e-2)
    assert res.on_boundary
    flat = lattice_minimize(lambda X: np.zeros(X.shape[0]), [0.0], 5.0, 1e-2)
    assert not flat.on_boundary


def test_composite_problem_dimension_check():
    with pytest.raises(PreconditionError):
        CompositeProblem(catalog.quadratic(np.eye(2)), catalog.one_norm(1.0, 3))
    with pytest.raises(PreconditionError):
        SmoothOracle(lambda x: 0.0, lambda x: x, 1.0, -2.0)
