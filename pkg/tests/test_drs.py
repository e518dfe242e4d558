import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drenv import testbed
from drenv.core import (CompositeProblem, InvariantViolation, PreconditionError,
                        StepsizeInfeasibleError, catalog, eval_prox)
from drenv.core.catalog import Ball, Halfspace
from drenv.drs import (
    DrsConfig,
    decrease_constant_closed_form,
    decrease_constant_formula,
    drs_step,
    marp_equivalence_check,
    residual_rate_report,
    run_adaptive_drs,
    run_drs,
    simple_bound,
    stationarity_witness,
    stepsize_certificate,
    sufficient_decrease_constant,
)
from drenv.envelope import eval_dre

# ------------------------------------------------------------- certificates


@pytest.mark.parametrize("L,sigma,lam,interval", [
    (1.0, 1.0, 2.0, (0.0, 1.0)),
    (1.0, 1.0, 3.0, (0.5, 1.0)),
    (1.0, -1.0, 1.0, (0.0, 0.5)),
    (1.0, 0.0, 1.0, (0.0, 1.0)),
    (2.0, -1.0, 1.5, (0.0, 0.25)),
])
def test_certificate_examples(L, sigma, lam, interval):
    cert = stepsize_certificate(L, sigma, lam)
    assert cert.feasible
    assert cert.interval == interval


def test_certificate_delta():
    assert stepsize_certificate(1.0, 1.0, 2.0).delta == 2.0
    assert stepsize_certificate(1.0, 1.0, 3.0).delta == 1.0


@pytest.mark.parametrize("sigma", [0.0, -0.3, -1.0])
def test_certificate_prs_needs_strong_convexity(sigma):
    cert = stepsize_certificate(1.0, sigma, 2.0)
    assert not cert.feasible and not cert.contains(0.5)
    assert cert.quartiles() == []


def test_certificate_upper_relaxation_limit():
    # lam >= 4/(1 + sqrt(1 - p)) is empty
    p = 0.75
    lim = 4.0 / (1.0 + math.sqrt(1.0 - p))
    assert not stepsize_certificate(1.0, p, lim).feasible
    assert stepsize_certificate(1.0, p, lim - 1e-3).feasible


def test_certificate_rejects_bad_inputs():
    for args in [(1.0, 2.0, 1.0), (1.0, 0.0, 4.0), (1.0, 0.0, 0.0), (-1.0, 0.0, 1.0)]:
        with pytest.raises(PreconditionError):
            stepsize_certificate(*args)


def test_decrease_constant_examples():
    assert sufficient_decrease_constant(1.0, 0.0, 0.5, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert sufficient_decrease_constant(1.0, -1.0, 0.25, 1.0) == pytest.approx(1.0, abs=1e-15)
    # lam >= 2 branch in the form that vanishes at the interval endpoints: 1 * (1/2 - 1/4)
    assert sufficient_decrease_constant(1.0, 1.0, 0.5, 2.0) == pytest.approx(0.25, abs=1e-15)


def test_decrease_constant_outside_interval_raises():
    with pytest.raises(StepsizeInfeasibleError):
        sufficient_decrease_constant(1.0, -1.0, 0.6, 1.0)
    with pytest.raises(StepsizeInfeasibleError):
        sufficient_decrease_constant(1.0, 0.0, 0.5, 2.0)


@pytest.mark.parametrize("sigma,lam", [(1.0, 2.0), (1.0, 3.0), (0.5, 2.2), (0.9, 2.5)])
def test_boundary_sharpness_lambda_ge_2(sigma, lam):
    cert = stepsize_certificate(1.0, sigma, lam)
    lo, hi = cert.interval
    assert cert.c(0.5 * (lo + hi)) > 0
    raw_hi = (cert.p * lam + cert.delta) / (4.0 * sigma)
    raw_lo = (cert.p * lam - cert.delta) / (4.0 * sigma)
    for g in (raw_hi + 1e-6, raw_lo - 1e-6):
        if g > 0 and g * 1.0 <= 1.0 + 1e-6:
            assert decrease_constant_formula(1.0, sigma, g, lam) <= 0


def test_lambda_continuity_at_case_boundary(rng):
    for _ in range(200):
        L = float(rng.uniform(0.1, 10))
        lam = float(rng.uniform(0.01, 1.99))
        p = lam / 2.0 - 1.0  # case boundary, lies in (-1, 0)
        sigma = p * L
        gamma = float(rng.uniform(0.01, 0.99)) * stepsize_certificate(L, sigma, lam).gamma_hi
        base = (2 - lam) / (2 * lam * gamma)
        q = -p
        a = base - L * max(q / (2 * (1 - q)), gamma * L / lam - 0.5)
        b = base - (-sigma) / lam
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_piecewise_and_closed_form_agree(rng):
    n = 0
    while n < 1000:
        L = float(rng.uniform(0.1, 5))
        sigma = float(rng.uniform(-1, 1)) * L
        lam = float(rng.uniform(0.05, 3.9))
        cert = stepsize_certificate(L, sigma, lam)
        if not cert.feasible:
            continue
        lo, hi = cert.interval
        gamma = lo + float(rng.uniform(0.001, 0.999)) * (hi - lo)
        a = decrease_constant_formula(L, sigma, gamma, lam)
        b = decrease_constant_closed_form(L, sigma, gamma, lam)
        assert abs(a - b) <= 1e-14 * max(1.0, abs(a), abs((2 - lam) / (2 * lam * gamma)), L)
        assert a > 0
        n += 1


@given(st.floats(0.1, 10), st.floats(-1, 1), st.floats(0.05, 1.95), st.floats(0.01, 0.99))
def test_constant_positive_inside_certificate(L, ratio, lam, frac):
    cert = stepsize_certificate(L, ratio * L, lam)
    assert cert.c(frac * cert.gamma_hi) > 0


def test_simple_bound_doubling_rule():
    for convex in (True, False):
        sup, c = simple_bound(2.0, 1.0, convex)
        g = 0.3 * sup
        assert c(g / 2.0, 4.0) == pytest.approx(2.0 * c(g, 2.0), rel=1e-14)
    assert simple_bound(1.0, 1.0, True)[1](0.5) == 1.0
    assert simple_bound(1.0, 1.0, False)[1](0.25) == 1.0


# ------------------------------------------------------------- stepping


def test_drs_step_matches_definition():
    prob = CompositeProblem(catalog.quadratic([[1.0]]), catalog.one_norm(1.0, 1))
    u, v, s_next = drs_step(prob, 0.5, 1.0, [3.0])
    assert u[0] == pytest.approx(2.0)
    assert v[0] == pytest.approx(0.5)
    assert s_next[0] == pytest.approx(1.5)


@pytest.mark.parametrize("kind", testbed.RANDOM_KINDS)
def test_drs_fbs_consistency(kind, rng):
    prob = testbed.random_instance(5, 4, kind)
    gamma = 0.5 / prob.f.L
    for _ in range(30):
        s = rng.standard_normal(4) * 2
        u, v, _ = drs_step(prob, gamma, 1.0, s)
        w = eval_prox(prob.g, gamma, u - gamma * prob.f.grad(u))
        assert np.allclose(v, w, atol=1e-12, rtol=0)


def test_run_drs_half_square_example():
    prob = CompositeProblem(catalog.quadratic([[1.0]]), catalog.zero_prox(1))
    tr = run_drs(prob, DrsConfig(0.5, 1.0, max_iter=200, tol=1e-13), [4.0])
    assert tr.converged and len(tr) <= 200
    assert tr.residuals[-1] < 1e-12
    assert abs(tr.final["u"][0]) < 1e-12 and abs(tr.final["v"][0]) < 1e-12


def test_run_drs_rejects_uncertified_pair():
    prob = testbed.gamma_necessity_problem().problem
    with pytest.raises(StepsizeInfeasibleError):
        run_drs(prob, DrsConfig(1.0, 1.0), [3.0])
    with pytest.raises(PreconditionError):
        DrsConfig(0.5, 4.0)


def test_run_drs_flags_wrong_modulus():
    # declare L far too small: certified gamma is then too large and decrease fails
    Q = np.diag([50.0, -20.0])
    true = catalog.quadratic(Q)
    liar = catalog.SmoothOracle(true.value, true.grad, 1.0, -1.0, 2, prox=true.prox)
    prob = CompositeProblem(liar, catalog.one_norm(1.0, 2, bound=3.0))
    with pytest.raises(InvariantViolation) as exc:
        run_drs(prob, DrsConfig(0.4, 1.0, max_iter=500), [2.0, -1.0])
    assert "trace" in exc.value.diagnostics


@pytest.mark.parametrize("seed", range(4))
def test_run_drs_quadratic_one_norm_witness(seed):
    prob = testbed.random_instance(seed, 10, "convex-quadratic+l1")
    gamma = 0.5 / prob.f.L
    tr = run_drs(prob, DrsConfig(gamma, 1.0, max_iter=20000, tol=1e-9), np.ones(10))
    assert tr.converged
    w = stationarity_witness(prob, gamma, tr.final["u"], tr.final["v"])
    assert w.norm <= w.bound * (1 + 1e-12) + 1e-15
    assert w.norm <= 1e-6


def test_stationarity_witness_examples(rng):
    prob = CompositeProblem(catalog.quadratic([[1.0]]), catalog.zero_prox(1))
    xi, bound = stationarity_witness(prob, 1.0, [1.0], [0.0])
    assert xi[0] == 0.0 and bound == 2.0
    xi, bound = stationarity_witness(prob, 1.0, [0.7], [0.7])
    assert xi[0] == 0.0 and bound == 0.0
    for kind in testbed.RANDOM_KINDS:
        p = testbed.random_instance(3, 5, kind)
        gamma = 0.5 / p.f.L
        for _ in range(20):
            u, v, _ = drs_step(p, gamma, 1.0, rng.standard_normal(5))
            w = stationarity_witness(p, gamma, u, v)
            assert w.norm <= w.bound * (1 + 1e-12) + 1e-15


# ------------------------------------------------------------- adaptive


@pytest.mark.parametrize("kind", ["convex-quadratic+l1", "nonconvex-quadratic+l1"])
def test_adaptive_true_modulus_never_halves(kind):
    prob = testbed.random_instance(2, 6, kind)
    tr = run_adaptive_drs(prob, np.ones(6), prob.f.L, 1.0, convex=kind.startswith("convex"),
                          max_iter=5000)
    assert tr.meta["halvings"] == 0


def test_adaptive_zero_smooth_part_never_halves():
    prob = CompositeProblem(catalog.zero(3), catalog.one_norm(1.0, 3))
    tr = run_adaptive_drs(prob, np.array([3.0, -2.0, 0.5]), 1.0, 1.0, convex=True)
    assert tr.meta["halvings"] == 0 and tr.converged


@pytest.mark.parametrize("seed", range(4))
def test_adaptive_underestimate_halves_at_most_five_times(seed):
    prob = testbed.random_instance(seed, 6, "nonconvex-quadratic+l1")
    tr = run_adaptive_drs(prob, np.ones(6) * 1.5, prob.f.L / 16.0, 1.0, max_iter=20000)
    assert tr.meta["halvings"] <= 5
    assert tr.meta["L"] <= 2 * 16 * prob.f.L


def test_adaptive_rejects_bad_relaxation():
    prob = testbed.random_instance(0, 2, "convex-quadratic+l1")
    with pytest.raises(PreconditionError):
        run_adaptive_drs(prob, np.zeros(2), 1.0, 2.0)


# ------------------------------------------------------------- diagnostics


def test_rate_report_contractive_instance():
    prob = testbed.random_instance(1, 5, "convex-quadratic+l1")
    gamma = 0.5 / prob.f.L
    tr = run_drs(prob, DrsConfig(gamma, 1.0, max_iter=1000, tol=1e-300), np.ones(5) * 3)
    rep = residual_rate_report(tr)
    assert rep.ok
    assert rep.telescoped_sum <= rep.telescoped_bound + rep.telescoped_slack


def test_rate_report_finite_termination():
    prob = CompositeProblem(catalog.quadratic([[1.0]]), catalog.one_norm(5.0, 1))
    tr = run_drs(prob, DrsConfig(0.5, 1.0, max_iter=50), [0.0])
    rep = residual_rate_report(tr)
    assert rep.finite_termination and rep.ok


def test_rate_report_needs_certified_trace():
    prob = testbed.gamma_necessity_problem().problem
    tr = run_drs(prob, DrsConfig(1.5, 1.0, max_iter=20, unsafe=True), [3.0])
    with pytest.raises(PreconditionError):
        residual_rate_report(tr)


def test_marp_whole_space_is_identity(rng):
    s = rng.standard_normal(2)
    rep = marp_equivalence_check(None, None, 1.0, 1.0, 0.5, 1.0, s)
    assert np.allclose(rep.drs_point, s) and np.allclose(rep.marp_point, s)


def test_marp_random_balls(rng):
    for _ in range(50):
        A = Ball(rng.standard_normal(2), float(rng.uniform(0.2, 2)))
        B = Ball(rng.standard_normal(2), float(rng.uniform(0.2, 2)))
        rep = marp_equivalence_check(A, B, 1.0, 1.0, 0.5, 1.0, rng.standard_normal(2) * 3)
        assert rep.discrepancy <= 1e-12
        assert rep.p == pytest.approx(2 / 3) and rep.q == pytest.approx(2 / 3)


def test_marp_indicator_is_reflection(rng):
    A = Ball(np.zeros(2), 1.0)
    B = Halfspace(np.array([1.0, -1.0]), 0.2)
    for _ in range(50):
        rep = marp_equivalence_check(A, B, 2.0, math.inf, 0.4, 1.3, rng.standard_normal(2) * 3)
        assert rep.q == 2.0
        assert rep.discrepancy <= 1e-12


# ------------------------------------------------------------- tightness of 1/L


def test_gamma_fixture_converges_at_exactly_one_over_L():
    # the deterministic tie-break of the projection onto {-1, 1} removes the stall
    prob = testbed.gamma_necessity_problem().problem
    tr = run_drs(prob, DrsConfig(1.0, 1.0, max_iter=10000, unsafe=True), [3.0])
    assert tr.converged


def test_gamma_fixture_stalls_just_beyond_one_over_L():
    prob = testbed.gamma_necessity_problem().problem
    tr = run_drs(prob, DrsConfig(1.01, 1.0, max_iter=10000, unsafe=True), [3.0])
    assert not tr.converged
    assert tr.residuals[-1000:].min() >= 0.5


def test_certified_decrease_on_dre_directly(rng):
    prob = testbed.random_instance(9, 3, "quadratic+finite-set")
    cert = stepsize_certificate(prob.f.L, prob.f.sigma, 1.2)
    gamma = 0.7 * cert.gamma_hi
    c = cert.c(gamma)
    for _ in range(200):
        s = rng.standard_normal(3) * 3
        _, _, s1 = drs_step(prob, gamma, 1.2, s)
        lhs = eval_dre(prob, gamma, s).dre_value - eval_dre(prob, gamma, s1).dre_value
        need = c / (1 + gamma * prob.f.L) ** 2 * float((s - s1) @ (s - s1))
        assert lhs >= need - 1e-10 * max(1.0, abs(eval_dre(prob, gamma, s).dre_value))
