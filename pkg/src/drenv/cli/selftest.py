"""Invariant suites run by ``drenv selftest``.

Each suite is a small, seeded, desk-scale check returning ``(ok, detail)``.
"""

from __future__ import annotations

import math
from typing import Callable, List, Tuple

import numpy as np

from .. import testbed
from ..admm import AdmmState, admm_step, admm_to_drs_vars, penalty_certificate
from ..core import check_smooth_prox_regularity
from ..drs import (DrsConfig, drs_step, marp_equivalence_check, residual_rate_report, run_drs,
                   stepsize_certificate)
from ..core.catalog import Ball, Halfspace
from ..envelope import dre_from_pair, sandwich_check

__all__ = ["SUITES", "run_selftest"]


def _certificate() -> Tuple[bool, str]:
    a = stepsize_certificate(1.0, 1.0, 2.0)
    b = stepsize_certificate(1.0, 0.0, 2.0)
    c = stepsize_certificate(1.0, -1.0, 1.0)
    ok = a.interval == (0.0, 1.0) and not b.feasible and c.interval == (0.0, 0.5)
    return ok, f"(1,1,2)->{a.interval} (1,0,2)->{'empty' if not b.feasible else b.interval}"


def _certified_runs() -> Tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst = math.inf
    for i in range(12):
        kind = testbed.RANDOM_KINDS[i % 4]
        prob = testbed.random_instance(i, 5, kind)
        cert = stepsize_certificate(prob.f.L, prob.f.sigma, 1.0)
        gamma = float(rng.uniform(0.1, 0.9)) * cert.gamma_hi
        tr = run_drs(prob, DrsConfig(gamma, 1.0, max_iter=2000), rng.standard_normal(5))
        rep = residual_rate_report(tr)
        worst = min(worst, rep.telescoped_bound + rep.telescoped_slack - rep.telescoped_sum)
    return worst >= 0, f"min telescoping slack {worst:.3e}"


def _sandwich() -> Tuple[bool, str]:
    rng = np.random.default_rng(1)
    prob = testbed.random_instance(3, 4, "convex-quadratic+l1")
    gamma = 0.5 / prob.f.L
    bad = sum(not sandwich_check(prob, gamma, rng.standard_normal(4) * 3).holds(1e-10)
              for _ in range(200))
    return bad == 0, f"{bad} violations in 200 points"


def _prox_regularity() -> Tuple[bool, str]:
    rng = np.random.default_rng(2)
    prob = testbed.random_instance(4, 4, "nonconvex-quadratic+l1")
    gamma = 0.5 / prob.f.L
    pairs = [(rng.standard_normal(4), rng.standard_normal(4)) for _ in range(200)]
    rep = check_smooth_prox_regularity(prob.f, gamma, pairs)
    return rep.max_violation <= 1e-10, f"max violation {rep.max_violation:.3e}"


def _bridge() -> Tuple[bool, str]:
    worst = 0.0
    for seed in range(3):
        P = testbed.random_instance(seed, 3, "convex-quadratic+l1", admm=True)
        prob = P.to_composite()
        beta = 2.0 * penalty_certificate(P.L, P.sigma, 1.0).beta_lo
        st = admm_step(P, beta, 1.0, AdmmState.initial(np.zeros(3), np.zeros(3), np.zeros(3)))
        s = admm_to_drs_vars(P, st)[0]
        for _ in range(50):
            u, v, s_next = drs_step(prob, 1.0 / beta, 1.0, s)
            sa, ua, va = admm_to_drs_vars(P, st)
            worst = max(worst, float(np.linalg.norm(sa - s)), float(np.linalg.norm(ua - u)),
                        float(np.linalg.norm(va - v)),
                        abs(dre_from_pair(prob, 1.0 / beta, u, v)
                            - P.lagrangian(beta, st.x, st.z, st.y)))
            st = admm_step(P, beta, 1.0, st)
            s = s_next
    return worst <= 1e-8, f"max discrepancy {worst:.3e}"


def _marp() -> Tuple[bool, str]:
    A = Ball(np.zeros(2), 1.0)
    B = Halfspace(np.array([1.0, 1.0]), 0.5)
    rng = np.random.default_rng(3)
    worst = max(marp_equivalence_check(A, B, 2.0, 3.0, 0.4, 1.0, rng.standard_normal(2) * 3)
                .discrepancy for _ in range(50))
    return worst <= 1e-12, f"max discrepancy {worst:.3e}"


def _tightness() -> Tuple[bool, str]:
    conv = testbed.gamma_necessity_experiment(1.0, -0.5, 2.0, 0.5, 1.0, K=2000)
    stall = testbed.gamma_necessity_experiment(1.0, -0.5, 2.0, 1.1, 1.0, K=2000)
    lam = testbed.lambda_necessity_experiment(1.0, 0.0, 2.0, 0.5, 1.5)
    ok = conv.converged and stall.stalled and abs(lam.tail_ratio - 0.5) <= 1e-6
    return ok, (f"gamma=0.5 converged={conv.converged}, gamma=1.1 tail={stall.tail_min_residual:.3f},"
                f" lambda ratio={lam.tail_ratio:.6f}")


SUITES: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ("certificate", _certificate),
    ("certified-decrease", _certified_runs),
    ("sandwich", _sandwich),
    ("prox-regularity", _prox_regularity),
    ("admm-bridge", _bridge),
    ("marp", _marp),
    ("tightness", _tightness),
]


def run_selftest(out=print) -> bool:
    """Run every suite, print one PASS/FAIL line each and return overall success."""
    all_ok = True
    for name, fun in SUITES:
        try:
            ok, detail = fun()
        except Exception as exc:  # report, do not abort the remaining suites
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok
