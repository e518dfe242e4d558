"""Command-line interface: ``drenv solve | certificate | sweep | selftest``.

Exit codes of ``solve``: 0 converged, 2 iteration limit reached, 3 the
certificate was violated or the stepsize is not certified, 4 invalid
configuration.  Output files are placed in ``$DRENV_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .. import testbed
from ..admm import AdmmState, quadratic_admm, run_adaptive_admm, run_admm
from ..core import (InnerSolverError, InvariantViolation, PreconditionError,
                    StepsizeInfeasibleError, catalog)
from ..core.oracles import CompositeProblem
from ..drs import DrsConfig, run_adaptive_drs, run_drs, stepsize_certificate
from .config import ConfigError, RunConfig, load_config, resolve_output

__all__ = ["main", "build_problem", "cmd_solve", "cmd_certificate", "cmd_sweep", "cmd_selftest",
           "EXIT_CONVERGED", "EXIT_MAX_ITER", "EXIT_CERTIFICATE", "EXIT_CONFIG"]

EXIT_CONVERGED, EXIT_MAX_ITER, EXIT_CERTIFICATE, EXIT_CONFIG = 0, 2, 3, 4
ADMM_ALGORITHMS = ("admm", "adaptive-admm")


def build_problem(cfg: RunConfig):
    """Instantiate the problem of a configuration.

    Returns a :class:`CompositeProblem` for DRS-type algorithms and an
    :class:`~drenv.admm.AdmmProblem` for ADMM-type algorithms.
    """
    desc = cfg.problem
    kind = desc["kind"]
    admm = cfg.algorithm in ADMM_ALGORITHMS
    if kind == "random":
        n = desc["n"]
        if isinstance(n, bool) or not isinstance(n, int):
            raise ConfigError("problem.n must be an integer")
        return testbed.random_instance(cfg.seed, n, desc["instance"], admm=admm)
    if kind == "admm-quadratic":
        g = catalog.from_config(desc["g"], "nonsmooth", np.atleast_2d(desc["A"]).shape[0])
        P = quadratic_admm(desc["Q"], desc.get("q"), desc["A"], g, desc.get("B"), desc.get("b"),
                           desc.get("L"), desc.get("sigma"))
        return P if admm else P.to_composite()
    if admm:
        raise ConfigError(f"problem kind {kind!r} has no ADMM form")
    if kind == "gamma-necessity":
        return testbed.gamma_necessity_problem(desc["L"], desc["sigma"], desc["t"]).problem
    if kind == "lambda-necessity":
        return testbed.lambda_necessity_problem(desc["L"], desc["sigma"], desc["p"]).problem
    dim = desc.get("dim")
    f = catalog.from_config(desc["f"], "smooth", dim)
    g = catalog.from_config(desc["g"], "nonsmooth", dim if dim is not None else f.dim)
    return CompositeProblem(f, g)


def _start(cfg: RunConfig, dim: int) -> np.ndarray:
    if cfg.start is None:
        return np.zeros(dim)
    if len(cfg.start) != dim:
        raise ConfigError(f"start has length {len(cfg.start)}, expected {dim}")
    return np.asarray(cfg.start, dtype=np.float64)


def _run(cfg: RunConfig):
    prob = build_problem(cfg)
    alg = cfg.algorithm
    if alg in ("drs", "prs"):
        return run_drs(prob, DrsConfig(cfg.gamma, cfg.lam, cfg.max_iter, cfg.tol, cfg.unsafe),
                       _start(cfg, prob.dim))
    if alg == "adaptive-drs":
        return run_adaptive_drs(prob, _start(cfg, prob.dim), cfg.L_init, cfg.lam, tol=cfg.tol,
                                max_iter=cfg.max_iter)
    p, m, n = prob.shape
    st = AdmmState.initial(_start(cfg, m), np.zeros(n), np.zeros(p))
    if alg == "admm":
        return run_admm(prob, cfg.beta, cfg.lam, st, tol=cfg.tol, max_iter=cfg.max_iter,
                        unsafe=cfg.unsafe)
    return run_adaptive_admm(prob, cfg.L_init, st, cfg.beta, tol=cfg.tol, max_iter=cfg.max_iter)


def cmd_solve(cfg: RunConfig, output: Optional[str] = None, out=print) -> int:
    """Run a configuration and write its CSV trace; returns the exit status."""
    path = resolve_output(output or cfg.output)
    try:
        trace = _run(cfg)
    except ConfigError as exc:
        out(f"config error: {exc}")
        return EXIT_CONFIG
    except InvariantViolation as exc:
        tr = exc.diagnostics.get("trace")
        if tr is not None:
            tr.to_csv(path)
        out(f"certificate violation: {exc}")
        return EXIT_CERTIFICATE
    except (StepsizeInfeasibleError, InnerSolverError) as exc:
        out(f"not certified: {exc}")
        return EXIT_CERTIFICATE
    except PreconditionError as exc:
        out(f"config error: {exc}")
        return EXIT_CONFIG
    trace.to_csv(path)
    s = trace.summary()
    out(f"{cfg.algorithm}: {s['reason']} after {s['iterations']} iterations, "
        f"final residual {trace.residuals[-1]:.3e} -> {path}" if len(trace) else
        f"{cfg.algorithm}: {s['reason']} with no iterations -> {path}")
    return EXIT_CONVERGED if trace.converged else EXIT_MAX_ITER


def cmd_certificate(L: float, sigma: float, lam: float, out=print) -> int:
    """Print the certified stepsize interval and ``c`` at its quartiles."""
    try:
        cert = stepsize_certificate(L, sigma, lam)
    except PreconditionError as exc:
        out(f"error: {exc}")
        return EXIT_CONFIG
    out(f"L={L!r} sigma={sigma!r} lambda={lam!r}")
    if not cert.feasible:
        out("infeasible")
        return 0
    lo, hi = cert.interval
    out(f"interval ({lo!r}, {hi!r})")
    out("gamma,c")
    for g in cert.quartiles():
        out(f"{g!r},{cert.c(g)!r}")
    return 0


def _sweep_cell(args):
    lam, r, L, empirical, K = args
    return testbed.sweep_rows([lam], [r], L, empirical, K)[0]


def cmd_sweep(lams: Sequence[float], ratios: Sequence[float], output: str, L: float = 1.0,
              empirical: bool = False, K: int = 2000, jobs: int = 1, out=print) -> int:
    """Write the sweep summary CSV; one row per ``(lambda, sigma/L)`` cell."""
    path = resolve_output(output)
    try:
        cells = [(float(lam), float(r), L, empirical, K) for lam in lams for r in ratios]
        for lam, r, *_ in cells:
            if not (0 < lam < 4 and -1 <= r <= 1):
                raise PreconditionError(f"invalid cell lambda={lam}, sigma/L={r}")
        if jobs > 1 and len(cells) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                rows = list(ex.map(_sweep_cell, cells))
        else:
            rows = [_sweep_cell(c) for c in cells]
    except PreconditionError as exc:
        out(f"config error: {exc}")
        return EXIT_CONFIG
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(testbed.SWEEP_HEADER)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    out(f"sweep: {len(rows)} rows -> {path}")
    return 0


def cmd_selftest(out=print) -> int:
    from .selftest import run_selftest
    return 0 if run_selftest(out) else 1


def _floats(text: str) -> list:
    text = text.strip()
    return [float(t) for t in text.split(",")] if text else []


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drenv", description="Douglas-Rachford and ADMM toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run a configuration file and write a CSV trace")
    s.add_argument("config")
    s.add_argument("--output", help="override the trace path of the configuration")
    c = sub.add_parser("certificate", help="print the certified stepsize interval")
    c.add_argument("L", type=float)
    c.add_argument("sigma", type=float)
    c.add_argument("lam", type=float)
    w = sub.add_parser("sweep", help="certified stepsize bounds over a grid of sigma/L")
    w.add_argument("--lam", type=_floats, default=[1.0], help="comma-separated relaxations")
    w.add_argument("--ratios", type=_floats, default=None,
                   help="comma-separated sigma/L values (overrides the range options)")
    w.add_argument("--sigma-min", type=float, default=-1.0)
    w.add_argument("--sigma-max", type=float, default=1.0)
    w.add_argument("--steps", type=int, default=9, help="grid points (0 gives an empty grid)")
    w.add_argument("--L", type=float, default=1.0)
    w.add_argument("--empirical", action="store_true",
                   help="bisect the stall transition of the gamma fixture per cell")
    w.add_argument("--K", type=int, default=2000, help="iterations per empirical run")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--output", default="sweep.csv")
    sub.add_parser("selftest", help="run the invariant suites")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "solve":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}")
            return EXIT_CONFIG
        return cmd_solve(cfg, args.output)
    if args.command == "certificate":
        return cmd_certificate(args.L, args.sigma, args.lam)
    if args.command == "sweep":
        if args.ratios is not None:
            ratios = args.ratios
        elif args.steps <= 0:
            ratios = []
        elif args.steps == 1:
            ratios = [args.sigma_min]
        else:
            ratios = list(np.linspace(args.sigma_min, args.sigma_max, args.steps))
        return cmd_sweep(args.lam, ratios, args.output, args.L, args.empirical, args.K, args.jobs)
    return cmd_selftest()


if __name__ == "__main__":
    sys.exit(main())
