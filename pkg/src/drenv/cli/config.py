"""Run configuration files.

A run is described by one TOML document::

    algorithm = "drs"          # drs | prs | admm | adaptive-drs | adaptive-admm
    gamma = 0.5                # drs, prs
    beta = 2.0                 # admm (optional initial penalty for adaptive-admm)
    lam = 1.0                  # relaxation, in (0, 4); prs forces 2
    L_init = 0.25              # adaptive variants
    tol = 1e-8
    max_iter = 10000
    seed = 0
    unsafe = false
    output = "trace.csv"
    start = [0.0, 0.0]         # optional starting point s0 (x0 for ADMM)

    [problem]
    kind = "random"            # random | gamma-necessity | lambda-necessity
                               # | composite | admm-quadratic
    instance = "convex-quadratic+l1"
    n = 10

Problem tables by kind:

``random``
    ``instance`` (one of :data:`drenv.testbed.RANDOM_KINDS`), ``n``.  The
    top-level ``seed`` selects the instance; ADMM algorithms receive the
    ADMM variant.
``gamma-necessity``
    ``L``, ``sigma``, ``t``.
``lambda-necessity``
    ``L``, ``sigma``, ``p``.
``composite``
    Sub-tables ``[problem.f]`` and ``[problem.g]`` holding catalog records
    (``kind`` plus parameters), optional ``dim``.
``admm-quadratic``
    ``Q``, optional ``q``, ``A``, optional ``B`` (diagonal, default ``-I``)
    and ``b``, optional ``L`` and ``sigma`` of the image function, and a
    ``[problem.g]`` catalog record.  Matrices are row-major nested arrays.

Every table is validated before any numerics run; unknown fields are
rejected.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import asdict, dataclass
from typing import Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..core import PreconditionError

__all__ = ["ALGORITHMS", "PROBLEM_KINDS", "RunConfig", "ConfigError", "parse_config",
           "load_config", "dump_config", "resolve_output"]

ALGORITHMS = ("drs", "prs", "admm", "adaptive-drs", "adaptive-admm")
PROBLEM_KINDS = {
    "random": ({"instance", "n"}, set()),
    "gamma-necessity": ({"L", "sigma", "t"}, set()),
    "lambda-necessity": ({"L", "sigma", "p"}, set()),
    "composite": ({"f", "g"}, {"dim"}),
    "admm-quadratic": ({"Q", "A", "g"}, {"q", "B", "b", "L", "sigma"}),
}
OUTPUT_ENV = "DRENV_OUTPUT_DIR"


class ConfigError(PreconditionError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    """Validated run configuration (see the module docstring for the grammar)."""

    problem: dict
    algorithm: str = "drs"
    gamma: Optional[float] = None
    beta: Optional[float] = None
    lam: float = 1.0
    L_init: Optional[float] = None
    tol: float = 1e-8
    max_iter: int = 10_000
    seed: int = 0
    unsafe: bool = False
    output: str = "trace.csv"
    start: Optional[list] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


_FIELDS = set(RunConfig.__dataclass_fields__)


def _num(rec: dict, key: str, positive: bool = False) -> Optional[float]:
    v = rec.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key} must be a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{key} must be positive, got {v!r}")
    return float(v)


def _validate_problem(prob) -> dict:
    if not isinstance(prob, dict):
        raise ConfigError("[problem] table is required")
    kind = prob.get("kind")
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"unknown problem kind {kind!r}; expected one of {sorted(PROBLEM_KINDS)}")
    required, optional = PROBLEM_KINDS[kind]
    keys = set(prob) - {"kind"}
    missing = required - keys
    if missing:
        raise ConfigError(f"problem kind {kind!r} is missing {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise ConfigError(f"problem kind {kind!r}: unknown fields {sorted(unknown)}")
    for key in ("f", "g"):
        if key in prob and not (isinstance(prob[key], dict) and "kind" in prob[key]):
            raise ConfigError(f"problem.{key} must be a table with a kind")
    return prob


def _validate(raw: dict) -> RunConfig:
    unknown = set(raw) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown fields {sorted(unknown)}")
    if "problem" not in raw:
        raise ConfigError("[problem] table is required")
    alg = raw.get("algorithm", "drs")
    if alg not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")
    lam = _num(raw, "lam")
    if lam is None:
        lam = 2.0 if alg == "prs" else 1.0
    if not 0 < lam < 4:
        raise ConfigError(f"lam must lie in (0, 4), got {lam}")
    if alg == "prs" and lam != 2.0:
        raise ConfigError("prs requires lam = 2")
    gamma, beta = _num(raw, "gamma", True), _num(raw, "beta", True)
    L_init = _num(raw, "L_init", True)
    if alg in ("drs", "prs") and gamma is None:
        raise ConfigError(f"{alg} requires gamma")
    if alg == "admm" and beta is None:
        raise ConfigError("admm requires beta")
    if alg.startswith("adaptive") and L_init is None:
        raise ConfigError(f"{alg} requires L_init")
    if alg == "adaptive-admm" and lam != 1.0:
        raise ConfigError("adaptive-admm runs with lam = 1")
    tol = _num(raw, "tol", True)
    mi = raw.get("max_iter", 10_000)
    if isinstance(mi, bool) or not isinstance(mi, int) or mi < 1:
        raise ConfigError(f"max_iter must be a positive integer, got {mi!r}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    unsafe = raw.get("unsafe", False)
    if not isinstance(unsafe, bool):
        raise ConfigError("unsafe must be a boolean")
    output = raw.get("output", "trace.csv")
    if not isinstance(output, str) or not output:
        raise ConfigError("output must be a nonempty string")
    start = raw.get("start")
    if start is not None:
        if not isinstance(start, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in start):
            raise ConfigError("start must be an array of numbers")
        start = [float(v) for v in start]
    return RunConfig(_validate_problem(raw["problem"]), alg, gamma, beta, lam, L_init,
                     1e-8 if tol is None else tol, mi, seed, unsafe, output, start)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML run configuration.

    Raises
    ------
    ConfigError
        On syntax errors, unknown fields or invalid values.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return _validate(raw)


def load_config(path) -> RunConfig:
    """Read and validate a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Serialize a configuration to TOML (``parse_config`` inverts it)."""
    return tomli_w.dumps(cfg.to_dict())


def resolve_output(path: str) -> str:
    """Place ``path`` in ``$DRENV_OUTPUT_DIR`` when that variable is set."""
    base = os.environ.get(OUTPUT_ENV)
    if base:
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, os.path.basename(path))
    return path
