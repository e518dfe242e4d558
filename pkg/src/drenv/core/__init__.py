"""Function oracles, the built-in catalog and numerical property audits."""

from .oracles import (
    CompositeProblem,
    DrenvError,
    InnerSolverError,
    InvariantViolation,
    PreconditionError,
    ProxableOracle,
    SmoothOracle,
    StepsizeInfeasibleError,
    as_point,
    eval_prox,
    inv_neg_part,
    moreau_envelope,
    neg_part,
    pos_part,
    smooth_prox,
)
from . import catalog
from .checks import (
    check_hypoconvex_lower_bound,
    check_moreau_gradient,
    check_smooth_prox_regularity,
    check_subdiff_smoothness,
)
from .lattice import LatticeMin, lattice_minimize, lattice_prox

__all__ = [
    "CompositeProblem",
    "DrenvError",
    "InnerSolverError",
    "InvariantViolation",
    "PreconditionError",
    "ProxableOracle",
    "SmoothOracle",
    "StepsizeInfeasibleError",
    "as_point",
    "eval_prox",
    "inv_neg_part",
    "moreau_envelope",
    "neg_part",
    "pos_part",
    "smooth_prox",
    "catalog",
    "check_hypoconvex_lower_bound",
    "check_moreau_gradient",
    "check_smooth_prox_regularity",
    "check_subdiff_smoothness",
    "LatticeMin",
    "lattice_minimize",
    "lattice_prox",
]
