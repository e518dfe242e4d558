"""Douglas-Rachford splitting: certificates, solvers and diagnostics."""

from .certificate import (
    StepsizeCertificate,
    decrease_constant_closed_form,
    decrease_constant_formula,
    simple_bound,
    stepsize_certificate,
    sufficient_decrease_constant,
)
from .solver import (
    DrsConfig,
    StationarityWitness,
    drs_step,
    run_adaptive_drs,
    run_drs,
    stationarity_witness,
)
from .diagnostics import MarpReport, RateReport, marp_equivalence_check, residual_rate_report

__all__ = [
    "StepsizeCertificate",
    "decrease_constant_closed_form",
    "decrease_constant_formula",
    "simple_bound",
    "stepsize_certificate",
    "sufficient_decrease_constant",
    "DrsConfig",
    "StationarityWitness",
    "drs_step",
    "run_adaptive_drs",
    "run_drs",
    "stationarity_witness",
    "MarpReport",
    "RateReport",
    "marp_equivalence_check",
    "residual_rate_report",
]
