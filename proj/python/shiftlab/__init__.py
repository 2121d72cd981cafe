"""Covariate and concept shift metrics, bounds and DG evaluation tools."""

from ._core import (
    ComputationError,
    DiscreteDomainPair,
    EnumerableClass,
    LossFunction,
    ValidationError,
    dg_metrics,
    empirical_rademacher,
    empirical_residual,
    enumerate_all_labelings,
    exact_concept_shift,
    exact_discrepancy,
    exact_shift_report,
    kl_decomposition,
    l1_distance,
    load_pair,
    pair_from_json,
    population_lower_bound,
    population_upper_bound,
    prop1_discrepancy,
    run_cli,
    verify_bounds,
)

__all__ = [
    "ComputationError",
    "DiscreteDomainPair",
    "EnumerableClass",
    "LossFunction",
    "ValidationError",
    "dg_metrics",
    "empirical_rademacher",
    "empirical_residual",
    "enumerate_all_labelings",
    "exact_concept_shift",
    "exact_discrepancy",
    "exact_shift_report",
    "kl_decomposition",
    "l1_distance",
    "load_pair",
    "pair_from_json",
    "population_lower_bound",
    "population_upper_bound",
    "prop1_discrepancy",
    "run_cli",
    "verify_bounds",
]
