"""Solvers for binary-action mean field games with threshold policies on [0,1]."""

from .equilibrium import (
    EquilibriumSolution,
    GameModel,
    best_response_map,
    gamma_existence_lower_bound,
    solve_equilibrium,
    verify_equilibrium,
)
from .kernels import (
    MultiplicativeGapKernel,
    TabulatedKernel,
    TransitionKernel,
    UniformKernel,
    check_cdf_dominance,
    check_stochastic_monotonicity,
    expected_hitting_time,
)
from .mdp import (
    CostModel,
    Threshold,
    ThresholdKind,
    ValueFunction,
    extract_threshold,
    gamma_bounds,
    kernel_expectation,
    linear_cost,
    power_cost,
    solve_value_function,
    threshold_cost_curve,
)
from .numerics import Grid, GridFunction, integrate, make_grid, solve_volterra
from .sensitivity import (
    SensitivityResult,
    TwoBranchFunction,
    finite_difference_check,
    solve_sensitivities,
    solve_uniform_equilibrium_closed_form,
    solve_uniform_sensitivity_closed_form,
    solve_w_basis,
)
from .simulate import (
    CycleStats,
    SimConfig,
    SimStats,
    cycle_statistics,
    empirical_vs_stationary,
    evaluate_policy_cost,
    simulate_population,
)
from .stationary import (
    StationaryDistribution,
    closed_form_uniform_stationary,
    mean_field_of_theta,
    stationary_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "GridFunction",
    "make_grid",
    "integrate",
    "solve_volterra",
    "TransitionKernel",
    "UniformKernel",
    "MultiplicativeGapKernel",
    "TabulatedKernel",
    "check_stochastic_monotonicity",
    "check_cdf_dominance",
    "expected_hitting_time",
    "CostModel",
    "linear_cost",
    "power_cost",
    "Threshold",
    "ThresholdKind",
    "ValueFunction",
    "solve_value_function",
    "extract_threshold",
    "kernel_expectation",
    "gamma_bounds",
    "threshold_cost_curve",
    "StationaryDistribution",
    "stationary_distribution",
    "mean_field_of_theta",
    "closed_form_uniform_stationary",
    "GameModel",
    "EquilibriumSolution",
    "gamma_existence_lower_bound",
    "best_response_map",
    "solve_equilibrium",
    "verify_equilibrium",
    "TwoBranchFunction",
    "SensitivityResult",
    "solve_w_basis",
    "solve_sensitivities",
    "solve_uniform_equilibrium_closed_form",
    "solve_uniform_sensitivity_closed_form",
    "finite_difference_check",
    "SimConfig",
    "SimStats",
    "CycleStats",
    "simulate_population",
    "cycle_statistics",
    "empirical_vs_stationary",
    "evaluate_policy_cost",
]
