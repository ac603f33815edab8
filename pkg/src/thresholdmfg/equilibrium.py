"""Stationary mean field equilibrium via bisection on the best-response map.

For a frozen population average z the best response is a threshold policy
theta(z); the stationary law under that policy has mean Gamma(z). A stationary
equilibrium is a fixed point z* = Gamma(z*). Under the product-form cost a
larger z lowers the effective effort cost, lowering theta(z) and hence
Gamma(z), so g(z) = Gamma(z) - z is decreasing and bisection is globally
convergent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .kernels import TransitionKernel
from .mdp import (
    CostModel,
    Threshold,
    ThresholdKind,
    ValueFunction,
    bellman_operator,
    extract_threshold,
    solve_value_function,
)
from .numerics import Grid, GridFunction, integrate, make_grid
from .stationary import StationaryDistribution, stationary_distribution

__all__ = [
    "GameModel",
    "EquilibriumSolution",
    "BisectionError",
    "gamma_existence_lower_bound",
    "best_response_map",
    "solve_equilibrium",
    "verify_equilibrium",
    "VerificationReport",
]


class BisectionError(RuntimeError):
    """The fixed-point bisection lost its bracket or hit the step cap."""


@dataclass(frozen=True, eq=False)
class GameModel:
    """A mean field game instance: kernel, cost and numerical tolerances."""

    kernel: TransitionKernel
    cost: CostModel
    grid: Grid = field(default_factory=lambda: make_grid(2000))
    bellman_tol: float = 1e-8
    fixed_point_tol: float = 1e-6
    threshold_tol: Optional[float] = None

    def __post_init__(self):
        if self.bellman_tol <= 0 or self.fixed_point_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class EquilibriumSolution:
    """The equilibrium tuple (v, theta, mu, z) with its residuals."""

    v: ValueFunction
    theta: Threshold
    mu: StationaryDistribution
    z: float
    residual_z: float
    residual_bellman: float
    warnings: tuple = ()

    def summary(self) -> dict:
        """JSON-friendly digest of the solution."""
        return {
            "z": self.z,
            "theta": {
                "kind": self.theta.kind.value,
                "value": self.theta.value,
            },
            "v0": float(self.v.v.values[0]),
            "atom0": self.mu.atom0,
            "residual_z": self.residual_z,
            "residual_bellman": self.residual_bellman,
            "grid_n": self.v.v.grid.n,
            "warnings": list(self.warnings),
        }


def gamma_existence_lower_bound(model: GameModel, z_count: int = 21) -> float:
    """Effort-cost level below which the zero threshold may occur.

    Returns beta * max over z of int [R(y,z) - R(0,z)] Q0(dy|0); an effort
    cost strictly above this rules out the always-act equilibrium for every
    mean field. The condition is sufficient only, so callers should warn
    rather than refuse when gamma falls below it.
    """
    x = model.grid.nodes
    q0 = model.kernel.density(x, 0.0)
    beta = model.cost.beta
    best = -np.inf
    for z in np.linspace(0.0, 1.0, z_count):
        R = np.asarray(model.cost.R(x, z), dtype=float)
        val = float(np.trapezoid((R - float(model.cost.R(0.0, z))) * q0, x))
        best = max(best, val)
    return beta * best


class BestResponse(NamedTuple):
    theta: Threshold
    z_out: float
    vf: ValueFunction


def best_response_map(
    model: GameModel, z: float, v_init: Optional[GridFunction] = None
) -> BestResponse:
    """One application of the composed map z -> theta(z) -> Gamma(z).

    Gamma(z) is the mean of the stationary law under theta(z); the degenerate
    thresholds map to the exact means 0 (always act) and 1 (never act).
    """
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"mean field z must lie in [0,1], got {z}")
    vf = solve_value_function(
        model.cost, model.kernel, z, model.grid, tol=model.bellman_tol, v_init=v_init
    )
    theta = extract_threshold(vf, model.cost, model.kernel, tol_D=model.threshold_tol)
    if theta.kind is ThresholdKind.ZERO:
        return BestResponse(theta, 0.0, vf)
    if theta.kind in (ThresholdKind.ONE, ThresholdKind.ABOVE_ONE):
        return BestResponse(theta, 1.0, vf)
    mu = stationary_distribution(model.kernel, theta, model.grid)
    return BestResponse(theta, mu.mean, vf)


def _assemble(model: GameModel, z: float, br: BestResponse, warnings) -> EquilibriumSolution:
    mu = stationary_distribution(model.kernel, br.theta, model.grid)
    return EquilibriumSolution(
        v=br.vf,
        theta=br.theta,
        mu=mu,
        z=float(z),
        residual_z=abs(br.z_out - z),
        residual_bellman=br.vf.residual,
        warnings=tuple(warnings),
    )


def solve_equilibrium(model: GameModel, max_steps: int = 200) -> EquilibriumSolution:
    """Find the stationary equilibrium by bisection on g(z) = Gamma(z) - z.

    g(0) >= 0 and g(1) <= 0 always since Gamma maps into [0,1]; boundary
    fixed points (everyone resetting, or nobody ever acting) are returned
    directly. Value iteration is warm started across bisection steps.
    """
    tol = model.fixed_point_tol
    warnings = []
    bound = gamma_existence_lower_bound(model)
    if model.cost.gamma <= bound:
        warnings.append(
            f"effort cost {model.cost.gamma:.6g} is at or below the sufficient "
            f"existence bound {bound:.6g}; solving anyway (the bound is not necessary)"
        )

    br0 = best_response_map(model, 0.0)
    if br0.z_out < -tol:
        raise BisectionError("no bracket: Gamma(0) < 0 signals a solver inconsistency")
    if br0.z_out <= tol:
        return _assemble(model, 0.0, br0, warnings)
    br1 = best_response_map(model, 1.0, v_init=br0.vf.v)
    if br1.z_out >= 1.0 - tol:
        return _assemble(model, 1.0, br1, warnings)

    lo, hi = 0.0, 1.0  # g(lo) >= 0, g(hi) <= 0
    v_prev = br1.vf.v
    br_mid = br1
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        br_mid = best_response_map(model, mid, v_init=v_prev)
        v_prev = br_mid.vf.v
        g = br_mid.z_out - mid
        if abs(g) <= tol or hi - lo <= tol:
            return _assemble(model, mid, br_mid, warnings)
        if g > 0.0:
            lo = mid
        else:
            hi = mid
    raise BisectionError(f"max bisection steps ({max_steps}) without |g| <= {tol}")


@dataclass(frozen=True)
class VerificationReport:
    """Residuals of the full equilibrium system, with a pass verdict."""

    residual_bellman: float
    residual_z: float
    stationarity_atom_defect: float
    stationarity_density_defect: float
    threshold_margin: float
    tol_bellman: float
    tol_z: float
    tol_stationarity: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "residual_bellman": self.residual_bellman,
            "residual_z": self.residual_z,
            "stationarity_atom_defect": self.stationarity_atom_defect,
            "stationarity_density_defect": self.stationarity_density_defect,
            "threshold_margin": self.threshold_margin,
            "tolerances": {
                "bellman": self.tol_bellman,
                "z": self.tol_z,
                "stationarity": self.tol_stationarity,
            },
            "passed": self.passed,
        }


def _density_residual(model: GameModel, sol: EquilibriumSolution, probes: int = 40) -> float:
    """Sup defect of the stationary density equation at sampled nodes."""
    if sol.theta.kind is not ThresholdKind.INTERIOR:
        return 0.0
    grid = model.grid
    th = sol.theta.value
    p = sol.mu.density
    worst = 0.0
    idx = np.unique(np.linspace(0, grid.n, probes).astype(int))
    # integration in y stops at theta < 1, so the absorbing node never matters
    q_at = np.zeros(grid.n + 1)
    for i in idx:
        xi = grid.nodes[i]
        upper = min(xi, th)
        q_at[:-1] = model.kernel.density(xi, grid.nodes[:-1])
        prod = GridFunction(grid, q_at * p.values)
        rhs = integrate(prod, 0.0, upper) if upper > 0 else 0.0
        rhs += sol.mu.atom0 * float(model.kernel.density(xi, 0.0))
        worst = max(worst, abs(float(p.values[i]) - rhs))
    return worst


def verify_equilibrium(model: GameModel, sol: EquilibriumSolution) -> VerificationReport:
    """Recompute every residual of the equilibrium system; reports, never raises.

    Checks the Bellman defect of v, the fixed-point defect |Gamma(z) - z|,
    the atom identity pi0 = mu([theta,1]), the stationary density equation at
    sampled nodes, and the act/wait margin at an interior threshold.
    """
    tv = bellman_operator(sol.v.v, model.cost, model.kernel, sol.z)
    residual_bellman = float(np.max(np.abs(tv.values - sol.v.v.values)))

    if sol.theta.kind is ThresholdKind.ZERO:
        z_out = 0.0
    elif sol.theta.kind is ThresholdKind.INTERIOR:
        z_out = stationary_distribution(model.kernel, sol.theta, model.grid).mean
    else:
        z_out = 1.0
    residual_z = abs(z_out - sol.z)

    if sol.theta.kind is ThresholdKind.INTERIOR:
        atom_defect = abs(
            integrate(sol.mu.density, sol.theta.value, 1.0) - sol.mu.atom0
        )
        D = (
            model.cost.beta * sol.v.G(sol.theta.value)
            - model.cost.beta * sol.v.v.values[0]
            - model.cost.gamma
        )
        margin = abs(float(D))
    else:
        atom_defect = 0.0
        margin = 0.0
    density_defect = _density_residual(model, sol)

    tol_b = 10.0 * model.bellman_tol
    tol_z = 10.0 * model.fixed_point_tol
    # quadrature bias of the stationary solve scales like h^2 / (1 - theta)^2
    th_cut = sol.theta.value if sol.theta.kind is ThresholdKind.INTERIOR else 0.0
    tol_s = max(1e-6, 1e3 * model.grid.h**2 / max(1.0 - th_cut, model.grid.h) ** 2)
    passed = (
        residual_bellman <= tol_b
        and residual_z <= tol_z
        and atom_defect <= tol_s
        and density_defect <= tol_s
        and margin <= max(tol_b, 10.0 * (model.threshold_tol or 10.0 * model.bellman_tol))
    )
    return VerificationReport(
        residual_bellman=residual_bellman,
        residual_z=residual_z,
        stationarity_atom_defect=atom_defect,
        stationarity_density_defect=density_defect,
        threshold_margin=margin,
        tol_bellman=tol_b,
        tol_z=tol_z,
        tol_stationarity=tol_s,
        passed=passed,
    )
