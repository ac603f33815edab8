"""Limiting distribution of the state under a threshold policy.

For an interior threshold the stationary law is an atom at 0 plus a density p
solving a Volterra equation driven by the kernel; degenerate thresholds give
point masses at 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .kernels import TransitionKernel
from .mdp import Threshold, ThresholdKind
from .numerics import Grid, GridFunction, integrate, solve_volterra

__all__ = [
    "StationaryDistribution",
    "MassDefectError",
    "stationary_distribution",
    "mean_field_of_theta",
    "closed_form_uniform_stationary",
    "UniformStationary",
]


class MassDefectError(RuntimeError):
    """The atom identity pi0 = mu([theta,1]) failed beyond grid tolerance."""


@dataclass(frozen=True)
class StationaryDistribution:
    """Atom at 0 plus density on (0,1]; atom_at_one flags the degenerate law."""

    theta: Threshold
    atom0: float
    density: GridFunction
    mean: float
    atom_at_one: bool = False

    def cdf(self, x) -> np.ndarray:
        """Distribution function at grid nodes <= x (vectorized)."""
        nodes = self.density.grid.nodes
        p = self.density.values
        cells = 0.5 * (p[1:] + p[:-1]) * self.density.grid.h
        c = self.atom0 + np.concatenate([[0.0], np.cumsum(cells)])
        out = np.interp(x, nodes, c)
        if self.atom_at_one:
            out = np.where(np.asarray(x) >= 1.0, 1.0, out)
        return out


def _as_threshold(theta: Union[Threshold, float]) -> Threshold:
    if isinstance(theta, Threshold):
        return theta
    return Threshold.interior(float(theta))


def stationary_distribution(
    kernel: TransitionKernel, theta: Union[Threshold, float], grid: Grid
) -> StationaryDistribution:
    """Stationary law of the state process under the theta-threshold policy.

    Interior case: solve the density equation with trial atom 1 by forward
    Volterra marching, then rescale so total mass is 1 (the solution depends
    linearly on the atom). The atom identity pi0 = int_theta^1 p is checked
    post hoc.
    """
    theta = _as_threshold(theta)
    zero_fn = GridFunction.constant(grid, 0.0)
    if theta.kind is ThresholdKind.ZERO:
        return StationaryDistribution(theta, atom0=1.0, density=zero_fn, mean=0.0)
    if theta.kind in (ThresholdKind.ONE, ThresholdKind.ABOVE_ONE):
        return StationaryDistribution(
            theta, atom0=0.0, density=zero_fn, mean=1.0, atom_at_one=True
        )

    th = theta.value
    forcing = GridFunction(grid, kernel.density(grid.nodes, 0.0))
    raw = solve_volterra(
        lambda x, y: kernel.density(x, y),
        forcing,
        direction="forward",
        upper_limit=th,
    )
    mass = integrate(raw)
    pi0 = 1.0 / (1.0 + mass)
    p = GridFunction(grid, raw.values * pi0)
    tail = integrate(p, th, 1.0)
    # defect scales with the density peak ~ 1/(1-theta); keep the gate a guard
    tol = max(1e-7, 100.0 * grid.h**2 / (1.0 - th) ** 2)
    if abs(tail - pi0) > 10.0 * tol:
        raise MassDefectError(
            f"atom identity defect {abs(tail - pi0):.3g} exceeds {10 * tol:.3g}"
        )
    mean = float(np.trapezoid(grid.nodes * p.values, grid.nodes))
    return StationaryDistribution(theta, atom0=pi0, density=p, mean=mean)


def mean_field_of_theta(
    kernel: TransitionKernel, theta: Union[Threshold, float], grid: Grid
) -> float:
    """Population-average state z(theta) under the theta-threshold policy."""
    return stationary_distribution(kernel, theta, grid).mean


@dataclass(frozen=True)
class UniformStationary:
    """Closed-form stationary law for the uniform kernel at an interior theta."""

    theta: float
    pi0: float
    z: float

    def density(self, x):
        x = np.asarray(x, dtype=float)
        below = np.minimum(x, self.theta)  # avoid 1/(1-x) at x = 1
        out = np.where(
            x < self.theta, self.pi0 / (1.0 - below), self.pi0 / (1.0 - self.theta)
        )
        return out if out.shape else float(out)


def closed_form_uniform_stationary(theta: float) -> UniformStationary:
    """Exact atom, mean and two-branch density for the uniform kernel.

    pi0 = 1 / (2 - ln(1-theta)) and z = pi0 ((1-theta)/2 - ln(1-theta)).
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0,1), got {theta}")
    log1m = np.log1p(-theta)
    pi0 = 1.0 / (2.0 - log1m)
    z = pi0 * ((1.0 - theta) / 2.0 - log1m)
    return UniformStationary(theta=theta, pi0=pi0, z=float(z))
