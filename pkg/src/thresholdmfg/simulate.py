"""Monte Carlo validation: population runs, regenerative cycles, policy costs.

The simulator is the model-free cross-check for every analytic object in the
package: population time averages against the stationary mean, cycle ratios
against the renewal identity, empirical histograms against the stationary
density, and discounted trajectory costs against the Bellman value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .equilibrium import GameModel
from .kernels import TransitionKernel
from .mdp import Threshold, ThresholdKind
from .stationary import StationaryDistribution

__all__ = [
    "SimConfig",
    "SimStats",
    "CycleStats",
    "InsufficientHorizonError",
    "BinMismatchError",
    "simulate_population",
    "cycle_statistics",
    "empirical_vs_stationary",
    "evaluate_policy_cost",
    "required_horizon",
]


class InsufficientHorizonError(ValueError):
    """The truncation horizon violates the discounted tail bound."""


class BinMismatchError(ValueError):
    """Histogram bin edges do not line up with the analytic grid."""


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one population run."""

    N: int
    T: int
    seed: int
    policy: Threshold
    burn_in: int = 0
    initial_law: str = "all-zero"
    bins: int = 50
    window: int = 100

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"need at least one agent, got N={self.N}")
        if not self.T > self.burn_in >= 0:
            raise ValueError(f"need T > burn_in >= 0, got T={self.T}, burn_in={self.burn_in}")
        if self.initial_law not in ("all-zero", "uniform"):
            raise ValueError(f"unknown initial law {self.initial_law!r}")
        if self.bins < 1 or self.window < 1:
            raise ValueError("bins and window must be positive")


@dataclass(frozen=True)
class SimStats:
    """Everything measured on one population run."""

    trajectory: np.ndarray  # population average state at t = 0..T
    per_agent_time_avg: np.ndarray
    time_avg_pooled: float
    time_avg_stderr: float
    hist_edges: np.ndarray
    hist_masses: np.ndarray  # continuous part only, sums to 1 - atom0_freq
    atom0_freq: float
    window_samples: np.ndarray
    n_cycles: int
    mean_cycle_len: float
    mean_cycle_sum: float
    cycle_ratio: float

    def summary(self) -> dict:
        return {
            "time_avg_pooled": self.time_avg_pooled,
            "time_avg_stderr": self.time_avg_stderr,
            "atom0_freq": self.atom0_freq,
            "n_cycles": self.n_cycles,
            "mean_cycle_len": self.mean_cycle_len,
            "mean_cycle_sum": self.mean_cycle_sum,
            "cycle_ratio": self.cycle_ratio,
            "final_population_avg": float(self.trajectory[-1]),
        }


def _step(kernel: TransitionKernel, policy: Threshold, x: np.ndarray, rng) -> np.ndarray:
    """One synchronous transition of all agents under the threshold policy."""
    act = policy.acts_at(x)
    out = np.empty_like(x)
    out[act] = 0.0
    idle = ~act
    if np.any(idle):
        at_top = idle & (x >= 1.0)
        out[at_top] = 1.0
        free = idle & (x < 1.0)
        if np.any(free):
            out[free] = kernel.sample(x[free], rng)
    return out


def simulate_population(model: GameModel, cfg: SimConfig) -> SimStats:
    """Evolve N independent agents for T steps; deterministic given the seed."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.initial_law == "all-zero":
        x = np.zeros(cfg.N)
    else:
        x = rng.random(cfg.N)

    traj = np.empty(cfg.T + 1)
    traj[0] = x.mean()
    sums = np.zeros(cfg.N)
    resets = 0
    cycle_state_sum = 0.0
    window = min(cfg.window, cfg.T - cfg.burn_in)
    samples = []
    measured = 0
    for t in range(1, cfg.T + 1):
        x = _step(model.kernel, cfg.policy, x, rng)
        traj[t] = x.mean()
        if t > cfg.burn_in:
            sums += x
            measured += 1
            resets += int(np.count_nonzero(cfg.policy.acts_at(x)))
            cycle_state_sum += float(x.sum())
        if t > cfg.T - window:
            samples.append(x.copy())

    per_agent = sums / measured
    pooled = float(per_agent.mean())
    stderr = float(per_agent.std(ddof=1) / np.sqrt(cfg.N)) if cfg.N > 1 else float("inf")

    window_samples = np.concatenate(samples)
    nonzero = window_samples[window_samples > 0.0]
    edges = np.linspace(0.0, 1.0, cfg.bins + 1)
    masses, _ = np.histogram(nonzero, bins=edges)
    masses = masses / window_samples.size
    atom0 = 1.0 - nonzero.size / window_samples.size

    steps = measured * cfg.N
    return SimStats(
        trajectory=traj,
        per_agent_time_avg=per_agent,
        time_avg_pooled=pooled,
        time_avg_stderr=stderr,
        hist_edges=edges,
        hist_masses=masses,
        atom0_freq=atom0,
        window_samples=window_samples,
        n_cycles=resets,
        mean_cycle_len=steps / resets if resets else float("inf"),
        mean_cycle_sum=cycle_state_sum / resets if resets else float("inf"),
        cycle_ratio=cycle_state_sum / steps,
    )


@dataclass(frozen=True)
class CycleStats:
    """Regenerative-cycle estimates for the chain restarted at 0."""

    mean_tau: float
    mean_cycle_sum: float
    ratio: float
    stderr: float
    stderr_tau: float
    replications: int


def cycle_statistics(
    kernel: TransitionKernel, theta: float, replications: int, seed: int
) -> CycleStats:
    """Simulate i.i.d. regeneration cycles started at 0.

    A cycle runs Y_0 = 0, Y_{t+1} ~ Q0(.|Y_t) until the first tau with
    Y_tau >= theta; the cycle sum includes Y_tau. The long-run time average
    of the controlled chain equals E S_tau / (1 + E tau), estimated here with
    a delta-method standard error.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0,1), got {theta}")
    if replications < 100:
        raise ValueError(f"need at least 100 replications, got {replications}")
    rng = np.random.default_rng(seed)
    taus = np.zeros(replications)
    sums = np.zeros(replications)
    x = np.zeros(replications)
    active = np.ones(replications, dtype=bool)
    t = 0
    while np.any(active):
        t += 1
        x[active] = kernel.sample(x[active], rng)
        sums[active] += x[active]
        hit = active & (x >= theta)
        taus[hit] = t
        active &= ~hit

    mean_tau = float(taus.mean())
    mean_sum = float(sums.mean())
    ratio = mean_sum / (1.0 + mean_tau)
    # delta method for the ratio of two correlated sample means
    cov = np.cov(sums, taus)
    var_ratio = (
        cov[0, 0] - 2.0 * ratio * cov[0, 1] + ratio**2 * cov[1, 1]
    ) / ((1.0 + mean_tau) ** 2 * replications)
    return CycleStats(
        mean_tau=mean_tau,
        mean_cycle_sum=mean_sum,
        ratio=ratio,
        stderr=float(np.sqrt(max(var_ratio, 0.0))),
        stderr_tau=float(np.sqrt(cov[1, 1] / replications)),
        replications=replications,
    )


def empirical_vs_stationary(
    stats: SimStats, dist: StationaryDistribution
) -> tuple[float, float]:
    """Distances between the simulated window law and the analytic one.

    Total variation over the histogram bins (the zero atom is its own cell)
    and first Wasserstein distance from sorted samples against analytic
    quantiles.
    """
    grid = dist.density.grid
    edges = stats.hist_edges
    on_grid = np.abs(edges * grid.n - np.round(edges * grid.n)) < 1e-9
    if not np.all(on_grid):
        raise BinMismatchError("histogram bin edges do not align with the grid")

    # cdf(0) equals the atom, so bin differences carry the density mass only
    cdf_at = dist.cdf(edges)
    analytic = np.diff(cdf_at)
    tv = 0.5 * (abs(stats.atom0_freq - dist.atom0) + float(np.sum(np.abs(stats.hist_masses - analytic))))

    samples = np.sort(stats.window_samples)
    u = (np.arange(samples.size) + 0.5) / samples.size
    nodes = dist.density.grid.nodes
    cdf_nodes = dist.cdf(nodes)
    if dist.atom_at_one:
        quantiles = np.ones_like(u)
    else:
        quantiles = np.interp(u, cdf_nodes, nodes)
    w1 = float(np.mean(np.abs(samples - quantiles)))
    return float(tv), w1


def required_horizon(model: GameModel, z: float, tail: float = 1e-4) -> int:
    """Smallest horizon whose truncated discounted tail is below `tail`."""
    beta = model.cost.beta
    r_max = float(np.max(model.cost.R(model.grid.nodes, z))) + model.cost.gamma
    # beta^T * r_max / (1 - beta) < tail
    return int(np.ceil(np.log(tail * (1.0 - beta) / r_max) / np.log(beta))) + 1


def evaluate_policy_cost(
    model: GameModel,
    z: float,
    theta: Union[Threshold, float],
    x0: float,
    replications: int,
    horizon: Optional[int] = None,
    seed: int = 0,
    tail: float = 1e-4,
) -> tuple[float, float]:
    """Monte Carlo discounted cost of a threshold policy at frozen mean field z.

    The horizon must satisfy the analytic tail bound
    beta^horizon * max cost / (1 - beta) < tail; pass horizon=None to use the
    smallest sufficient value.
    """
    if not isinstance(theta, Threshold):
        theta = Threshold.interior(float(theta))
    need = required_horizon(model, z, tail)
    if horizon is None:
        horizon = need
    elif horizon < need:
        raise InsufficientHorizonError(
            f"insufficient horizon: {horizon} < {need} required by the tail bound"
        )
    rng = np.random.default_rng(seed)
    x = np.full(replications, float(x0))
    total = np.zeros(replications)
    disc = 1.0
    beta, gamma = model.cost.beta, model.cost.gamma
    for _ in range(horizon):
        act = theta.acts_at(x)
        total += disc * (np.asarray(model.cost.R(x, z), dtype=float) + gamma * act)
        x = _step(model.kernel, theta, x, rng)
        disc *= beta
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(replications))
