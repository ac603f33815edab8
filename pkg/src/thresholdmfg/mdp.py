"""Single-agent discounted MDP for a frozen mean field.

The agent either lets its state drift upward through the transition kernel or
pays an effort cost to reset to 0. For any frozen population average z the
optimal policy is a threshold policy; this module solves the Bellman equation
by value iteration, classifies the threshold, and provides the analytic
effort-cost bounds separating the always-act / never-act regimes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import TransitionKernel, UniformKernel
from .numerics import Grid, GridFunction

__all__ = [
    "CostModel",
    "linear_cost",
    "power_cost",
    "ValueFunction",
    "Threshold",
    "ThresholdKind",
    "IterationCapError",
    "kernel_expectation",
    "bellman_operator",
    "solve_value_function",
    "extract_threshold",
    "solve_uncontrolled_value",
    "gamma_bounds",
    "threshold_cost_curve",
    "ThresholdCurve",
]


class IterationCapError(RuntimeError):
    """Contraction iteration failed to converge within the iteration cap."""


@dataclass(frozen=True, eq=False)
class CostModel:
    """One-stage cost R(x,z) + gamma * 1{act}.

    Product form R(x,z) = R1(x) R2(z) unless general_R is given. R2_dz is the
    derivative of R2, needed only for sensitivity analysis.
    """

    R1: Callable = field(default=lambda x: np.asarray(x, dtype=float))
    R2: Callable = field(default=lambda z: 1.0 + z)
    gamma: float = 0.5
    beta: float = 0.9
    general_R: Optional[Callable] = None
    R2_dz: Optional[Callable] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"effort cost gamma must be positive, got {self.gamma}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"discount beta must lie in (0,1), got {self.beta}")

    @property
    def product_form(self) -> bool:
        return self.general_R is None

    def R(self, x, z):
        if self.general_R is not None:
            return self.general_R(x, z)
        return np.asarray(self.R1(x)) * self.R2(z)

    def with_gamma(self, gamma: float) -> "CostModel":
        return replace(self, gamma=gamma)

    def validate(self, grid: Grid, z_samples: Sequence[float] = (0.0, 0.5, 1.0)):
        """Raise if the monotonicity requirements fail on grid nodes."""
        x = grid.nodes
        if self.general_R is None:
            if np.any(np.diff(self.R1(x)) <= 0):
                raise ValueError("R1 must be strictly increasing on [0,1]")
            zs = np.asarray(z_samples)
            r2 = np.asarray([self.R2(z) for z in zs])
            if np.any(r2 <= 0) or np.any(np.diff(r2) <= 0):
                raise ValueError("R2 must be positive and strictly increasing")
        else:
            for z in z_samples:
                if np.any(np.diff(self.general_R(x, z)) <= 0):
                    raise ValueError(f"R(.,z) must be strictly increasing (z={z})")
            for xi in (0.0, 0.5, 1.0):
                vals = [self.general_R(xi, z) for z in z_samples]
                if np.any(np.diff(vals) < 0):
                    raise ValueError(f"R(x,.) must be increasing (x={xi})")


def linear_cost(c: float, gamma: float, beta: float) -> CostModel:
    """R(x,z) = x (c + z), the running example's cost."""
    return CostModel(
        R1=lambda x: np.asarray(x, dtype=float),
        R2=lambda z: c + z,
        gamma=gamma,
        beta=beta,
        R2_dz=lambda z: 1.0,
    )


def power_cost(c: float, k: float, gamma: float, beta: float) -> CostModel:
    """R(x,z) = x**k (c + z**k)."""
    return CostModel(
        R1=lambda x: np.asarray(x, dtype=float) ** k,
        R2=lambda z: c + z**k,
        gamma=gamma,
        beta=beta,
        R2_dz=lambda z: k * z ** (k - 1) if z > 0 else (k if k == 1 else 0.0),
    )


class ThresholdKind(Enum):
    ZERO = "zero"
    INTERIOR = "interior"
    ONE = "one"
    ABOVE_ONE = "above_one"


@dataclass(frozen=True)
class Threshold:
    """Best-response threshold: act (reset to 0) exactly when x >= theta.

    ABOVE_ONE is the never-act policy (the threshold sits above the state
    space).
    """

    kind: ThresholdKind
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind is ThresholdKind.INTERIOR:
            if self.value is None or not 0.0 < self.value < 1.0:
                raise ValueError(f"interior threshold must lie in (0,1), got {self.value}")

    @classmethod
    def zero(cls):
        return cls(ThresholdKind.ZERO)

    @classmethod
    def interior(cls, x: float):
        return cls(ThresholdKind.INTERIOR, float(x))

    @classmethod
    def one(cls):
        return cls(ThresholdKind.ONE)

    @classmethod
    def above_one(cls):
        return cls(ThresholdKind.ABOVE_ONE)

    @property
    def cut(self) -> float:
        """Numeric cut point for the act region (inf if the agent never acts)."""
        if self.kind is ThresholdKind.ZERO:
            return 0.0
        if self.kind is ThresholdKind.INTERIOR:
            return self.value
        if self.kind is ThresholdKind.ONE:
            return 1.0
        return np.inf

    def acts_at(self, x):
        return np.asarray(x) >= self.cut


@dataclass(frozen=True)
class ValueFunction:
    """Converged Bellman solution for a frozen mean field z."""

    v: GridFunction
    G: GridFunction  # G(x) = int v(y) Q0(dy|x)
    z: float
    gamma: float
    beta: float
    iterations: int
    residual: float
    tol: float


@lru_cache(maxsize=32)
def _expectation_matrix(kernel: TransitionKernel, grid: Grid) -> np.ndarray:
    """Row i holds trapezoid weights for int f(y) q(y|x_i) dy over [x_i, 1]."""
    n, h, x = grid.n, grid.h, grid.nodes
    W = np.zeros((n + 1, n + 1))
    for i in range(n):
        q = kernel.density(x[i:], x[i])
        w = np.full(n + 1 - i, h)
        w[0] = w[-1] = 0.5 * h
        W[i, i:] = w * q
    W[n, n] = 1.0  # state 1 is absorbing under inaction
    return W


def kernel_expectation(kernel: TransitionKernel, grid: Grid) -> Callable:
    """Return apply(v) computing G(x_i) = int v(y) Q0(dy|x_i) at all nodes.

    The uniform kernel gets a closed-form O(n) path (G is the running mean of
    v over [x,1]); other kernels use a cached dense weight matrix.
    """
    if isinstance(kernel, UniformKernel):
        h, x = grid.h, grid.nodes

        def apply(v: np.ndarray) -> np.ndarray:
            # suffix trapezoid of v, then divide by interval length 1-x
            cells = 0.5 * h * (v[1:] + v[:-1])
            suffix = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
            out = np.empty_like(v)
            out[:-1] = suffix[:-1] / (1.0 - x[:-1])
            out[-1] = v[-1]
            return out

        return apply
    W = _expectation_matrix(kernel, grid)
    return lambda v: W @ v


def bellman_operator(
    v: GridFunction,
    model: CostModel,
    kernel: TransitionKernel,
    z: float,
    _apply: Optional[Callable] = None,
) -> GridFunction:
    """One application of the dynamic programming operator at mean field z."""
    apply = _apply or kernel_expectation(kernel, v.grid)
    R = model.R(v.grid.nodes, z)
    G = apply(v.values)
    out = R + np.minimum(model.beta * G, model.beta * v.values[0] + model.gamma)
    return GridFunction(v.grid, out)


def _iterate(step: Callable, v0: np.ndarray, beta: float, tol: float, max_iter: int):
    """Contraction iteration with the a-priori stopping rule for residual tol."""
    stop = tol * (1.0 - beta) / (2.0 * beta)
    v = v0
    for it in range(1, max_iter + 1):
        vn = step(v)
        if np.max(np.abs(vn - v)) <= stop:
            return vn, it
        v = vn
    raise IterationCapError(f"iteration cap {max_iter} exceeded (tol={tol})")


def solve_value_function(
    model: CostModel,
    kernel: TransitionKernel,
    z: float,
    grid: Grid,
    tol: float = 1e-8,
    v_init: Optional[GridFunction] = None,
    max_iter: int = 10**6,
) -> ValueFunction:
    """Value iteration for the frozen-mean-field Bellman equation."""
    apply = kernel_expectation(kernel, grid)
    R = model.R(grid.nodes, z)
    beta, gamma = model.beta, model.gamma

    def step(v):
        return R + np.minimum(beta * apply(v), beta * v[0] + gamma)

    v0 = v_init.values if v_init is not None else np.zeros(grid.n + 1)
    v, its = _iterate(step, v0, beta, tol, max_iter)
    residual = float(np.max(np.abs(step(v) - v)))
    return ValueFunction(
        v=GridFunction(grid, v),
        G=GridFunction(grid, apply(v)),
        z=float(z),
        gamma=gamma,
        beta=beta,
        iterations=its,
        residual=residual,
        tol=tol,
    )


def extract_threshold(
    vf: ValueFunction,
    model: CostModel,
    kernel: TransitionKernel,
    tol_D: Optional[float] = None,
) -> Threshold:
    """Classify the best response from the act/wait margin D = beta(G - v(0)) - gamma.

    D is strictly increasing; its sign pattern fixes the threshold kind, and
    an interior root is located by linear interpolation between nodes.
    """
    if tol_D is None:
        tol_D = 10.0 * vf.tol
    D = model.beta * vf.G.values - model.beta * vf.v.values[0] - model.gamma
    if D[-1] < -tol_D:
        return Threshold.above_one()
    if abs(D[-1]) <= tol_D:
        return Threshold.one()
    if D[0] >= 0.0:
        return Threshold.zero()
    idx = np.flatnonzero(D >= 0.0)
    if idx.size == 0:
        raise RuntimeError("no sign change in the act/wait margin; check tolerances")
    j = int(idx[0])
    x = vf.v.grid.nodes
    x_star = x[j - 1] + vf.v.grid.h * (-D[j - 1]) / (D[j] - D[j - 1])
    if x_star <= 0.0:
        return Threshold.zero()
    if x_star >= 1.0:
        return Threshold.one()
    return Threshold.interior(x_star)


def solve_uncontrolled_value(
    model: CostModel,
    kernel: TransitionKernel,
    z: float,
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 10**6,
) -> GridFunction:
    """Discounted cost of never acting: V = beta * E[V(next)] + R(.,z)."""
    apply = kernel_expectation(kernel, grid)
    R = model.R(grid.nodes, z)
    beta = model.beta

    def step(v):
        return R + beta * apply(v)

    v, _ = _iterate(step, np.zeros(grid.n + 1), beta, tol, max_iter)
    return GridFunction(grid, v)


def gamma_bounds(
    model: CostModel, kernel: TransitionKernel, z: float, grid: Grid
) -> tuple[float, float]:
    """Effort-cost bounds (gamma_zero, gamma_aboveone) at mean field z.

    The threshold is 0 iff gamma <= gamma_zero and sits above the state space
    iff gamma > gamma_aboveone = beta * (V(1) - V(0)) for the never-act value.
    """
    x = grid.nodes
    q0 = kernel.density(x, 0.0)
    R = np.asarray(model.R(x, z), dtype=float)
    gamma_zero = model.beta * float(np.trapezoid(R * q0, x)) - model.beta * float(model.R(0.0, z))
    V = solve_uncontrolled_value(model, kernel, z, grid)
    gamma_aboveone = model.beta * float(V.values[-1] - V.values[0])
    return gamma_zero, gamma_aboveone


@dataclass(frozen=True)
class ThresholdCurve:
    """Threshold as a function of the effort cost, with the saturation edges."""

    r_values: np.ndarray
    thresholds: list
    r_lower: float
    r_upper: float


def _margin_at(model, kernel, grid, node, tol):
    vf = solve_value_function(model, kernel, 0.0, grid, tol=tol)
    D = model.beta * vf.G.values - model.beta * vf.v.values[0] - model.gamma
    return D[node]


def threshold_cost_curve(
    R1: Callable,
    kernel: TransitionKernel,
    rho: float,
    r_values: Sequence[float],
    grid: Grid,
    tol: float = 1e-9,
) -> ThresholdCurve:
    """Sweep the effort cost r for the mean-field-free MDP with cost R1(x) + r.

    r_lower / r_upper bracket the regime where the threshold is interior: at
    r_lower the act/wait margin vanishes at x=0, at r_upper at x=1. Both are
    located by bisection on the margin sign.
    """
    r_values = np.asarray(sorted(r_values), dtype=float)
    if np.any(r_values <= 0):
        raise ValueError("effort costs must be positive")

    def mk(r):
        return CostModel(R1=R1, R2=lambda z: 1.0, gamma=r, beta=rho)

    def bisect(node: int) -> float:
        x = grid.nodes
        # margin at `node` is positive for tiny r and negative for huge r
        lo, hi = 1e-9, rho * float(R1(1.0)) / (1.0 - rho) + 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _margin_at(mk(mid), kernel, grid, node, tol) >= 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    r_lower = bisect(0)
    r_upper = bisect(grid.n)

    thresholds = []
    v_prev = None
    for r in r_values:
        m = mk(r)
        vf = solve_value_function(m, kernel, 0.0, grid, tol=tol, v_init=v_prev)
        v_prev = vf.v
        thresholds.append(extract_threshold(vf, m, kernel))
    return ThresholdCurve(r_values, thresholds, r_lower, r_upper)
