"""Upward transition kernels on [0,1] and their diagnostics.

A kernel moves the state from x into [x,1] with a positive density q(y|x).
State 1 is absorbing under inaction: q(.|1) is undefined and sampling from
x=1 returns 1. All densities broadcast over their arguments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import Grid, GridFunction, solve_volterra

__all__ = [
    "TransitionKernel",
    "UniformKernel",
    "MultiplicativeGapKernel",
    "TabulatedKernel",
    "MonotonicityReport",
    "check_stochastic_monotonicity",
    "check_cdf_dominance",
    "expected_hitting_time",
]


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(x >= 1.0):
        raise ValueError("density is undefined at x = 1 (absorbing state)")
    if np.any(x < 0.0):
        raise ValueError("x must lie in [0, 1)")
    return x


class TransitionKernel:
    """Interface shared by the concrete kernels."""

    def density(self, y, x):
        """q(y|x); zero for y < x. Requires 0 <= x < 1."""
        raise NotImplementedError

    def density_dx(self, y, x):
        """Partial derivative of q(y|x) with respect to x."""
        raise NotImplementedError

    def sample(self, x, rng: np.random.Generator):
        """One draw from Q0(.|x) per entry of x; x = 1 maps to 1."""
        raise NotImplementedError

    def tail_mass(self, a: float, x) -> np.ndarray:
        """Q0([a,1]|x) by trapezoid over the density (subclasses may override)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ys = np.linspace(a, 1.0, 2001)
        out = np.array([np.trapezoid(self.density(ys, xi), ys) for xi in x])
        return out


@dataclass(frozen=True, eq=False)
class UniformKernel(TransitionKernel):
    """Uniform jump law on [x,1]: q(y|x) = 1/(1-x)."""

    def density(self, y, x):
        x = _check_x(x)
        y = np.asarray(y, dtype=float)
        out = np.where((y >= x) & (y <= 1.0), 1.0 / (1.0 - x), 0.0)
        return out if out.shape else float(out)

    def density_dx(self, y, x):
        x = _check_x(x)
        y = np.asarray(y, dtype=float)
        out = np.where((y >= x) & (y <= 1.0), 1.0 / (1.0 - x) ** 2, 0.0)
        return out if out.shape else float(out)

    def sample(self, x, rng: np.random.Generator):
        x = np.asarray(x, dtype=float)
        return x + (1.0 - x) * rng.random(x.shape)

    def tail_mass(self, a: float, x):
        x = np.asarray(x, dtype=float)
        return np.clip((1.0 - np.maximum(a, x)) / (1.0 - x), 0.0, 1.0)


def _uniform_pdf(u):
    # closed endpoints so trapezoid rules see the full density on [x,1]
    u = np.asarray(u, dtype=float)
    return np.where((u >= 0.0) & (u <= 1.0), 1.0, 0.0)


@dataclass(frozen=True, eq=False)
class MultiplicativeGapKernel(TransitionKernel):
    """Gap-shrinking law y = 1 - (1-x) xi with xi ~ pdf on (0,1).

    The gap 1-y equals (1-x) xi, so the distance to the top state contracts by
    an i.i.d. factor each step. pdf, pdf_dx and ppf must be vectorized; ppf is
    the quantile function of xi used for inverse-CDF sampling. The default xi
    is uniform on (0,1).
    """

    pdf: Callable = field(default=_uniform_pdf)
    pdf_dx: Optional[Callable] = field(default=lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    ppf: Callable = field(default=lambda u: u)

    def density(self, y, x):
        x = _check_x(x)
        y = np.asarray(y, dtype=float)
        u = (1.0 - y) / (1.0 - x)
        out = np.where((y >= x) & (y <= 1.0), self.pdf(u) / (1.0 - x), 0.0)
        return out if out.shape else float(out)

    def density_dx(self, y, x):
        if self.pdf_dx is None:
            raise ValueError("derivative unavailable: kernel lacks pdf_dx")
        x = _check_x(x)
        y = np.asarray(y, dtype=float)
        u = (1.0 - y) / (1.0 - x)
        val = (self.pdf_dx(u) * u + self.pdf(u)) / (1.0 - x) ** 2
        out = np.where((y >= x) & (y <= 1.0), val, 0.0)
        return out if out.shape else float(out)

    def sample(self, x, rng: np.random.Generator):
        x = np.asarray(x, dtype=float)
        xi = self.ppf(rng.random(x.shape))
        return 1.0 - (1.0 - x) * xi


@dataclass(frozen=True, eq=False)
class TabulatedKernel(TransitionKernel):
    """Kernel given by a density matrix on a rectangular (x,y) lattice.

    Bilinear interpolation between lattice points; zero below the diagonal.
    The derivative matrix is optional; density_dx raises without it.
    """

    x_nodes: np.ndarray
    y_nodes: np.ndarray
    dens: np.ndarray
    dens_dx: Optional[np.ndarray] = None

    def __post_init__(self):
        xs = np.asarray(self.x_nodes, dtype=float)
        ys = np.asarray(self.y_nodes, dtype=float)
        d = np.asarray(self.dens, dtype=float)
        if d.shape != (xs.size, ys.size):
            raise ValueError("density matrix shape must be (len(x), len(y))")
        object.__setattr__(self, "x_nodes", xs)
        object.__setattr__(self, "y_nodes", ys)
        object.__setattr__(self, "dens", d)
        if self.dens_dx is not None:
            dd = np.asarray(self.dens_dx, dtype=float)
            if dd.shape != d.shape:
                raise ValueError("derivative matrix shape mismatch")
            object.__setattr__(self, "dens_dx", dd)

    @classmethod
    def from_csv(cls, path, deriv_path=None) -> "TabulatedKernel":
        """Load from a CSV matrix: first row y nodes, first column x nodes."""

        def read(p):
            with open(p, newline="") as fh:
                rows = [r for r in csv.reader(fh) if r]
            ys = np.array([float(v) for v in rows[0][1:]])
            xs = np.array([float(r[0]) for r in rows[1:]])
            mat = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
            return xs, ys, mat

        xs, ys, dens = read(path)
        ddx = None
        if deriv_path is not None:
            xs2, ys2, ddx = read(deriv_path)
            if not (np.array_equal(xs, xs2) and np.array_equal(ys, ys2)):
                raise ValueError("derivative CSV nodes differ from density CSV")
        return cls(xs, ys, dens, ddx)

    def _interp(self, mat, y, x):
        x = _check_x(x)
        y = np.asarray(y, dtype=float)
        xi = np.clip(np.searchsorted(self.x_nodes, x, side="right") - 1, 0, self.x_nodes.size - 2)
        yi = np.clip(np.searchsorted(self.y_nodes, y, side="right") - 1, 0, self.y_nodes.size - 2)
        tx = (x - self.x_nodes[xi]) / (self.x_nodes[xi + 1] - self.x_nodes[xi])
        ty = (y - self.y_nodes[yi]) / (self.y_nodes[yi + 1] - self.y_nodes[yi])
        tx = np.clip(tx, 0.0, 1.0)
        ty = np.clip(ty, 0.0, 1.0)
        v = (
            (1 - tx) * (1 - ty) * mat[xi, yi]
            + tx * (1 - ty) * mat[xi + 1, yi]
            + (1 - tx) * ty * mat[xi, yi + 1]
            + tx * ty * mat[xi + 1, yi + 1]
        )
        out = np.where(y >= x, v, 0.0)
        return out if out.shape else float(out)

    def density(self, y, x):
        return self._interp(self.dens, y, x)

    def density_dx(self, y, x):
        if self.dens_dx is None:
            raise ValueError("derivative unavailable: tabulated kernel has no derivative matrix")
        return self._interp(self.dens_dx, y, x)

    def _row_cdf(self, x: float):
        ys = self.y_nodes
        q = np.asarray(self.density(ys, x), dtype=float)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * np.diff(ys))])
        if cdf[-1] <= 0:
            return ys, np.linspace(0, 1, ys.size)
        return ys, cdf / cdf[-1]

    def sample(self, x, rng: np.random.Generator):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = rng.random(x.shape)
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            if xi >= 1.0:
                out[i] = 1.0
                continue
            ys, cdf = self._row_cdf(xi)
            out[i] = np.interp(u[i], cdf, ys)
        return out if out.size > 1 else float(out[0])


@dataclass(frozen=True)
class MonotonicityReport:
    """Verdicts of the stochastic-monotonicity probes.

    power_verdicts maps the exponent m of the probe y**m to one of
    "strict", "monotone" or "violated at x=<node>"; cdf_dominance is
    "strict", "weak" or "violated".
    """

    power_verdicts: dict
    cdf_dominance: str

    @property
    def strict_pass(self) -> bool:
        return all(v == "strict" for v in self.power_verdicts.values()) and (
            self.cdf_dominance == "strict"
        )


def _moments(kernel: TransitionKernel, grid: Grid, m: int) -> np.ndarray:
    """phi_m(x) = int y^m q(y|x) dy at nodes x < 1, by trapezoid on [x,1]."""
    x = grid.nodes
    out = np.empty(grid.n)  # skip the node x = 1
    for i in range(grid.n):
        ys = x[i:]
        out[i] = np.trapezoid(ys**m * kernel.density(ys, x[i]), ys)
    return out


def _node_cdf(kernel: TransitionKernel, grid: Grid, i: int) -> np.ndarray:
    """Normalized CDF of Q0(.|x_i) at the nodes, quadrature started at x_i."""
    x = grid.nodes
    q = kernel.density(x[i:], x[i])
    c = np.zeros(grid.n + 1)
    c[i + 1 :] = np.cumsum(0.5 * (q[1:] + q[:-1]) * grid.h)
    if c[-1] > 0:
        c /= c[-1]
    return c


def check_stochastic_monotonicity(
    kernel: TransitionKernel, grid: Grid, powers=(1, 2, 3, 5)
) -> MonotonicityReport:
    """Probe strict stochastic increase of Q0(.|x) in x.

    Uses the moment family y**m plus pointwise first-order dominance of the
    node CDFs; violations are reported, never raised.
    """
    x = grid.nodes
    verdicts = {}
    for m in powers:
        phi = _moments(kernel, grid, m)
        d = np.diff(phi)
        if np.all(d > 0):
            verdicts[m] = "strict"
        elif np.all(d >= -1e-12):
            verdicts[m] = "monotone"
        else:
            i = int(np.argmin(d))
            verdicts[m] = f"violated at x={x[i]:.6g}"

    # CDF of Q0(.|x) must dominate that of Q0(.|x') pointwise for x < x'
    cdfs = np.array([_node_cdf(kernel, grid, i) for i in range(grid.n)])
    diffs = cdfs[:-1] - cdfs[1:]  # F_x - F_x' >= 0 wanted
    interior = diffs[:, 1:-1]
    if np.all(diffs >= -1e-9) and np.all(interior.max(axis=1) > 1e-9):
        cdf_verdict = "strict"
    elif np.all(diffs >= -1e-9):
        cdf_verdict = "weak"
    else:
        cdf_verdict = "violated"
    return MonotonicityReport(power_verdicts=verdicts, cdf_dominance=cdf_verdict)


def check_cdf_dominance(kernel: TransitionKernel, grid: Grid) -> float:
    """Largest pointwise violation of CDF dominance across adjacent nodes."""
    worst = 0.0
    prev = None
    for i in range(grid.n):
        c = _node_cdf(kernel, grid, i)
        if prev is not None:
            worst = max(worst, float(np.max(c - prev)))
        prev = c
    return worst


def expected_hitting_time(kernel: TransitionKernel, theta: float, grid: Grid) -> float:
    """E[time for the uncontrolled chain from 0 to reach [theta,1]].

    Solves m(x) = 1 + int_x^theta q(y|x) m(y) dy for x < theta by backward
    Volterra marching and returns m(0).
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0,1), got {theta}")
    one = GridFunction.constant(grid, 1.0)
    sol = solve_volterra(
        lambda x, y: kernel.density(y, x), one, direction="backward", upper_limit=theta
    )
    return float(sol.values[0])
