"""Uniform grids on [0,1], trapezoid quadrature and a second-kind Volterra solver.

Everything downstream (value functions, stationary densities, perturbation
functions) is represented as a piecewise-linear interpolant on a uniform grid,
so composite trapezoid rules are the matching quadrature order throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

__all__ = [
    "Grid",
    "GridFunction",
    "VolterraDegeneracyError",
    "make_grid",
    "integrate",
    "solve_volterra",
]


class VolterraDegeneracyError(RuntimeError):
    """Raised when an implicit diagonal factor 1 - (h/2) K(x,x) is <= 0."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid with n intervals on [0,1], nodes x_j = j/n."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs at least 2 intervals, got n={self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.n + 1)
        x.setflags(write=False)
        return x


def make_grid(n: int) -> Grid:
    return Grid(n)


@dataclass(frozen=True)
class GridFunction:
    """Node samples interpreted as a piecewise-linear function on [0,1]."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n + 1,):
            raise ValueError(
                f"expected {self.grid.n + 1} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        return np.interp(x, self.grid.nodes, self.values)

    @classmethod
    def from_callable(cls, grid: Grid, f: Callable) -> "GridFunction":
        return cls(grid, np.asarray(f(grid.nodes), dtype=float))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.n + 1, float(c)))


def integrate(f: GridFunction, a: float = 0.0, b: float = 1.0) -> float:
    """Trapezoid value of the integral of f over [a,b].

    Partial end cells interpolate f linearly at the off-node endpoints, which
    keeps the rule exact for linear f regardless of (a,b).
    """
    if not (0.0 <= a <= b <= 1.0):
        raise ValueError(f"need 0 <= a <= b <= 1, got a={a}, b={b}")
    if a == b:
        return 0.0
    x, v, h = f.grid.nodes, f.values, f.grid.h
    # first full node at or after a, last full node at or before b
    i = int(np.ceil(a / h - 1e-12))
    j = int(np.floor(b / h + 1e-12))
    if i > j:  # a and b inside the same cell
        return 0.5 * (b - a) * (f(a) + f(b))
    total = float(np.trapezoid(v[i : j + 1], dx=h)) if j > i else 0.0
    if x[i] > a:
        total += 0.5 * (x[i] - a) * (f(a) + v[i])
    if b > x[j]:
        total += 0.5 * (b - x[j]) * (v[j] + f(b))
    return total


def _partial_weights(h: float, m: int, upper: float) -> np.ndarray:
    """Trapezoid weights for nodes 0..m over [0, x_m] plus the cell [x_m, upper]."""
    w = np.full(m + 1, h)
    w[0] = 0.5 * h
    w[m] = 0.5 * h if m > 0 else 0.0
    w[m] += 0.5 * (upper - m * h)
    return w


def solve_volterra(
    kernel_fn: Callable[[float, np.ndarray], np.ndarray],
    forcing: GridFunction,
    direction: str = "forward",
    upper_limit: float = 1.0,
) -> GridFunction:
    """March the second-kind Volterra equation u = g + int K u on the grid.

    forward:  u(x) = g(x) + int_0^min(x,L) K(x,y) u(y) dy
    backward: u(x) = g(x) + int_x^L K(x,y) u(y) dy   (u = 0 at nodes above L)

    The diagonal trapezoid weight is moved to the left-hand side; the marching
    fails with :class:`VolterraDegeneracyError` if an implicit factor
    1 - (h/2) K(x,x) is non-positive (refine the grid).

    kernel_fn(x, y) must accept a vector of y values.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, not {direction!r}")
    L = float(upper_limit)
    if not 0.0 < L <= 1.0:
        raise ValueError(f"upper_limit must lie in (0, 1], got {L}")
    grid = forcing.grid
    x, g, h, n = grid.nodes, forcing.values, grid.h, grid.n
    m = int(np.floor(L / h + 1e-12))  # last node with x_m <= L
    on_node = abs(m * h - L) < 1e-12 * max(1.0, n)

    u = np.zeros(n + 1)
    if direction == "forward":
        u[0] = g[0]
        # full-triangle region x_j <= L
        for j in range(1, min(m, n) + 1):
            kj = kernel_fn(x[j], x[: j + 1])
            acc = h * np.dot(kj[:j], u[:j]) - 0.5 * h * kj[0] * u[0]
            d = 1.0 - 0.5 * h * kj[j]
            if d <= 0.0:
                raise VolterraDegeneracyError(
                    f"diagonal degeneracy at x={x[j]:.6g} (factor {d:.3g})"
                )
            u[j] = (g[j] + acc) / d
        if m < n:
            cut = L - m * h
            w = _partial_weights(h, m, L)
            if on_node:
                uL = u[m]
            else:
                # value at the off-node cut L, solved implicitly
                kL = kernel_fn(L, np.append(x[: m + 1], L))
                acc = np.dot(w, kL[:-1] * u[: m + 1])
                d = 1.0 - 0.5 * cut * kL[-1]
                if d <= 0.0:
                    raise VolterraDegeneracyError(
                        f"diagonal degeneracy at x={L:.6g} (factor {d:.3g})"
                    )
                uL = (forcing(L) + acc) / d
            # above L the integral is frozen on [0, L]
            for j in range(m + 1, n + 1):
                kj = kernel_fn(x[j], np.append(x[: m + 1], L))
                acc = np.dot(w, kj[:-1] * u[: m + 1])
                if not on_node:
                    acc += 0.5 * cut * kj[-1] * uL
                u[j] = g[j] + acc
        return GridFunction(grid, u)

    # backward
    if on_node:
        uL, jstart = g[m], m - 1
        u[m] = uL
    else:
        uL, jstart = forcing(L), m
    cut = L - m * h  # width of the cell [x_m, L] (0 if on a node)
    for j in range(jstart, -1, -1):
        ys = np.append(x[j : m + 1], L) if not on_node else x[j : m + 1]
        kj = kernel_fn(x[j], ys)
        # composite trapezoid over [x_j, x_m] then the partial cell [x_m, L]
        wn = np.full(m - j + 1, h)
        wn[0] = 0.5 * h
        wn[-1] = 0.5 * h if m > j else 0.0
        if not on_node:
            wn[-1] += 0.5 * cut
            acc = (
                np.dot(wn[1:], kj[1:-1] * u[j + 1 : m + 1])
                + 0.5 * cut * kj[-1] * uL
            )
        else:
            acc = np.dot(wn[1:], kj[1:] * u[j + 1 : m + 1])
        d = 1.0 - wn[0] * kj[0]
        if d <= 0.0:
            raise VolterraDegeneracyError(
                f"diagonal degeneracy at x={x[j]:.6g} (factor {d:.3g})"
            )
        u[j] = (g[j] + acc) / d
    return GridFunction(grid, u)
