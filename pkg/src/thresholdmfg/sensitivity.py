"""Comparative statics of the equilibrium in the effort cost.

A small increase of the effort cost gamma perturbs the equilibrium tuple to
first order: v grows by eps*w, theta by eps*theta_gamma and z by eps*z_gamma.
The perturbation function w satisfies a two-branch fixed-point equation with a
genuine discontinuity at the equilibrium threshold; theta_gamma solves a
scalar linear equation driven by w and the x-derivative of the kernel
density; z_gamma couples back through the theta-derivative of the stationary
mean. For the uniform kernel everything collapses to closed forms, kept here
as an independent oracle for the grid pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .equilibrium import EquilibriumSolution, GameModel, solve_equilibrium
from .kernels import UniformKernel
from .mdp import ThresholdKind
from .numerics import GridFunction
from .stationary import mean_field_of_theta

__all__ = [
    "TwoBranchFunction",
    "SensitivityResult",
    "SingularCouplingError",
    "NoInteriorRootError",
    "SingularSystemError",
    "NonInteriorPerturbationError",
    "solve_w_basis",
    "solve_sensitivities",
    "solve_uniform_equilibrium_closed_form",
    "solve_uniform_sensitivity_closed_form",
    "finite_difference_check",
    "FiniteDifferenceReport",
]


class SingularCouplingError(RuntimeError):
    """The scalar coefficient of theta_gamma vanished within tolerance."""


class NoInteriorRootError(RuntimeError):
    """The closed-form equilibrium residual has no sign change on (0,1)."""


class SingularSystemError(RuntimeError):
    """The closed-form 3x3 sensitivity system is numerically singular."""


class NonInteriorPerturbationError(RuntimeError):
    """A perturbed equilibrium left the interior-threshold regime."""


@dataclass(frozen=True)
class TwoBranchFunction:
    """A grid function with one jump, split at the equilibrium threshold.

    Node values carry each node's own branch; the one-sided limits at the
    boundary are stored explicitly so the jump survives interpolation.
    """

    grid: object
    boundary: float
    values: np.ndarray
    left_limit: float
    right_limit: float

    @property
    def jump(self) -> float:
        return self.right_limit - self.left_limit

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        nodes = self.grid.nodes
        b = self.boundary
        lo_mask = nodes <= b
        lo_x = np.append(nodes[lo_mask], b)
        lo_v = np.append(self.values[lo_mask], self.left_limit)
        hi_x = np.concatenate([[b], nodes[~lo_mask]])
        hi_v = np.concatenate([[self.right_limit], self.values[~lo_mask]])
        out = np.where(
            x <= b, np.interp(x, lo_x, lo_v), np.interp(x, hi_x, hi_v)
        )
        return out if out.shape else float(out)


@dataclass(frozen=True)
class SensitivityResult:
    """First-order response (w, theta_gamma, z_gamma) of the equilibrium."""

    w: TwoBranchFunction
    w0: float
    theta_gamma: float
    z_gamma: float
    method: str

    def summary(self) -> dict:
        return {
            "w0": self.w0,
            "theta_gamma": self.theta_gamma,
            "z_gamma": self.z_gamma,
            "w_jump": self.w.jump,
            "method": self.method,
        }


def _require_interior(eq: EquilibriumSolution) -> float:
    if eq.theta.kind is not ThresholdKind.INTERIOR:
        raise ValueError(
            f"sensitivity analysis needs an interior threshold, got {eq.theta.kind.value}"
        )
    return eq.theta.value


def _r2_prime(model: GameModel) -> callable:
    cost = model.cost
    if not cost.product_form or cost.R2_dz is None:
        raise ValueError(
            "sensitivity analysis needs the product-form cost with R2_dz set"
        )
    return cost.R2_dz


def _upper_quadrature_points(model: GameModel, th: float) -> np.ndarray:
    """Quadrature abscissae for integrals over [th, 1]."""
    nodes = model.grid.nodes
    above = nodes[nodes > th + 1e-15]
    return np.concatenate([[th], above])


def _w_basis_single(
    model: GameModel, eq: EquilibriumSolution, c0: float, const: float, tol: float
) -> TwoBranchFunction:
    """Solve one basis instance of the perturbation equation by contraction.

    Lower branch (x <= theta): W = beta * int W dQ0(.|x) + R1(x) R2'(z) c0.
    Upper branch: W = beta W(0) + R1(x) R2'(z) c0 + const, analytic given
    W(0), so the upper branch is eliminated: its kernel integral splits into a
    precomputed part and beta W(0) times the kernel tail mass.
    """
    grid, kernel, cost = model.grid, model.kernel, model.cost
    th = _require_interior(eq)
    r2p = float(_r2_prime(model)(eq.z))
    h, nodes = grid.h, grid.nodes
    m = int(np.floor(th / h + 1e-12))
    cut = th - m * h

    xs = np.append(nodes[: m + 1], th)  # lower-branch abscissae + the cut
    forcing = np.asarray(cost.R1(xs), dtype=float) * r2p * c0

    def f_up(y):
        return np.asarray(cost.R1(y), dtype=float) * r2p * c0 + const

    # fixed pieces of the upper-branch kernel integral at each lower node
    ys = _upper_quadrature_points(model, th)
    k = xs.size
    D = np.empty(k)
    tail = np.empty(k)
    fup_ys = f_up(ys)
    for i in range(k):
        q = kernel.density(ys, xs[i])
        D[i] = float(np.trapezoid(q * fup_ys, ys))
        tail[i] = float(np.trapezoid(q, ys))

    # quadrature matrix for int_{x_i}^{th} q(y|x_i) E(y) dy over xs
    M = np.zeros((k, k))
    for i in range(m + 1):
        q = kernel.density(xs[i:], xs[i])
        w = np.zeros(k - i)
        if m > i:
            w[: m + 1 - i] = h
            w[0] = 0.5 * h
            w[m - i] = 0.5 * h
        w[m - i] += 0.5 * cut
        w[-1] += 0.5 * cut
        M[i, i:] = w * q
    # row k-1 is the cut point itself: the lower integral is empty there

    beta = cost.beta
    stop = tol * (1.0 - beta) / (2.0 * beta)
    E = np.zeros(k)
    for _ in range(10**6):
        En = forcing + beta * (M @ E + beta * E[0] * tail + D)
        if np.max(np.abs(En - E)) <= stop:
            E = En
            break
        E = En
    else:
        raise RuntimeError("perturbation-function iteration failed to converge")

    values = np.empty(grid.n + 1)
    lo_mask = nodes <= th + 1e-15
    values[lo_mask] = E[: int(np.count_nonzero(lo_mask))]
    values[~lo_mask] = beta * E[0] + f_up(nodes[~lo_mask])
    return TwoBranchFunction(
        grid=grid,
        boundary=th,
        values=values,
        left_limit=float(E[-1]),
        right_limit=float(beta * E[0] + f_up(th)),
    )


def solve_w_basis(
    model: GameModel, eq: EquilibriumSolution, tol: float = 1e-10
) -> tuple[TwoBranchFunction, TwoBranchFunction]:
    """Two basis solutions whose affine combination gives the perturbation w.

    The equation for w is affine in the unknown mean-field derivative z_gamma:
    w = w_a + z_gamma * w_b, where w_a carries the constant +1 forcing of the
    upper branch (no R2' term) and w_b carries the R1 R2' forcing (no
    constant). This removes the circular dependence between w and z_gamma.
    """
    w_a = _w_basis_single(model, eq, c0=0.0, const=1.0, tol=tol)
    w_b = _w_basis_single(model, eq, c0=1.0, const=0.0, tol=tol)
    return w_a, w_b


def _mean_theta_slope(model: GameModel, th: float, step: float = 1e-3) -> float:
    """dz/dtheta of the stationary mean at the equilibrium threshold."""
    if isinstance(model.kernel, UniformKernel):
        log1m = np.log1p(-th)
        return (log1m - 3.0 + 4.0 / (1.0 - th)) / (2.0 * (2.0 - log1m) ** 2)
    lo = max(step, th - step)
    hi = min(1.0 - step, th + step)
    z_lo = mean_field_of_theta(model.kernel, lo, model.grid)
    z_hi = mean_field_of_theta(model.kernel, hi, model.grid)
    return (z_hi - z_lo) / (hi - lo)


def solve_sensitivities(model: GameModel, eq: EquilibriumSolution) -> SensitivityResult:
    """Grid-pipeline sensitivities (w, theta_gamma, z_gamma) at an equilibrium.

    Assembles the scalar equation C * theta_gamma = r_a + z_gamma * r_b
    (the threshold-derivative identity, affine in z_gamma through w) and
    closes it with z_gamma = s * theta_gamma, s the theta-derivative of the
    stationary mean.
    """
    th = _require_interior(eq)
    beta = model.cost.beta
    w_a, w_b = solve_w_basis(model, eq, tol=min(1e-10, model.bellman_tol))

    ys = _upper_quadrature_points(model, th)
    q = model.kernel.density(ys, th)
    q_dx = model.kernel.density_dx(ys, th)
    v_ys = eq.v.v(ys)
    C = beta * (
        float(np.trapezoid(v_ys * q_dx, ys))
        - float(eq.v.v(th)) * float(model.kernel.density(th, th))
    )

    w_a0, w_b0 = float(w_a.values[0]), float(w_b.values[0])
    r2p = float(_r2_prime(model)(eq.z))
    up_a = beta * w_a0 + 1.0
    up_b = beta * w_b0 + np.asarray(model.cost.R1(ys), dtype=float) * r2p
    r_a = 1.0 + beta * w_a0 - beta * float(np.trapezoid(q * up_a, ys))
    r_b = beta * w_b0 - beta * float(np.trapezoid(q * up_b, ys))

    s = _mean_theta_slope(model, th)
    denom = C - s * r_b
    scale = max(abs(C), abs(s * r_b), 1.0)
    if abs(denom) < 1e-10 * scale:
        raise SingularCouplingError(
            f"singular coupling: coefficient {denom:.3g} vanishes"
        )
    theta_gamma = r_a / denom
    z_gamma = s * theta_gamma

    w = TwoBranchFunction(
        grid=model.grid,
        boundary=th,
        values=w_a.values + z_gamma * w_b.values,
        left_limit=w_a.left_limit + z_gamma * w_b.left_limit,
        right_limit=w_a.right_limit + z_gamma * w_b.right_limit,
    )
    return SensitivityResult(
        w=w,
        w0=float(w.values[0]),
        theta_gamma=float(theta_gamma),
        z_gamma=float(z_gamma),
        method="general-kernel",
    )


def _uniform_mean(th: float) -> float:
    log1m = np.log1p(-th)
    return ((1.0 - th) / 2.0 - log1m) / (2.0 - log1m)


def solve_uniform_equilibrium_closed_form(
    c: float, gamma_bar: float, beta: float
) -> tuple[float, float, float]:
    """Exact interior equilibrium (v0, theta, z) for the uniform kernel.

    Reduces the three-equation system to a scalar root problem in theta:
    theta determines z in closed form, then v(0), and the threshold identity
    supplies the residual whose root is bracketed and polished by Brent.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"discount beta must lie in (0,1), got {beta}")
    if c <= 0 or gamma_bar <= 0:
        raise ValueError("c and gamma_bar must be positive")

    def v0_of(th, z):
        a = (1.0 - th) ** (beta - 1.0)
        num = (
            beta * (c + z) * (a - 1.0) / ((1.0 - beta) * (2.0 - beta))
            - beta * (c + z) * th / (2.0 - beta)
            + gamma_bar
        )
        return num / (a - beta)

    def resid(th):
        z = _uniform_mean(th)
        v0 = v0_of(th, z)
        return 0.5 * beta * (c + z) * (1.0 + th) - (beta * v0 + gamma_bar) * (1.0 - beta)

    eps = 1e-9
    ths = np.linspace(eps, 1.0 - eps, 400)
    vals = np.array([resid(t) for t in ths])
    sign_change = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if sign_change.size == 0:
        raise NoInteriorRootError("no interior root for the threshold identity")
    i = int(sign_change[0])
    theta = brentq(resid, ths[i], ths[i + 1], xtol=1e-14)
    z = _uniform_mean(theta)
    return float(v0_of(theta, z)), float(theta), float(z)


def solve_uniform_sensitivity_closed_form(
    eq_values: tuple[float, float, float], gamma_bar: float, beta: float, c: float
) -> tuple[float, float, float]:
    """Exact (w0, theta_gamma, z_gamma) for the uniform kernel.

    Solves the 3x3 linear system coupling the perturbation value at 0, the
    threshold derivative and the mean-field derivative, with coefficients
    evaluated at the closed-form equilibrium.
    """
    v0, th, z = eq_values
    a = (1.0 - th) ** (beta - 1.0)
    log1m = np.log1p(-th)
    K = (
        (1.0 + th) / 2.0
        + a / ((1.0 - beta) * (2.0 - beta))
        + (1.0 - th) / (2.0 - beta)
        - 1.0 / (1.0 - beta)
    )
    s = (log1m - 3.0 + 4.0 / (1.0 - th)) / (2.0 * (2.0 - log1m) ** 2)
    # unknowns (w0, theta_gamma, z_gamma)
    A = np.array(
        [
            [
                -beta * (1.0 - beta),
                ((1.0 - beta) * (beta * v0 + gamma_bar) - beta * th * (z + c))
                / (1.0 - th),
                0.5 * beta * (1.0 + th),
            ],
            [a / beta - beta, 0.0, -K],
            [0.0, -s, 1.0],
        ]
    )
    b = np.array([1.0 - beta, 1.0, 0.0])
    if abs(np.linalg.det(A)) < 1e-12:
        raise SingularSystemError("singular system in the closed-form sensitivities")
    w0, theta_gamma, z_gamma = np.linalg.solve(A, b)
    return float(w0), float(theta_gamma), float(z_gamma)


@dataclass(frozen=True)
class FiniteDifferenceReport:
    """Central-difference estimates of the sensitivities vs analytic values."""

    eps: float
    theta_gamma_fd: float
    z_gamma_fd: float
    theta_gamma: float
    z_gamma: float
    w_points: dict
    rel_err_theta: float
    rel_err_z: float

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "theta_gamma": {"fd": self.theta_gamma_fd, "analytic": self.theta_gamma},
            "z_gamma": {"fd": self.z_gamma_fd, "analytic": self.z_gamma},
            "rel_err_theta": self.rel_err_theta,
            "rel_err_z": self.rel_err_z,
            "w_points": self.w_points,
        }


def finite_difference_check(
    model: GameModel,
    eq: EquilibriumSolution,
    eps: float = 1e-3,
    points: Sequence[float] = (0.2, 0.8),
    analytic: Optional[SensitivityResult] = None,
) -> FiniteDifferenceReport:
    """Validate the analytic sensitivities against two perturbed equilibria.

    Solves the full equilibrium at gamma +/- eps and forms central difference
    quotients for theta, z and v (the latter approximates w away from the
    threshold where the expansion is smooth).
    """
    _require_interior(eq)
    if analytic is None:
        analytic = solve_sensitivities(model, eq)
    sols = []
    for g in (model.cost.gamma + eps, model.cost.gamma - eps):
        m = replace(model, cost=model.cost.with_gamma(g))
        s = solve_equilibrium(m)
        if s.theta.kind is not ThresholdKind.INTERIOR:
            raise NonInteriorPerturbationError(
                f"non-interior perturbation at gamma={g:.6g} ({s.theta.kind.value})"
            )
        sols.append(s)
    plus, minus = sols
    theta_fd = (plus.theta.value - minus.theta.value) / (2.0 * eps)
    z_fd = (plus.z - minus.z) / (2.0 * eps)
    w_points = {}
    for x in points:
        fd = (float(plus.v.v(x)) - float(minus.v.v(x))) / (2.0 * eps)
        an = float(analytic.w(x))
        w_points[float(x)] = {
            "fd": fd,
            "analytic": an,
            "rel_err": abs(fd - an) / max(abs(an), 1e-12),
        }
    return FiniteDifferenceReport(
        eps=eps,
        theta_gamma_fd=float(theta_fd),
        z_gamma_fd=float(z_fd),
        theta_gamma=analytic.theta_gamma,
        z_gamma=analytic.z_gamma,
        w_points=w_points,
        rel_err_theta=abs(theta_fd - analytic.theta_gamma)
        / max(abs(analytic.theta_gamma), 1e-12),
        rel_err_z=abs(z_fd - analytic.z_gamma) / max(abs(analytic.z_gamma), 1e-12),
    )
