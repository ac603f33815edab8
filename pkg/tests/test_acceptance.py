"""Acceptance suite: the headline guarantees of the package.

Each test enforces both a numerical tolerance and a wall-clock budget.
The reference digits live in conftest.py; the running example is the linear
cost R(x,z) = x(0.2 + z) with effort cost 0.5, discount 0.9 and the uniform
residual-jump kernel.
"""

import time

import numpy as np
import pytest
from scipy import stats as sstats

from thresholdmfg.equilibrium import GameModel, solve_equilibrium
from thresholdmfg.kernels import (
    MultiplicativeGapKernel,
    UniformKernel,
    check_stochastic_monotonicity,
    expected_hitting_time,
)
from thresholdmfg.mdp import (
    Threshold,
    ThresholdKind,
    extract_threshold,
    linear_cost,
    solve_uncontrolled_value,
    solve_value_function,
    threshold_cost_curve,
)
from thresholdmfg.numerics import integrate, make_grid
from thresholdmfg.sensitivity import (
    finite_difference_check,
    solve_sensitivities,
    solve_uniform_equilibrium_closed_form,
    solve_uniform_sensitivity_closed_form,
)
from thresholdmfg.simulate import (
    SimConfig,
    cycle_statistics,
    evaluate_policy_cost,
    simulate_population,
)
from thresholdmfg.stationary import mean_field_of_theta, stationary_distribution

from conftest import (
    BETA,
    C,
    GAMMA,
    THETA_G_REF,
    THETA_REF,
    V0_REF,
    W0_REF,
    Z_G_REF,
    Z_REF,
)


class _Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if exc[0] is None:
            assert time.perf_counter() - self.start < self.seconds


def test_01_closed_form_equilibrium():
    with _Budget(1.0):
        v0, th, z = solve_uniform_equilibrium_closed_form(C, GAMMA, BETA)
    assert v0 == pytest.approx(V0_REF, abs=1e-5)
    assert th == pytest.approx(THETA_REF, abs=1e-5)
    assert z == pytest.approx(Z_REF, abs=1e-5)


def test_02_closed_form_sensitivities():
    # Known red: the published reference digits for (w0, theta_gamma, z_gamma)
    # do not satisfy the defining linear system they are stated to solve.
    # Our solution of that system is (4.563647, 1.163497, 0.336564), confirmed
    # by central finite differences of the closed-form equilibrium in gamma
    # and by two independent grid pipelines; the reference digits miss the
    # first equation of the system by ~2e-4 and the correct triple by ~6e-4.
    # The tolerance below is kept honest rather than widened to mask this.
    with _Budget(1.0):
        eq = solve_uniform_equilibrium_closed_form(C, GAMMA, BETA)
        w0, th_g, z_g = solve_uniform_sensitivity_closed_form(eq, GAMMA, BETA, C)
    assert w0 == pytest.approx(W0_REF, abs=1e-5)
    assert th_g == pytest.approx(THETA_G_REF, abs=1e-5)
    assert z_g == pytest.approx(Z_G_REF, abs=1e-5)


def test_03_grid_pipeline_matches_closed_form_and_converges():
    v0_ex, th_ex, z_ex = solve_uniform_equilibrium_closed_form(C, GAMMA, BETA)

    def errs(n):
        model = GameModel(
            kernel=UniformKernel(),
            cost=linear_cost(C, GAMMA, BETA),
            grid=make_grid(n),
            bellman_tol=1e-10,
            fixed_point_tol=1e-9,
        )
        sol = solve_equilibrium(model)
        return (
            abs(float(sol.v.v.values[0]) - v0_ex),
            abs(sol.theta.value - th_ex),
            abs(sol.z - z_ex),
        )

    with _Budget(60.0):
        e_coarse = errs(2000)
        e_fine = errs(4000)
    assert all(e < 2e-3 for e in e_fine)
    # halving the mesh width at least halves each discrepancy
    for coarse, fine in zip(e_coarse, e_fine):
        assert fine <= 0.5 * coarse


def test_04_stationary_density_oracle():
    with _Budget(5.0):
        grid = make_grid(2000)
        mu = stationary_distribution(UniformKernel(), THETA_REF, grid)
        log1m = np.log1p(-THETA_REF)
        pi0 = 1.0 / (2.0 - log1m)
        exact = np.where(
            grid.nodes < THETA_REF,
            pi0 / (1.0 - np.minimum(grid.nodes, THETA_REF)),
            pi0 / (1.0 - THETA_REF),
        )
        assert np.max(np.abs(mu.density.values - exact)) < 1e-4
        tail = integrate(mu.density, THETA_REF, 1.0)
        assert tail == pytest.approx(pi0, abs=1e-6)


def test_05_finite_difference_consistency(ex_model, ex_solution, ex_sensitivity):
    with _Budget(120.0):
        report = finite_difference_check(
            ex_model, ex_solution, eps=1e-3, analytic=ex_sensitivity
        )
    assert report.rel_err_theta < 0.01
    assert report.rel_err_z < 0.01


def test_06_monotonicity_suite():
    with _Budget(300.0):
        grid = make_grid(1000)

        # (a) stationary mean strictly increasing in theta, both kernels
        thetas = np.round(np.arange(0.1, 0.95, 0.1), 10)
        for kernel in (UniformKernel(), MultiplicativeGapKernel()):
            zs = [mean_field_of_theta(kernel, t, grid) for t in thetas]
            assert all(a < b for a, b in zip(zs, zs[1:]))

        # (b) threshold strictly increasing in the effort cost over the
        # interior window, saturating at the documented edges
        rho = BETA
        probe = threshold_cost_curve(
            lambda x: np.asarray(x, dtype=float), UniformKernel(), rho, [1.0], grid
        )
        r_lo, r_hi = probe.r_lower, probe.r_upper
        assert r_lo == pytest.approx(rho / 2.0, abs=1e-3)
        assert r_hi == pytest.approx(2.0 * rho / (2.0 - rho), abs=1e-3)
        rs = np.linspace(r_lo + 2e-3, r_hi - 2e-3, 50)
        sweep = threshold_cost_curve(
            lambda x: np.asarray(x, dtype=float), UniformKernel(), rho, rs, grid
        )
        cuts = [th.cut for th in sweep.thresholds]
        assert all(th.kind is ThresholdKind.INTERIOR for th in sweep.thresholds)
        assert all(a < b for a, b in zip(cuts, cuts[1:]))
        assert cuts[0] <= 0.02
        assert cuts[-1] >= 0.98

        # (c) equilibrium strictly increasing in gamma, value pointwise larger
        sols = [
            solve_equilibrium(
                GameModel(kernel=UniformKernel(), cost=linear_cost(C, g, BETA), grid=grid)
            )
            for g in (0.45, 0.5, 0.55, 0.6)
        ]
        th_seq = [s.theta.value for s in sols]
        z_seq = [s.z for s in sols]
        assert all(a < b for a, b in zip(th_seq, th_seq[1:]))
        assert all(a < b for a, b in zip(z_seq, z_seq[1:]))
        interior = grid.nodes > 0
        for lo, hi in zip(sols, sols[1:]):
            assert np.all(hi.v.v.values[interior] > lo.v.v.values[interior])


def test_07_monte_carlo_agreement():
    with _Budget(600.0):
        model = GameModel(
            kernel=UniformKernel(), cost=linear_cost(C, GAMMA, BETA), grid=make_grid(1000)
        )
        theta_bar = Threshold.interior(THETA_REF)

        # population time average
        cfg = SimConfig(N=10_000, T=2000, seed=42, policy=theta_bar, burn_in=500)
        pop = simulate_population(model, cfg)
        assert abs(pop.time_avg_pooled - Z_REF) < 3.0 * pop.time_avg_stderr

        # regenerative cycles vs the stationary mean and the hitting time
        cs = cycle_statistics(UniformKernel(), THETA_REF, replications=100_000, seed=7)
        assert abs(cs.ratio - Z_REF) < 3.0 * cs.stderr
        m0 = expected_hitting_time(UniformKernel(), THETA_REF, make_grid(2000))
        assert abs(cs.mean_tau - m0) < 3.0 * cs.stderr_tau

        # discounted cost of the equilibrium policy vs the Bellman value
        cost_eq, se_eq = evaluate_policy_cost(
            model, z=Z_REF, theta=theta_bar, x0=0.0, replications=20_000, seed=3
        )
        assert abs(cost_eq - V0_REF) < 3.0 * se_eq + 1e-3

        # no unilateral deviation improves the frozen-mean-field cost
        deviations = [
            Threshold.interior(THETA_REF - 0.10),
            Threshold.interior(THETA_REF - 0.05),
            Threshold.interior(THETA_REF + 0.05),
            Threshold.interior(THETA_REF + 0.10),
            Threshold.interior(0.1),
            Threshold.interior(0.3),
            Threshold.interior(0.7),
            Threshold.interior(0.9),
            Threshold.above_one(),
        ]
        for i, dev in enumerate(deviations):
            cost_dev, se_dev = evaluate_policy_cost(
                model, z=Z_REF, theta=dev, x0=0.0, replications=20_000, seed=100 + i
            )
            combined = np.hypot(se_eq, se_dev)
            assert cost_eq - cost_dev <= 3.0 * combined


def test_08_analytic_regime_boundaries():
    with _Budget(10.0):
        grid = make_grid(2000)
        kernel = UniformKernel()
        z = 0.3
        margin = 1e-3
        g_zero = BETA * (C + z) / 2.0
        g_one = 2.0 * BETA * (C + z) / (2.0 - BETA)

        for side in (-1.0, 1.0):
            m_lo = linear_cost(C, g_zero + side * margin, BETA)
            th_lo = extract_threshold(
                solve_value_function(m_lo, kernel, z, grid), m_lo, kernel
            )
            assert (th_lo.kind is ThresholdKind.ZERO) == (side < 0)

            m_hi = linear_cost(C, g_one + side * margin, BETA)
            th_hi = extract_threshold(
                solve_value_function(m_hi, kernel, z, grid), m_hi, kernel
            )
            assert (th_hi.kind is ThresholdKind.ABOVE_ONE) == (side > 0)

        model = linear_cost(C, GAMMA, BETA)
        V = solve_uncontrolled_value(model, kernel, z, grid)
        assert V.values[0] == pytest.approx(
            BETA * (C + z) / ((1.0 - BETA) * (2.0 - BETA)), abs=1e-4
        )


def test_09_kernel_contract_suite(ex_model, ex_solution, ex_sensitivity):
    with _Budget(60.0):
        grid = make_grid(400)
        triangular_gap = MultiplicativeGapKernel(
            pdf=lambda u: np.where((u >= 0) & (u <= 1), 2.0 * u, 0.0),
            ppf=np.sqrt,
        )
        cases = [
            (UniformKernel(), lambda t, x0: np.clip((t - x0) / (1 - x0), 0, 1)),
            (
                triangular_gap,
                lambda t, x0: np.clip(
                    1.0 - ((1.0 - np.asarray(t)) / (1.0 - x0)) ** 2, 0.0, 1.0
                ),
            ),
        ]
        rng = np.random.default_rng(0)
        for kernel, cdf in cases:
            # normalization and positivity at several sources
            for x0 in (0.0, 0.3, 0.7):
                ys = np.linspace(x0, 1.0, 2001)
                dens = kernel.density(ys, x0)
                assert np.all(dens >= 0.0)
                assert np.trapezoid(dens, ys) == pytest.approx(1.0, abs=1e-6)
            # CDF-dominance stochastic monotonicity
            report = check_stochastic_monotonicity(kernel, grid)
            assert report.strict_pass
            # sampling agreement
            x0 = 0.25
            ys = kernel.sample(np.full(20_000, x0), rng)
            assert sstats.kstest(ys, lambda t: cdf(t, x0)).pvalue > 0.01

        # the first-order perturbation is genuinely discontinuous at theta
        assert abs(ex_sensitivity.w.jump) > 10.0 * ex_model.grid.h
        assert ex_sensitivity.w.jump > 0.0
