"""Transition kernels: densities, sampling, monotonicity diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from thresholdmfg.kernels import (
    MultiplicativeGapKernel,
    TabulatedKernel,
    TransitionKernel,
    UniformKernel,
    check_cdf_dominance,
    check_stochastic_monotonicity,
    expected_hitting_time,
)
from thresholdmfg.numerics import make_grid


class TestUniformKernel:
    kernel = UniformKernel()

    @given(st.floats(0.0, 0.99))
    @settings(max_examples=50, deadline=None)
    def test_density_normalizes(self, x):
        ys = np.linspace(x, 1.0, 2001)
        mass = np.trapezoid(self.kernel.density(ys, x), ys)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_density_zero_below_support(self):
        assert self.kernel.density(0.2, 0.5) == 0.0
        assert self.kernel.density(0.5, 0.5) == pytest.approx(2.0)

    def test_density_undefined_at_absorbing_state(self):
        with pytest.raises(ValueError, match="absorbing"):
            self.kernel.density(0.5, 1.0)

    def test_density_dx_matches_finite_difference(self):
        y, x, h = 0.7, 0.3, 1e-6
        fd = (self.kernel.density(y, x + h) - self.kernel.density(y, x - h)) / (2 * h)
        assert self.kernel.density_dx(y, x) == pytest.approx(fd, rel=1e-5)

    def test_samples_live_on_support(self):
        rng = np.random.default_rng(0)
        x = np.full(1000, 0.4)
        ys = self.kernel.sample(x, rng)
        assert np.all(ys >= 0.4) and np.all(ys <= 1.0)

    def test_tail_mass_analytic(self):
        assert self.kernel.tail_mass(0.75, 0.5) == pytest.approx(0.5)
        assert self.kernel.tail_mass(0.25, 0.5) == pytest.approx(1.0)

    def test_sampling_ks_agreement(self):
        rng = np.random.default_rng(42)
        x0 = 0.3
        ys = self.kernel.sample(np.full(20_000, x0), rng)
        res = stats.kstest(ys, lambda t: np.clip((t - x0) / (1 - x0), 0, 1))
        assert res.pvalue > 0.01


class TestMultiplicativeGapKernel:
    def test_default_matches_uniform(self):
        gap, uni = MultiplicativeGapKernel(), UniformKernel()
        ys = np.linspace(0.0, 1.0, 101)
        for x in (0.0, 0.3, 0.9):
            assert np.allclose(gap.density(ys, x), uni.density(ys, x))

    def test_triangular_factor_density(self):
        # xi with pdf 2u concentrates the landing point near the current state
        k = MultiplicativeGapKernel(
            pdf=lambda u: np.where((u >= 0) & (u <= 1), 2.0 * u, 0.0),
            pdf_dx=lambda u: np.where((u >= 0) & (u <= 1), 2.0, 0.0),
            ppf=np.sqrt,
        )
        x = 0.4
        ys = np.linspace(x, 1.0, 2001)
        dens = k.density(ys, x)
        assert np.trapezoid(dens, ys) == pytest.approx(1.0, abs=1e-6)
        # density of y = 1 - (1-x) xi is 2(1-y)/(1-x)^2
        assert dens[1000] == pytest.approx(2 * (1 - ys[1000]) / (1 - x) ** 2)

    def test_density_dx_matches_finite_difference(self):
        k = MultiplicativeGapKernel(
            pdf=lambda u: np.where((u >= 0) & (u <= 1), 2.0 * u, 0.0),
            pdf_dx=lambda u: np.where((u >= 0) & (u <= 1), 2.0, 0.0),
            ppf=np.sqrt,
        )
        y, x, h = 0.8, 0.35, 1e-6
        fd = (k.density(y, x + h) - k.density(y, x - h)) / (2 * h)
        assert k.density_dx(y, x) == pytest.approx(fd, rel=1e-5)

    def test_missing_derivative_raises(self):
        k = MultiplicativeGapKernel(pdf_dx=None)
        with pytest.raises(ValueError, match="derivative unavailable"):
            k.density_dx(0.5, 0.2)

    def test_sampling_ks_agreement(self):
        k = MultiplicativeGapKernel(
            pdf=lambda u: np.where((u >= 0) & (u <= 1), 2.0 * u, 0.0),
            ppf=np.sqrt,
        )
        rng = np.random.default_rng(1)
        x0 = 0.2
        ys = k.sample(np.full(20_000, x0), rng)

        def cdf(t):
            u = (1.0 - np.asarray(t)) / (1.0 - x0)
            return np.clip(1.0 - u**2, 0.0, 1.0)

        assert stats.kstest(ys, cdf).pvalue > 0.01


class TestTabulatedKernel:
    def _uniform_table(self, nx=41, ny=81):
        xs = np.linspace(0.0, 0.99, nx)
        ys = np.linspace(0.0, 1.0, ny)
        dens = np.zeros((nx, ny))
        ddx = np.zeros((nx, ny))
        for i, x in enumerate(xs):
            mask = ys >= x
            dens[i, mask] = 1.0 / (1.0 - x)
            ddx[i, mask] = 1.0 / (1.0 - x) ** 2
        return xs, ys, dens, ddx

    def test_interpolates_uniform_table(self):
        xs, ys, dens, ddx = self._uniform_table()
        k = TabulatedKernel(xs, ys, dens, ddx)
        assert k.density(0.9, 0.5) == pytest.approx(2.0, rel=1e-2)
        assert k.density(0.2, 0.5) == 0.0
        assert k.density_dx(0.9, 0.5) == pytest.approx(4.0, rel=5e-2)

    def test_csv_round_trip(self, tmp_path):
        xs, ys, dens, ddx = self._uniform_table(11, 21)
        p = tmp_path / "dens.csv"
        dp = tmp_path / "ddx.csv"
        for path, mat in ((p, dens), (dp, ddx)):
            rows = [[""] + list(ys)] + [[x] + list(row) for x, row in zip(xs, mat)]
            path.write_text("\n".join(",".join(str(v) for v in r) for r in rows))
        k = TabulatedKernel.from_csv(p, dp)
        assert np.array_equal(k.dens, dens)
        assert np.array_equal(k.dens_dx, ddx)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            TabulatedKernel(np.zeros(3), np.zeros(4), np.zeros((4, 3)))

    def test_derivative_missing_raises(self):
        xs, ys, dens, _ = self._uniform_table(11, 21)
        k = TabulatedKernel(xs, ys, dens)
        with pytest.raises(ValueError, match="derivative unavailable"):
            k.density_dx(0.5, 0.2)

    def test_sampling_within_support(self):
        xs, ys, dens, _ = self._uniform_table()
        k = TabulatedKernel(xs, ys, dens)
        rng = np.random.default_rng(3)
        out = k.sample(np.full(500, 0.3), rng)
        # support is resolved only up to the y-lattice spacing (1/80)
        assert np.all(out >= 0.3 - 1.0 / 80.0) and np.all(out <= 1.0)


class _ShrinkingKernel(TransitionKernel):
    """Mass drifts toward 1 from low states but hugs x for high states.

    Deliberately violates stochastic monotonicity: the conditional mean
    decreases in x around the switch point.
    """

    def density(self, y, x):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        width = 1.0 - x
        u = (y - x) / width
        on = (y >= x) & (y <= 1.0)
        shape = np.where(x < 0.5, 3.0 * u**2, 3.0 * (1.0 - u) ** 2)
        out = np.where(on, shape / width, 0.0)
        return out if out.shape else float(out)


class TestMonotonicityChecks:
    def test_uniform_kernel_passes_strictly(self):
        report = check_stochastic_monotonicity(UniformKernel(), make_grid(100))
        assert report.strict_pass
        assert report.cdf_dominance == "strict"
        assert all(v == "strict" for v in report.power_verdicts.values())

    def test_violation_is_reported_not_raised(self):
        report = check_stochastic_monotonicity(_ShrinkingKernel(), make_grid(100))
        assert not report.strict_pass
        assert any(v.startswith("violated") for v in report.power_verdicts.values())

    def test_cdf_dominance_worst_violation(self):
        assert check_cdf_dominance(UniformKernel(), make_grid(100)) <= 1e-9
        assert check_cdf_dominance(_ShrinkingKernel(), make_grid(100)) > 0.01


class TestExpectedHittingTime:
    def test_uniform_closed_form(self):
        # from 0, the mean number of jumps to reach [theta,1] is 1 - ln(1-theta)
        g = make_grid(2000)
        for theta in (0.2, 0.485162, 0.8):
            m0 = expected_hitting_time(UniformKernel(), theta, g)
            assert m0 == pytest.approx(1.0 - np.log1p(-theta), abs=1e-3)

    def test_increasing_in_theta(self):
        g = make_grid(500)
        vals = [expected_hitting_time(UniformKernel(), t, g) for t in (0.2, 0.5, 0.9)]
        assert vals[0] < vals[1] < vals[2]

    def test_invalid_theta(self):
        with pytest.raises(ValueError):
            expected_hitting_time(UniformKernel(), 1.5, make_grid(100))
