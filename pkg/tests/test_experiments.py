import math

import mpmath
import numpy as np
import pytest

from wcrlab.experiments import (
    asymptotic_efficiency_sweep,
    chi_moment_cn,
    convolved_density_slope_at_zero,
    convolved_laplace_density_quadrature,
    convolved_laplace_median_density,
    expected_sample_std,
    laplace_robustness,
    median_asymptotic_variance,
    noisy_median_variance_prediction,
    write_csv,
)
from wcrlab.families import GAUSSIAN, LAPLACE
from wcrlab.numerics import McConfig, gaussian_cdf


def _chi_mean_by_quadrature(k):
    # E[chi_k] from the chi density, evaluated independently in mpmath
    mpmath.mp.dps = 30
    dens = lambda r: r ** (k - 1) * mpmath.exp(-r * r / 2) / (2 ** (k / 2 - 1) * mpmath.gamma(k / 2))  # noqa: E731
    c = math.sqrt(k)
    return float(mpmath.quad(lambda r: r * dens(r), [0, max(0, c - 10), c, c + 10, mpmath.inf]))


class TestCn:
    def test_c2(self):
        assert chi_moment_cn(2) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-14)

    def test_c5_oracle(self):
        assert chi_moment_cn(5) == pytest.approx(0.840748682, abs=1e-9)
        assert 1 - chi_moment_cn(5) ** 2 == pytest.approx(0.29314165, abs=1e-8)

    @pytest.mark.parametrize("n", [2, 3, 5, 10, 20, 50, 100, 1000])
    def test_formula_matches_chi_quadrature(self, n):
        # n * S^2 ~ chi^2 with n - 1 degrees of freedom
        assert chi_moment_cn(n) == pytest.approx(_chi_mean_by_quadrature(n - 1) / math.sqrt(n), rel=1e-12)

    @pytest.mark.parametrize("n", [5, 20])
    def test_mc_agrees(self, n):
        est = expected_sample_std(GAUSSIAN, n, mc=McConfig(trials=40_000, seed=3))
        assert abs(est.value - chi_moment_cn(n)) <= 4 * est.stderr

    def test_increasing_to_one(self):
        cs = [chi_moment_cn(n) for n in (2, 5, 10, 100, 10_000)]
        assert all(a < b for a, b in zip(cs, cs[1:])) and cs[-1] < 1 and 1 - cs[-1] < 1e-3

    def test_analytic_route(self):
        assert expected_sample_std(GAUSSIAN, 7, method="gaussian-analytic").value == chi_moment_cn(7)
        with pytest.raises(ValueError):
            expected_sample_std(LAPLACE, 7, method="gaussian-analytic")
        with pytest.raises(ValueError):
            chi_moment_cn(1)


class TestSweep:
    def test_gaussian_rows(self):
        rows = asymptotic_efficiency_sweep(GAUSSIAN, (0.0, 1.0), [5, 20], McConfig(trials=4000))
        for r in rows:
            assert abs(r["scaled_gap_11"]) < 1e-10
            assert r["n_var_w_11"] == pytest.approx(1.0, abs=1e-12)
            assert r["n_var_w_22"] == pytest.approx(1.0, abs=1e-12)
            assert abs(r["c_n"] - r["c_n_oracle"]) <= 4 * r["c_n_stderr"]
            assert r["mc_gap_min_eig"] >= -3 * r["mc_gap_min_eig_stderr"]
        assert rows[1]["scaled_gap_22"] < rows[0]["scaled_gap_22"]

    def test_laplace_has_no_oracle(self):
        rows = asymptotic_efficiency_sweep(LAPLACE, (0.0, 1.0), [5], McConfig(trials=2000))
        assert "c_n_oracle" not in rows[0] and 0 < rows[0]["scaled_gap_22"] < 1

    def test_ns_increasing(self):
        with pytest.raises(ValueError):
            asymptotic_efficiency_sweep(GAUSSIAN, (0, 1), [10, 5])


class TestMedianFormulas:
    def test_asymptotic_variance(self):
        # Laplace density at the median is 1/(sqrt(2) sigma)
        assert median_asymptotic_variance(1 / math.sqrt(2), 1001) == pytest.approx(1 / 2002)
        with pytest.raises(ValueError):
            median_asymptotic_variance(0.0, 5)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("frac", [0.0, 0.01, 0.05, 0.1, 0.25, 0.5])
    def test_closed_form_matches_quadrature(self, sigma, frac):
        eps = frac * sigma
        closed = convolved_laplace_median_density(sigma, eps)
        literal = math.sqrt(2) / sigma * gaussian_cdf(-math.sqrt(2) * eps / sigma) * math.exp(eps**2 / sigma**2)
        assert closed == pytest.approx(literal, rel=1e-13)
        assert abs(closed - convolved_laplace_density_quadrature(0.0, sigma, eps)) < 1e-8

    def test_quadrature_off_median(self):
        # symmetric about the location
        a = convolved_laplace_density_quadrature(1.3, 1.0, 0.2, mu=1.0)
        b = convolved_laplace_density_quadrature(0.7, 1.0, 0.2, mu=1.0)
        assert a == pytest.approx(b, rel=1e-10)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_slope_at_zero(self, sigma):
        assert convolved_density_slope_at_zero(sigma) == pytest.approx(
            -math.sqrt(2) / (math.sqrt(math.pi) * sigma**2), abs=1e-4
        )

    def test_noisy_prediction(self):
        first = noisy_median_variance_prediction(1.0, 0.05, 1001, first_order=True)
        assert first == pytest.approx(5.559e-4, rel=1e-3)
        assert first == pytest.approx(1 / 2002 * (1 + 0.2 / math.sqrt(math.pi)), rel=1e-14)
        exact = noisy_median_variance_prediction(1.0, 0.05, 1001)
        p = convolved_laplace_median_density(1.0, 0.05)
        assert exact == pytest.approx(1 / (4 * 1001 * p * p), rel=1e-14)
        # the density is convex in eps, so the linearisation undershoots
        assert exact > first

    def test_errors(self):
        with pytest.raises(ValueError):
            convolved_laplace_median_density(0.0, 0.1)
        with pytest.raises(ValueError):
            convolved_laplace_median_density(1.0, -0.1)


class TestRobustness:
    def test_small_run(self, tmp_path):
        rep = laplace_robustness(1.0, 101, (0.1, 0.3), McConfig(trials=20_000, seed=1))
        assert set(rep.checks) >= {"var_w_clean_within_2pct", "var_ml_clean_within_10pct"}
        assert rep.var_w_clean == pytest.approx(1 / 101, rel=0.05)
        for r in rep.rows:
            # the mean's noise sensitivity is exactly 1/n per unit eps^2 up to MC error
            assert abs(r["slope_w"] - 1 / 101) <= 4 * r["slope_w_stderr"]
        assert rep.rows[0]["slope_ml"] > rep.rows[1]["slope_ml"]
        write_csv(rep.rows, tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().startswith("n,eps,")
        assert rep.summary()["passed"] == rep.passed

    def test_deterministic(self):
        a = laplace_robustness(1.0, 11, (0.2,), McConfig(trials=2000, seed=4))
        b = laplace_robustness(1.0, 11, (0.2,), McConfig(trials=2000, seed=4, chunk=1, workers=2))
        assert a.rows == b.rows

    def test_errors(self):
        with pytest.raises(ValueError):
            laplace_robustness(1.0, 100, (0.1,), McConfig(trials=10))
        with pytest.raises(ValueError):
            laplace_robustness(1.0, 101, (1.5,), McConfig(trials=10))
