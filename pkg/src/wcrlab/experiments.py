"""Reproduction experiments.

* the asymptotic-efficiency sweep of the Wasserstein estimator in a
  location-scale family (scaled gap ``1 - c_n^2`` shrinking with ``n``);
* the Laplace noise-robustness comparison of the sample mean and the
  sample median under additive Gaussian noise;
* the closed-form pieces behind the median prediction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .efficiency import efficiency_gap
from .estimators import WASSERSTEIN
from .families import BaseDensity, LAPLACE, draw, make_location_scale
from .numerics import McConfig, gaussian_pdf, integrate, mc_mean, richardson, run_trials
from .winfo import info_matrix, wvariance_mc

__all__ = [
    "CnEstimate",
    "RobustnessReport",
    "chi_moment_cn",
    "expected_sample_std",
    "asymptotic_efficiency_sweep",
    "laplace_robustness",
    "median_asymptotic_variance",
    "convolved_laplace_median_density",
    "convolved_laplace_density_quadrature",
    "convolved_density_slope_at_zero",
    "noisy_median_variance_prediction",
    "write_csv",
]

SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class CnEstimate:
    value: float
    stderr: float
    method: str


def chi_moment_cn(n: int) -> float:
    """``E[sample std]`` (divisor n) for n standard normal draws.

    ``sqrt(2/n) * Gamma(n/2) / Gamma((n-1)/2)``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    return math.sqrt(2.0 / n) * math.exp(special.gammaln(n / 2) - special.gammaln((n - 1) / 2))


def expected_sample_std(
    base: BaseDensity, n: int, method: str = "mc", mc: McConfig = McConfig()
) -> CnEstimate:
    """``c_n``, the mean sample standard deviation (divisor n) under ``base``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if method == "gaussian-analytic":
        if base.name != "gaussian":
            raise ValueError("the analytic route is only valid for the Gaussian base")
        return CnEstimate(chi_moment_cn(n), 0.0, method)
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    fam = make_location_scale(base)
    theta = np.array([0.0, 1.0])

    def kernel(rng, size):
        x = draw(fam, theta, rng, (size, n))
        return x.std(axis=1)

    est = mc_mean(run_trials(kernel, mc))
    return CnEstimate(float(est.mean), float(est.stderr), method)


def asymptotic_efficiency_sweep(
    base: BaseDensity, theta: Sequence[float], ns: Sequence[int], mc: McConfig = McConfig()
) -> list[dict]:
    """Efficiency gap of the Wasserstein estimator for increasing ``n``.

    Location-scale equivariance gives ``E[mu_hat] = mu`` and
    ``E[sigma_hat] = c_n sigma``, so ``d/dtheta E = diag(1, c_n)`` with
    ``c_n`` from Monte Carlo. ``Var^W`` is the sampled Gram matrix of the
    estimator's gradient and ``G_W`` comes from quadrature. Each row also
    carries the fully sampled gap from :func:`efficiency_gap` as a check.
    """
    ns = list(ns)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n values must be increasing")
    fam = make_location_scale(base)
    theta = fam.check_theta(theta)
    rows = []
    for n in ns:
        V = wvariance_mc(WASSERSTEIN, fam, theta, n, mc).matrix
        G = info_matrix(fam, theta, n).matrix
        cn = expected_sample_std(base, n, "mc", mc)
        D = np.diag([1.0, cn.value])
        scaled = n * (V - D.T @ np.linalg.inv(G) @ D)
        full = efficiency_gap(fam, theta, WASSERSTEIN, n, mc, route="mc")
        row = {
            "n": n,
            "c_n": cn.value,
            "c_n_stderr": cn.stderr,
            "n_var_w_11": n * V[0, 0],
            "n_var_w_22": n * V[1, 1],
            "n_var_w_12": n * V[0, 1],
            "info_over_n_11": G[0, 0] / n,
            "info_over_n_22": G[1, 1] / n,
            "scaled_gap_11": scaled[0, 0],
            "scaled_gap_12": scaled[0, 1],
            "scaled_gap_22": scaled[1, 1],
            # d(1 - c^2) = -2c dc, with G_W/n = 1
            "scaled_gap_22_stderr": 2 * cn.value * cn.stderr,
            "mc_scaled_gap_22": n * full.gap[1, 1],
            "mc_gap_min_eig": full.gap_min_eig,
            "mc_gap_min_eig_stderr": full.min_eig_sigma,
        }
        if base.name == "gaussian":
            c = chi_moment_cn(n)
            row["c_n_oracle"] = c
            row["scaled_gap_22_oracle"] = 1.0 - c * c
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# median and convolution formulas


def median_asymptotic_variance(density_at_median: float, n: int) -> float:
    """Large-n variance ``1 / (4 n p(m)^2)`` of the sample median."""
    if not density_at_median > 0:
        raise ValueError("density at the median must be positive")
    return 1.0 / (4.0 * n * density_at_median**2)


def convolved_laplace_median_density(sigma: float, eps: float) -> float:
    """Density of ``x + z`` at the median, ``x`` Laplace(mu, sigma), ``z ~ N(0, eps^2)``.

    Equals ``sqrt(2)/sigma * Phi(-sqrt(2) eps/sigma) * exp(eps^2/sigma^2)``,
    evaluated through the scaled complementary error function.
    """
    if sigma <= 0 or eps < 0:
        raise ValueError("need sigma > 0 and eps >= 0")
    return float(special.erfcx(eps / sigma)) / (math.sqrt(2.0) * sigma)


def convolved_laplace_density_quadrature(x: float, sigma: float, eps: float, mu: float = 0.0) -> float:
    """Direct quadrature of the Laplace-Gaussian convolution at ``x``."""
    if eps == 0:
        return float(LAPLACE.pdf((x - mu) / sigma)) / sigma
    half = 40.0 * eps
    return integrate(
        lambda z: float(LAPLACE.pdf((x - z - mu) / sigma)) / sigma * float(gaussian_pdf(z / eps)) / eps,
        -half,
        half,
        points=[x - mu],
    )


def convolved_density_slope_at_zero(sigma: float, h: float = 1e-2, levels: int = 4) -> float:
    """Right derivative in ``eps`` of the convolved median density at 0."""
    p0 = convolved_laplace_median_density(sigma, 0.0)
    return richardson(lambda e: (convolved_laplace_median_density(sigma, e) - p0) / e, h, order=1, levels=levels)


def noisy_median_variance_prediction(sigma: float, eps: float, n: int, first_order: bool = False) -> float:
    """Large-n variance of the median of Laplace data with Gaussian noise.

    By default the exact convolved density is plugged into
    :func:`median_asymptotic_variance`; ``first_order=True`` returns the
    linearisation ``sigma^2/(2n) * (1 + 4 eps / (sqrt(pi) sigma))``.
    """
    if first_order:
        return sigma**2 / (2 * n) * (1.0 + 4.0 * eps / (SQRT_PI * sigma))
    return median_asymptotic_variance(convolved_laplace_median_density(sigma, eps), n)


# --------------------------------------------------------------------------
# Laplace robustness


@dataclass
class RobustnessReport:
    sigma: float
    n: int
    eps: list[float]
    trials: int
    var_w_clean: float
    var_w_clean_stderr: float
    var_ml_clean: float
    var_ml_clean_stderr: float
    rows: list[dict]
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        return {
            "sigma": self.sigma,
            "n": self.n,
            "trials": self.trials,
            "var_w_clean": self.var_w_clean,
            "var_w_clean_stderr": self.var_w_clean_stderr,
            "var_w_clean_expected": self.sigma**2 / self.n,
            "var_ml_clean": self.var_ml_clean,
            "var_ml_clean_stderr": self.var_ml_clean_stderr,
            "var_ml_clean_expected": self.sigma**2 / (2 * self.n),
            "rows": self.rows,
            "checks": self.checks,
            "passed": self.passed,
        }


def _var_and_diff(a: np.ndarray, b: np.ndarray):
    """Variance of ``b``, and the variance difference ``var(a) - var(b)`` with standard errors."""
    t = a.shape[0]
    ca2 = (a - a.mean()) ** 2
    cb2 = (b - b.mean()) ** 2
    corr = t / (t - 1)
    d = ca2 - cb2
    return (
        cb2.mean() * corr,
        cb2.std(ddof=1) * corr / math.sqrt(t),
        d.mean() * corr,
        d.std(ddof=1) * corr / math.sqrt(t),
    )


def laplace_robustness(
    sigma: float = 1.0,
    n: int = 1001,
    eps: Sequence[float] = (0.05, 0.1, 0.2),
    mc: McConfig = McConfig(trials=200_000),
    mu: float = 0.0,
) -> RobustnessReport:
    """Noise sensitivity of the sample mean and the sample median under Laplace data.

    The same Laplace draws and the same standard normal draws (scaled by
    each ``eps``) are used for every cell, so variance differences are
    estimated with common random numbers.
    """
    if n % 2 == 0:
        raise ValueError("n must be odd")
    eps = [float(e) for e in eps]
    if any(not 0 < e < sigma for e in eps):
        raise ValueError("noise levels must lie in (0, sigma)")
    fam = make_location_scale(LAPLACE)
    theta = np.array([mu, sigma])
    k = len(eps)

    def kernel(rng, size):
        x = draw(fam, theta, rng, (size, n))
        z = rng.standard_normal((size, n))
        out = np.empty((size, 2 * (k + 1)))
        out[:, 0] = x.mean(axis=1)
        out[:, 1] = np.median(x, axis=1)
        zbar = z.mean(axis=1)
        for j, e in enumerate(eps):
            out[:, 2 + 2 * j] = out[:, 0] + e * zbar
            out[:, 3 + 2 * j] = np.median(x + e * z, axis=1)
        return out

    res = run_trials(kernel, mc)
    t = res.shape[0]
    w0, m0 = res[:, 0], res[:, 1]
    rows = []
    for j, e in enumerate(eps):
        vw0, vw0_se, dw, dw_se = _var_and_diff(res[:, 2 + 2 * j], w0)
        vm0, vm0_se, dm, dm_se = _var_and_diff(res[:, 3 + 2 * j], m0)
        rows.append(
            {
                "n": n,
                "eps": e,
                "var_w_clean": vw0,
                "var_w_noisy": vw0 + dw,
                "var_ml_clean": vm0,
                "var_ml_noisy": vm0 + dm,
                "slope_w": dw / e**2,
                "slope_w_stderr": dw_se / e**2,
                "slope_w_pred": 1.0 / n,
                "slope_ml": dm / e**2,
                "slope_ml_stderr": dm_se / e**2,
                "slope_ml_pred": 2.0 * sigma / (SQRT_PI * n * e),
                "slope_ml_pred_exact_density": (
                    noisy_median_variance_prediction(sigma, e, n) - sigma**2 / (2 * n)
                )
                / e**2,
                "var_ml_noisy_pred": noisy_median_variance_prediction(sigma, e, n),
            }
        )
    vw, vw_se = rows[0]["var_w_clean"], _var_and_diff(w0, w0)[1]
    vm, vm_se = rows[0]["var_ml_clean"], _var_and_diff(m0, m0)[1]

    checks = {
        "var_w_clean_within_2pct": abs(vw / (sigma**2 / n) - 1) <= 0.02,
        "var_ml_clean_within_10pct": abs(vm / (sigma**2 / (2 * n)) - 1) <= 0.10,
    }
    for r in rows:
        r["w_slope_ok"] = abs(r["slope_w"] - r["slope_w_pred"]) <= 3 * r["slope_w_stderr"]
        r["ml_slope_ok"] = abs(r["slope_ml"] / r["slope_ml_pred"] - 1) <= 0.15
        checks[f"w_slope_3sigma_eps={r['eps']:g}"] = r["w_slope_ok"]
        checks[f"ml_slope_15pct_eps={r['eps']:g}"] = r["ml_slope_ok"]
    by_eps = sorted(rows, key=lambda r: r["eps"])
    checks["ml_slope_increases_as_eps_decreases"] = all(
        a["slope_ml"] > b["slope_ml"] for a, b in zip(by_eps, by_eps[1:])
    )
    return RobustnessReport(sigma, n, eps, t, vw, vw_se, vm, vm_se, rows, {k: bool(v) for k, v in checks.items()})


def write_csv(rows: Sequence[dict], path) -> None:
    if not rows:
        return
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
