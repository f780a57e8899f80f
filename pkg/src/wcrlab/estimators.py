"""Statistics on n-samples together with their exact gradients.

Every :class:`Statistic` is batched: ``value`` maps an array of shape
``(..., n)`` to ``(..., l)`` and ``gradient`` maps it to ``(..., l, n)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Statistic",
    "WassersteinEstimate",
    "MedianResult",
    "wasserstein_estimator",
    "grad_wasserstein_estimator",
    "sample_median",
    "mean_of_squares",
    "mle",
    "SAMPLE_MEAN",
    "SAMPLE_STD",
    "WASSERSTEIN",
    "MEDIAN",
    "MEAN_OF_SQUARES",
    "STATISTICS",
    "get_statistic",
]


@dataclass(frozen=True)
class Statistic:
    """A map from n-samples to R^l with its gradient in the data.

    ``additive`` is set for sample averages ``mean_t g(x_t)`` and holds
    ``(g, g')`` for a single observation; it enables exact quadrature
    routes that do not need sampling.
    """

    name: str
    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    additive: tuple[Callable, Callable] | None = None


@dataclass(frozen=True)
class WassersteinEstimate:
    mu: float
    sigma: float
    degenerate: bool = False


@dataclass(frozen=True)
class MedianResult:
    value: float
    gradient: np.ndarray
    tie: bool = False


def _sample(x, min_n: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-d sample")
    if x.size < min_n:
        raise ValueError(f"need at least {min_n} observations")
    return x


def wasserstein_estimator(sample) -> WassersteinEstimate:
    """Root of the summed location-scale scores: mean and std with divisor n.

    A constant sample has its sigma root on the boundary; it is returned
    with ``sigma = 0`` and ``degenerate=True``.
    """
    x = _sample(sample, 2)
    mu = float(np.mean(x))
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    return WassersteinEstimate(mu, sigma, degenerate=sigma == 0.0)


def grad_wasserstein_estimator(sample) -> np.ndarray:
    """Rows ``grad mu_hat = 1/n`` and ``grad sigma_hat = (x_t - xbar) / (n sigma_hat)``."""
    x = _sample(sample, 2)
    est = wasserstein_estimator(x)
    if est.degenerate:
        raise ValueError("gradient of the sample std is undefined for a constant sample")
    n = x.size
    return np.vstack([np.full(n, 1.0 / n), (x - est.mu) / (n * est.sigma)])


def sample_median(sample) -> MedianResult:
    """Median with its one-hot (odd n) or two-halves (even n) gradient.

    Ties at a middle position pick the lowest original index and set
    ``tie``; a warning is issued as well.
    """
    x = _sample(sample, 1)
    n = x.size
    order = np.argsort(x, kind="stable")
    grad = np.zeros(n)
    if n % 2:
        positions = [(n - 1) // 2]
        weight = 1.0
    else:
        positions = [n // 2 - 1, n // 2]
        weight = 0.5
    tie = False
    used: set[int] = set()
    for pos in positions:
        v = x[order[pos]]
        same = np.flatnonzero(x == v)
        if same.size > 1:
            tie = True
            idx = next(int(k) for k in same if int(k) not in used)
        else:
            idx = int(order[pos])
        used.add(idx)
        grad[idx] += weight
    if tie:
        warnings.warn("tied observations at the median; gradient assigned to the lowest index")
    value = float(np.mean(x[order[positions]]))
    return MedianResult(value, grad, tie)


def mean_of_squares(sample) -> tuple[float, np.ndarray]:
    x = _sample(sample, 1)
    return float(np.mean(x**2)), 2.0 * x / x.size


def mle(kind: str, sample):
    """Maximum likelihood estimate for the built-in location-scale families.

    ``gaussian-ls`` gives a :class:`WassersteinEstimate` (the two
    coincide); ``laplace-ls`` gives the location estimate only, the sample
    median.
    """
    x = _sample(sample, 2)
    if kind in ("gaussian-ls", "gaussian"):
        return wasserstein_estimator(x)
    if kind in ("laplace-ls", "laplace"):
        return sample_median(x).value
    raise ValueError(f"no MLE for family kind {kind!r}")


# --------------------------------------------------------------------------
# batched statistics


def _mean_value(x):
    return np.mean(x, axis=-1, keepdims=True)


def _mean_grad(x):
    n = x.shape[-1]
    return np.full(x.shape[:-1] + (1, n), 1.0 / n)


def _std_value(x):
    return np.sqrt(np.mean((x - x.mean(axis=-1, keepdims=True)) ** 2, axis=-1, keepdims=True))


def _std_grad(x):
    n = x.shape[-1]
    c = x - x.mean(axis=-1, keepdims=True)
    s = np.sqrt(np.mean(c**2, axis=-1, keepdims=True))
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(s > 0, c / (n * s), np.nan)
    return g[..., None, :]


def _median_value(x):
    return np.median(x, axis=-1, keepdims=True)


def _median_grad(x):
    n = x.shape[-1]
    order = np.argsort(x, axis=-1, kind="stable")
    g = np.zeros(x.shape)
    if n % 2:
        np.put_along_axis(g, order[..., (n - 1) // 2 : (n + 1) // 2], 1.0, axis=-1)
    else:
        np.put_along_axis(g, order[..., n // 2 - 1 : n // 2 + 1], 0.5, axis=-1)
    return g[..., None, :]


def _msq_value(x):
    return np.mean(x**2, axis=-1, keepdims=True)


def _msq_grad(x):
    return (2.0 * x / x.shape[-1])[..., None, :]


SAMPLE_MEAN = Statistic(
    "mean", 1, _mean_value, _mean_grad, additive=(lambda t: t, lambda t: np.ones_like(np.asarray(t, dtype=float)))
)
SAMPLE_STD = Statistic("std", 1, _std_value, _std_grad)
WASSERSTEIN = Statistic(
    "wasserstein",
    2,
    lambda x: np.concatenate([_mean_value(x), _std_value(x)], axis=-1),
    lambda x: np.concatenate([_mean_grad(x), _std_grad(x)], axis=-2),
)
MEDIAN = Statistic("median", 1, _median_value, _median_grad)
MEAN_OF_SQUARES = Statistic(
    "mean-sq",
    1,
    _msq_value,
    _msq_grad,
    additive=(lambda t: np.asarray(t, dtype=float) ** 2, lambda t: 2.0 * np.asarray(t, dtype=float)),
)

STATISTICS = {
    "wasserstein": WASSERSTEIN,
    "mean": SAMPLE_MEAN,
    "std": SAMPLE_STD,
    "median": MEDIAN,
    "mle-laplace": MEDIAN,
    "mean-sq": MEAN_OF_SQUARES,
}


def get_statistic(name: str) -> Statistic:
    try:
        return STATISTICS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(STATISTICS)}") from None


def gradient_norms(stat: Statistic, sample) -> np.ndarray:
    """Squared gradient norms ``|grad a_i|^2`` for one sample."""
    g = stat.gradient(np.asarray(sample, dtype=float))
    return np.sum(g * g, axis=-1)

