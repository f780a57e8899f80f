"""Wasserstein score functions in one dimension.

The score for parameter ``i`` is the potential ``phi`` whose derivative
transports mass along ``theta_i``:

    d/dtheta_i p + d/dx (p * dphi) = 0,    E_theta[phi] = 0.

Integrating once in ``x`` with zero flux at the support boundary gives
``p * dphi = -dF/dtheta_i``, so ``dphi`` is a pointwise ratio and ``phi``
is one quadrature away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .families import ParametricFamily1D
from .numerics import gauss_legendre_segments, integrate

__all__ = [
    "ScoreError",
    "WassersteinScore",
    "ProductScore",
    "solve_score_1d",
    "closed_form_score_ls",
    "scores_for",
    "product_score",
    "continuity_residual",
]

_PANELS = 256
_ORDER = 16


class ScoreError(RuntimeError):
    pass


@dataclass(frozen=True)
class WassersteinScore:
    """Centered score ``phi`` and its spatial derivative ``dphi`` at ``theta``."""

    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    index: int
    theta: np.ndarray
    window: tuple[float, float] = (-math.inf, math.inf)
    source: str = "closed-form"


class _Solved:
    """Numerical score for one (family, theta, index)."""

    def __init__(self, family: ParametricFamily1D, theta: np.ndarray, i: int):
        self.family = family
        self.theta = theta
        self.i = i
        lo, hi = family.window(theta)
        self.lo, self.hi = lo, hi
        anchor = family.median(theta)
        fixed = {lo, hi, anchor, *(k for k in family.kinks(theta) if lo < k < hi)}
        edges = np.union1d(np.linspace(lo, hi, _PANELS + 1), sorted(fixed))
        self.edges = edges

        seg = gauss_legendre_segments(self._dphi_inside, edges, _ORDER)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        k0 = int(np.searchsorted(edges, anchor))
        self.cum = cum - cum[k0]

        pts = (anchor, *family.kinks(theta))
        upper = integrate(
            lambda t: float(self._dphi_inside(t)) * (1.0 - float(family.cdf(t, theta))), anchor, hi, points=pts
        )
        lower = integrate(
            lambda t: float(self._dphi_inside(t)) * float(family.cdf(t, theta)), lo, anchor, points=pts
        )
        # E[int_anchor^X dphi] by Fubini
        self.shift = upper - lower

    def _dphi_inside(self, x):
        x = np.asarray(x, dtype=float)
        p = np.asarray(self.family.pdf(x, self.theta), dtype=float)
        bad = ~(p > 0)
        if np.any(bad):
            where = float(np.atleast_1d(x)[np.atleast_1d(bad)][0])
            raise ScoreError(f"density vanishes or underflows at x={where!r} inside the integration window")
        return -np.asarray(self.family.dtheta_cdf(x, self.theta, self.i), dtype=float) / p

    def _check_window(self, x):
        if np.any((x < self.lo) | (x > self.hi)):
            bad = x[(x < self.lo) | (x > self.hi)].ravel()[0]
            raise ScoreError(f"x={bad!r} outside the integration window [{self.lo:.6g}, {self.hi:.6g}]")

    def dphi(self, x):
        x = np.asarray(x, dtype=float)
        self._check_window(x)
        return self._dphi_inside(x)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        self._check_window(x)
        flat = np.atleast_1d(x).ravel()
        k = np.clip(np.searchsorted(self.edges, flat, side="right") - 1, 0, self.edges.size - 2)
        left = self.edges[k]
        # partial panel from the left edge to x
        nodes, weights = np.polynomial.legendre.leggauss(_ORDER)
        half = 0.5 * (flat - left)
        pts = (0.5 * (flat + left))[:, None] + half[:, None] * nodes[None, :]
        part = half * (self._dphi_inside(pts.ravel()).reshape(pts.shape) @ weights)
        out = self.cum[k] + part - self.shift
        return out.reshape(x.shape) if x.ndim else float(out[0])


def solve_score_1d(family: ParametricFamily1D, theta, i: int) -> WassersteinScore:
    """Solve the continuity equation for parameter ``i`` numerically.

    ``dphi = -(dF/dtheta_i) / p`` pointwise; ``phi`` integrates ``dphi`` from
    the median and is then shifted so that ``E_theta[phi] = 0``.

    Raises
    ------
    ScoreError
        If the density vanishes inside the integration window, or when the
        returned callables are evaluated outside it.
    """
    theta = family.check_theta(theta)
    if not 0 <= i < family.param_dim:
        raise IndexError(f"parameter index {i} out of range")
    s = _Solved(family, theta, i)
    return WassersteinScore(s.phi, s.dphi, i, theta, (s.lo, s.hi), source="solver")


def closed_form_score_ls(theta, which: str | int) -> WassersteinScore:
    """Exact scores of a location-scale family with standardised base.

    ``phi_mu = x - mu`` and ``phi_sigma = (x - mu)^2 / (2 sigma) - sigma / 2``.
    """
    mu, sigma = (float(t) for t in theta)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    th = np.array([mu, sigma])
    if which in ("mu", 0):
        return WassersteinScore(
            lambda x: np.asarray(x, dtype=float) - mu,
            lambda x: np.ones_like(np.asarray(x, dtype=float)),
            0,
            th,
        )
    if which in ("sigma", 1):
        return WassersteinScore(
            lambda x: (np.asarray(x, dtype=float) - mu) ** 2 / (2 * sigma) - sigma / 2,
            lambda x: (np.asarray(x, dtype=float) - mu) / sigma,
            1,
            th,
        )
    raise ValueError(f"unknown score component {which!r}")


def scores_for(family: ParametricFamily1D, theta) -> list[WassersteinScore]:
    """All per-parameter scores, closed-form where one is known."""
    theta = family.check_theta(theta)
    if family.kind == "location-scale":
        return [closed_form_score_ls(theta, k) for k in range(2)]
    if family.kind == "location" and abs(family.base.mean) <= 1e-12:
        mu = theta[0]
        return [
            WassersteinScore(
                lambda x: np.asarray(x, dtype=float) - mu, lambda x: np.ones_like(np.asarray(x, dtype=float)), 0, theta
            )
        ]
    if family.kind == "scale" and abs(family.base.mean) <= 1e-12:
        s = theta[0]
        m2 = family.base.variance + family.base.mean**2
        return [
            WassersteinScore(
                lambda x: np.asarray(x, dtype=float) ** 2 / (2 * s) - m2 * s / 2,
                lambda x: np.asarray(x, dtype=float) / s,
                0,
                theta,
            )
        ]
    return [solve_score_1d(family, theta, k) for k in range(family.param_dim)]


@dataclass(frozen=True)
class ProductScore:
    """Score of ``n`` i.i.d. observations: the sum of per-observation scores."""

    scores: tuple[WassersteinScore, ...]
    n: int

    def value(self, sample) -> np.ndarray:
        """``sum_t phi_i(x_t)`` for each parameter; batched over leading axes."""
        x = self._check(sample)
        return np.stack([np.sum(s.phi(x), axis=-1) for s in self.scores], axis=-1)

    def gradient(self, sample) -> np.ndarray:
        """Array ``(..., p, n)`` with entries ``dphi_i(x_t)``."""
        x = self._check(sample)
        return np.stack([np.broadcast_to(s.dphi(x), x.shape) for s in self.scores], axis=-2)

    def _check(self, sample):
        x = np.asarray(sample, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected samples of size {self.n}, got {x.shape[-1]}")
        return x


def product_score(scores: WassersteinScore | Sequence[WassersteinScore], n: int) -> ProductScore:
    if n < 1:
        raise ValueError("n must be at least 1")
    if isinstance(scores, WassersteinScore):
        scores = [scores]
    return ProductScore(tuple(scores), n)


def continuity_residual(family: ParametricFamily1D, theta, score: WassersteinScore, x) -> np.ndarray:
    """``d/dtheta_i p + d/dx (p * dphi)`` at ``x`` by central differences."""
    theta = family.check_theta(theta)
    x = np.asarray(x, dtype=float)
    i = score.index
    ht = 1e-5 * max(1.0, abs(theta[i]))
    e = np.zeros_like(theta)
    e[i] = ht
    dp = (family.pdf(x, theta + e) - family.pdf(x, theta - e)) / (2 * ht)
    hx = 1e-5 * np.maximum(1.0, np.abs(x))
    lo, hi = score.window
    xp, xm = np.minimum(x + hx, hi), np.maximum(x - hx, lo)

    def flux(t):
        return family.pdf(t, theta) * score.dphi(t)

    return dp + (flux(xp) - flux(xm)) / (xp - xm)
