"""Wasserstein information matrix, Wasserstein variance and 1-D W2."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .families import ParametricFamily1D, draw
from .numerics import (
    McConfig,
    QuadratureError,
    gauss_legendre_segments,
    integrate,
    is_psd,
    mc_mean,
    run_trials,
    symmetrize,
)
from .wscore import WassersteinScore

__all__ = [
    "InfoMatrix",
    "WVarMatrix",
    "DegenerateStatistic",
    "info_matrix",
    "wvariance_quadrature",
    "wvariance_mc",
    "transport_cost_1d",
    "w2_distance_1d",
    "transport_tail_bound",
    "quadratic_approx_check",
]

#: Quantile levels are clipped to [U_CLIP, 1 - U_CLIP] in W2 integrals.
U_CLIP = 1e-10


class DegenerateStatistic(RuntimeError):
    pass


@dataclass(frozen=True)
class InfoMatrix:
    matrix: np.ndarray
    theta: np.ndarray
    n_obs: int = 1

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def psd(self) -> bool:
        return is_psd(self.matrix)


@dataclass(frozen=True)
class WVarMatrix:
    matrix: np.ndarray
    n_obs: int = 1
    mc_error: np.ndarray | None = None

    def __post_init__(self):
        if self.mc_error is None:
            object.__setattr__(self, "mc_error", np.zeros_like(self.matrix))


def _pair_expectation(family, theta, f: Callable[[float], float]) -> float:
    lo, hi = family.window(theta)
    return integrate(f, lo, hi, points=(*family.kinks(theta), family.median(theta)))


def info_matrix(
    family: ParametricFamily1D,
    theta,
    n_obs: int = 1,
    scores: Sequence[WassersteinScore] | None = None,
) -> InfoMatrix:
    """``G_W(theta)`` for ``n_obs`` i.i.d. observations.

    Without ``scores`` the entries are ``int dF_i dF_j / p dx`` over the
    integration window; with scores they are ``E[dphi_i dphi_j]``. Either way
    the result for ``n_obs`` observations is ``n_obs`` times the single one.
    """
    theta = family.check_theta(theta)
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    p = family.param_dim
    G = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            if scores is None:

                def f(t, i=i, j=j):
                    dens = float(family.pdf(t, theta))
                    if dens <= 0:
                        return 0.0
                    return float(family.dtheta_cdf(t, theta, i)) * float(family.dtheta_cdf(t, theta, j)) / dens

            else:

                def f(t, i=i, j=j):
                    return float(scores[i].dphi(t)) * float(scores[j].dphi(t)) * float(family.pdf(t, theta))

            G[i, j] = G[j, i] = _pair_expectation(family, theta, f)
    return InfoMatrix(n_obs * G, theta, n_obs)


def wvariance_quadrature(
    stat_grad: Callable[[float], Sequence[float] | float], family: ParametricFamily1D, theta
) -> WVarMatrix:
    """Wasserstein variance ``E[grad a_i * grad a_j]`` of a one-observation statistic."""
    theta = family.check_theta(theta)
    l = np.atleast_1d(np.asarray(stat_grad(family.median(theta)), dtype=float)).size
    V = np.empty((l, l))
    for i in range(l):
        for j in range(i, l):

            def f(t, i=i, j=j):
                g = np.atleast_1d(np.asarray(stat_grad(t), dtype=float))
                return g[i] * g[j] * float(family.pdf(t, theta))

            V[i, j] = V[j, i] = _pair_expectation(family, theta, f)
    return WVarMatrix(V, 1)


def wvariance_mc(stat, family: ParametricFamily1D, theta, n: int, mc: McConfig = McConfig()) -> WVarMatrix:
    """Monte Carlo Wasserstein variance of an ``n``-sample statistic.

    Entry ``(i, j)`` averages ``<grad a_i, grad a_j>`` over draws, with its
    standard error in ``mc_error``.

    Raises
    ------
    DegenerateStatistic
        If the gradient is undefined on more than 0.1% of draws.
    """
    theta = family.check_theta(theta)

    def kernel(rng, size):
        x = draw(family, theta, rng, (size, n))
        g = stat.gradient(x)
        return np.einsum("bin,bjn->bij", g, g)

    gram = run_trials(kernel, mc)
    ok = np.all(np.isfinite(gram), axis=(1, 2))
    if np.mean(~ok) > 1e-3:
        raise DegenerateStatistic(
            f"gradient of {getattr(stat, 'name', stat)!r} undefined on {np.mean(~ok):.2%} of draws"
        )
    est = mc_mean(gram[ok])
    return WVarMatrix(symmetrize(est.mean), n, symmetrize(est.stderr))


def transport_cost_1d(
    fam_p: ParametricFamily1D, theta_p, fam_q: ParametricFamily1D, theta_q, clip: float = U_CLIP
) -> float:
    """``int_0^1 (Q_p(u) - Q_q(u))^2 du``: the optimal quadratic transport cost.

    The quantile coupling is optimal on the line. Levels outside
    ``[clip, 1 - clip]`` are dropped.
    """
    tp, tq = fam_p.check_theta(theta_p), fam_q.check_theta(theta_q)

    def f(u):
        return float((fam_p.quantile(u, tp) - fam_q.quantile(u, tq)) ** 2)

    # quantile kinks sit at the cdf levels of density kinks
    pts = [0.5]
    pts += [float(fam_p.cdf(k, tp)) for k in fam_p.kinks(tp)]
    pts += [float(fam_q.cdf(k, tq)) for k in fam_q.kinks(tq)]
    # geometric breaks tame the logarithmic growth of quantiles at the ends
    tails = 10.0 ** -np.arange(1, int(-math.log10(clip)))
    pts += [*tails, *(1.0 - tails)]
    try:
        return integrate(f, clip, 1.0 - clip, points=pts)
    except QuadratureError as exc:
        warnings.warn(f"W2 adaptive quadrature did not converge ({exc}); using a fixed composite rule")
        ends = np.geomspace(clip, 0.1, 200)
        edges = np.unique(np.concatenate([ends, np.linspace(0.1, 0.9, 801), 1.0 - ends, pts]))
        g = lambda u: (fam_p.quantile(u, tp) - fam_q.quantile(u, tq)) ** 2  # noqa: E731
        return float(np.sum(gauss_legendre_segments(g, edges)))


def transport_tail_bound(
    fam_p: ParametricFamily1D, theta_p, fam_q: ParametricFamily1D, theta_q, clip: float = U_CLIP
) -> float:
    """Upper bound on the cost dropped by clipping quantile levels to ``[clip, 1 - clip]``.

    Uses ``(a - b)^2 <= 2 a^2 + 2 b^2`` and the partial second moments
    ``int_0^clip Q(u)^2 du = E[X^2; X < Q(clip)]`` at both ends.
    """
    total = 0.0
    for fam, th in ((fam_p, fam_p.check_theta(theta_p)), (fam_q, fam_q.check_theta(theta_q))):
        lo, hi = fam.support(th)
        qlo, qhi = float(fam.quantile(clip, th)), float(fam.quantile(1.0 - clip, th))

        def m2(t, fam=fam, th=th):
            return t * t * float(fam.pdf(t, th))

        total += integrate(m2, lo, qlo) + integrate(m2, qhi, hi)
    return 2.0 * total


def w2_distance_1d(
    fam_p: ParametricFamily1D, theta_p, fam_q: ParametricFamily1D | None = None, theta_q=None
) -> float:
    """W2 with the halved convention ``W2^2 = inf E|X - Y|^2 / 2``.

    With that convention ``W2(p_theta, p_theta+d)^2 = d' G_W d / 2 + o(|d|^2)``.
    If ``fam_q`` is omitted the same family is used for both arguments.
    """
    fam_q = fam_p if fam_q is None else fam_q
    return math.sqrt(0.5 * transport_cost_1d(fam_p, theta_p, fam_q, theta_q))


def quadratic_approx_check(
    family: ParametricFamily1D, theta, direction: Sequence[float], steps: Sequence[float]
) -> list[dict]:
    """Ratios ``W2(p_theta, p_theta+t*d)^2 / (t^2 d' G_W d / 2)`` along ``steps``."""
    theta = family.check_theta(theta)
    d = np.asarray(direction, dtype=float)
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    G = info_matrix(family, theta).matrix
    rows = []
    for t in steps:
        if t == 0:
            raise ValueError("steps must be nonzero")
        delta = t * d
        w2sq = 0.5 * transport_cost_1d(family, theta, family, theta + delta)
        quad_form = 0.5 * float(delta @ G @ delta)
        tail = 0.5 * transport_tail_bound(family, theta, family, theta + delta)
        rows.append(
            {"t": float(t), "w2_sq": w2sq, "quadratic": quad_form, "ratio": w2sq / quad_form, "tail_bound": tail}
        )
    return rows
