"""Wasserstein-Cramer-Rao bound, efficiency gaps and attainment checks.

For a statistic ``a`` the bound is ``D' G_W^{-1} D`` with
``D = d/dtheta E_theta[a]``. ``D`` is obtained from the interchange
identity ``D_ij = E[<grad a_j, grad Phi_i>]`` and cross-checked against
finite differences of expectations, so a statistic that violates the
regularity behind the identity is reported instead of silently averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .estimators import Statistic
from .families import ParametricFamily1D
from .numerics import (
    McConfig,
    central_diff,
    gauss_legendre_segments,
    mc_mean,
    run_trials,
    sym_inverse,
    symmetrize,
)
from .winfo import WVarMatrix, info_matrix
from .wscore import WassersteinScore, product_score, scores_for

__all__ = [
    "RegularityError",
    "AffineFit",
    "EfficiencyReport",
    "GeodesicVerdict",
    "wcr_bound",
    "efficiency_gap",
    "check_affine_in_score",
    "check_e_geodesic",
]

#: Relative gap below which a quadrature check counts as attainment.
REL_GAP_TOL = 1e-6
#: Number of standard errors tolerated by sampled checks.
MC_SIGMAS = 3.0
AFFINE_TOL = 1e-8


class RegularityError(RuntimeError):
    """The two routes to d/dtheta E[a] disagree."""


@dataclass(frozen=True)
class AffineFit:
    u: float
    v: float
    residual: float
    degenerate: bool = False


@dataclass(frozen=True)
class EfficiencyReport:
    var_w: WVarMatrix
    bound: np.ndarray
    gap: np.ndarray
    gap_min_eig: float
    gap_sigma: np.ndarray
    min_eig_sigma: float
    attained: bool
    dexp: np.ndarray
    dexp_fd: np.ndarray
    info: np.ndarray
    n: int
    route: str
    affine_fit: AffineFit | None = None
    metadata: dict = field(default_factory=dict)
    #: Deterministic error allowance from quadrature and rounding.
    numerical_tol: float = 0.0

    @property
    def wcr_holds(self) -> bool:
        """``gap >= 0`` up to ``MC_SIGMAS`` sampling sigma plus ``numerical_tol``."""
        return self.gap_min_eig >= -(MC_SIGMAS * self.min_eig_sigma + self.numerical_tol)

    @property
    def relative_gap(self) -> float:
        scale = max(abs(np.trace(self.var_w.matrix)), np.finfo(float).tiny)
        return float(np.max(np.abs(self.gap)) / scale)

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "route": self.route,
            "var_w": self.var_w.matrix.tolist(),
            "var_w_stderr": self.var_w.mc_error.tolist(),
            "bound": self.bound.tolist(),
            "gap": self.gap.tolist(),
            "gap_stderr": self.gap_sigma.tolist(),
            "gap_min_eig": self.gap_min_eig,
            "gap_min_eig_stderr": self.min_eig_sigma,
            "relative_gap": self.relative_gap,
            "attained": self.attained,
            "wcr_holds": self.wcr_holds,
            "dexp": self.dexp.tolist(),
            "dexp_fd": self.dexp_fd.tolist(),
            "info": self.info.tolist(),
        }
        if self.affine_fit is not None:
            out["affine_fit"] = vars(self.affine_fit)
        out.update(self.metadata)
        return out


# --------------------------------------------------------------------------
# Monte Carlo route


def _fd_step(t: float) -> float:
    return 1e-5 * max(1.0, abs(t))


def _mc_terms(family, theta, stat: Statistic, n: int, mc: McConfig):
    """Per-trial Gram matrices, interchange and pathwise-difference estimates of D."""
    scores = product_score(scores_for(family, theta), n)
    p, l = family.param_dim, stat.dim
    steps = [_fd_step(t) for t in theta]

    def kernel(rng, size):
        u = rng.random((size, n))
        x = np.asarray(family.quantile(u, theta), dtype=float)
        g = stat.gradient(x)
        V = np.einsum("bin,bjn->bij", g, g)
        D = np.einsum("bpn,bln->bpl", scores.gradient(x), g)
        Dfd = np.empty((size, p, l))
        for i in range(p):
            e = np.zeros(p)
            e[i] = steps[i]
            # common random numbers: same uniforms at theta +- h
            hi = stat.value(np.asarray(family.quantile(u, theta + e), dtype=float))
            lo = stat.value(np.asarray(family.quantile(u, theta - e), dtype=float))
            Dfd[:, i, :] = (hi - lo) / (2 * steps[i])
        return np.concatenate([V.reshape(size, -1), D.reshape(size, -1), Dfd.reshape(size, -1)], axis=1)

    rows = run_trials(kernel, mc)
    ok = np.all(np.isfinite(rows), axis=1)
    if np.mean(~ok) > 1e-3:
        raise RegularityError(f"statistic {stat.name!r} has undefined gradients on {np.mean(~ok):.2%} of draws")
    rows = rows[ok]
    t = rows.shape[0]
    V = rows[:, : l * l].reshape(t, l, l)
    D = rows[:, l * l : l * l + p * l].reshape(t, p, l)
    Dfd = rows[:, l * l + p * l :].reshape(t, p, l)
    return V, D, Dfd


def _check_dexp(D: np.ndarray, Dfd: np.ndarray, tol_abs: float = 1e-6):
    diff = D - Dfd
    t = diff.shape[0]
    mean = diff.mean(axis=0)
    se = diff.std(axis=0, ddof=1) / math.sqrt(t)
    limit = MC_SIGMAS * se + tol_abs * (1.0 + np.abs(D.mean(axis=0)))
    if np.any(np.abs(mean) > limit):
        raise RegularityError(
            "d/dtheta E[a] from the interchange identity and from finite differences disagree: "
            f"{D.mean(axis=0).tolist()} vs {Dfd.mean(axis=0).tolist()}"
        )


def _report_mc(family, theta, stat, n, mc) -> EfficiencyReport:
    Vk, Dk, Dfdk = _mc_terms(family, theta, stat, n, mc)
    _check_dexp(Dk, Dfdk)
    t = Vk.shape[0]
    V, D = mc_mean(Vk).mean, mc_mean(Dk).mean
    G = info_matrix(family, theta, n).matrix
    A = sym_inverse(G)
    bound = symmetrize(D.T @ A @ D)
    gap = symmetrize(V - bound)

    dD = Dk - D
    lin = np.einsum("bpl,pq,qm->blm", dD, A, D)
    infl = (Vk - V) - (lin + np.swapaxes(lin, 1, 2))
    gap_sigma = infl.std(axis=0, ddof=1) / math.sqrt(t)

    w, vecs = np.linalg.eigh(gap)
    v = vecs[:, 0]
    s_lin = np.einsum("l,blm,m->b", v, infl, v).std(ddof=1) / math.sqrt(t)
    # second-order bias of the quadratic form D' A D along v
    Dv = dD @ v
    s_quad = np.mean(np.einsum("bp,pq,bq->b", Dv, A, Dv)) / t
    min_sigma = math.hypot(s_lin, s_quad)

    var_w = WVarMatrix(symmetrize(V), n, Vk.std(axis=0, ddof=1) / math.sqrt(t))
    floor = 1e-12 * max(abs(np.trace(V)), 1e-300)
    attained = bool(np.all(np.abs(gap) <= MC_SIGMAS * gap_sigma + floor))
    return EfficiencyReport(
        var_w,
        bound,
        gap,
        float(w[0]),
        gap_sigma,
        min_sigma,
        attained,
        D,
        mc_mean(Dfdk).mean,
        G,
        n,
        "mc",
        metadata={"trials": t, "seed": mc.seed},
        numerical_tol=floor,
    )


# --------------------------------------------------------------------------
# quadrature route (sample averages of a per-observation function)


def _expect_grid(family, theta, fns: Sequence[Callable], window=None, panels: int = 512) -> np.ndarray:
    """E_theta of several vectorised functions on a shared composite GL grid."""
    lo, hi = window if window is not None else family.window(theta)
    fixed = [lo, hi, family.median(theta), *(k for k in family.kinks(theta) if lo < k < hi)]
    edges = np.union1d(np.linspace(lo, hi, panels + 1), fixed)
    out = []
    for f in fns:
        out.append(np.sum(gauss_legendre_segments(lambda x: f(x) * family.pdf(x, theta), edges)))
    return np.asarray(out)


def _report_quadrature(family, theta, stat: Statistic, n: int) -> EfficiencyReport:
    g, dg = stat.additive
    scores = scores_for(family, theta)
    p = family.param_dim
    fns = [lambda x: dg(x) ** 2] + [lambda x, s=s: dg(x) * s.dphi(x) for s in scores]
    moments = _expect_grid(family, theta, fns)
    V = np.array([[moments[0] / n]])
    D = moments[1:].reshape(p, 1)
    Dfd = np.array(
        [
            [
                central_diff(
                    lambda h, i=i: _expect_grid(family, theta + h * np.eye(p)[i], [g])[0],
                    0.0,
                    _fd_step(theta[i]),
                )
            ]
            for i in range(p)
        ]
    )
    if np.any(np.abs(D - Dfd) > 1e-5 * (1.0 + np.abs(D))):
        raise RegularityError(f"d/dtheta E[a] routes disagree: {D.ravel()} vs {Dfd.ravel()}")
    G = info_matrix(family, theta, n).matrix
    bound = symmetrize(D.T @ sym_inverse(G) @ D)
    gap = symmetrize(V - bound)
    fit = check_affine_in_score(stat, scores[0], family, theta) if p == 1 else None
    zeros = np.zeros_like(gap)
    rel = float(np.max(np.abs(gap)) / max(abs(V[0, 0]), 1e-300))
    return EfficiencyReport(
        WVarMatrix(V, n),
        bound,
        gap,
        float(np.linalg.eigvalsh(gap)[0]),
        zeros,
        0.0,
        rel < REL_GAP_TOL,
        D,
        Dfd,
        G,
        n,
        "quadrature",
        affine_fit=fit,
        numerical_tol=REL_GAP_TOL * abs(float(V[0, 0])),
    )


def efficiency_gap(
    family: ParametricFamily1D,
    theta,
    stat: Statistic,
    n: int,
    mc: McConfig = McConfig(),
    route: str = "auto",
) -> EfficiencyReport:
    """Compare the Wasserstein variance of ``stat`` with its WCR bound.

    ``route="quadrature"`` is exact and available for sample averages
    (statistics with ``additive`` set); ``route="mc"`` works for any
    statistic. ``"auto"`` prefers quadrature.
    """
    theta = family.check_theta(theta)
    if n < 1:
        raise ValueError("n must be at least 1")
    if route == "auto":
        route = "quadrature" if stat.additive is not None else "mc"
    if route == "quadrature":
        if stat.additive is None:
            raise ValueError(f"statistic {stat.name!r} has no per-observation form for quadrature")
        return _report_quadrature(family, theta, stat, n)
    if route == "mc":
        return _report_mc(family, theta, stat, n, mc)
    raise ValueError(f"unknown route {route!r}")


def wcr_bound(
    family: ParametricFamily1D, theta, stat: Statistic, n: int, mc: McConfig = McConfig(), route: str = "auto"
) -> np.ndarray:
    """Right-hand side ``D' G_W^{-1} D`` of the WCR inequality."""
    return efficiency_gap(family, theta, stat, n, mc, route).bound


# --------------------------------------------------------------------------
# attainment characterisations


def check_affine_in_score(
    stat: Statistic | tuple[Callable, Callable],
    score: WassersteinScore,
    family: ParametricFamily1D,
    theta,
) -> AffineFit:
    """Least-squares fit of ``grad a = u * grad Phi`` in ``L2(p_theta)``.

    ``residual`` is the unexplained fraction ``E[(a' - u Phi')^2] / E[a'^2]``;
    it vanishes exactly when ``a = u Phi + v``.
    """
    theta = family.check_theta(theta)
    a, da = stat.additive if isinstance(stat, Statistic) else stat
    a2, aphi, phi2, ea, ephi = _expect_grid(
        family,
        theta,
        [
            lambda x: da(x) ** 2,
            lambda x: da(x) * score.dphi(x),
            lambda x: score.dphi(x) ** 2,
            a,
            score.phi,
        ],
    )
    u = aphi / phi2
    v = ea - u * ephi
    if a2 == 0:
        return AffineFit(0.0, float(ea), 0.0, degenerate=True)
    (res,) = _expect_grid(family, theta, [lambda x: (da(x) - u * score.dphi(x)) ** 2])
    return AffineFit(float(u), float(v), float(res / a2))


@dataclass(frozen=True)
class GeodesicVerdict:
    is_geodesic: bool
    residuals: np.ndarray
    slopes: np.ndarray
    thetas: list

    def to_dict(self) -> dict:
        return {
            "is_geodesic_up_to_reparam": self.is_geodesic,
            "thetas": self.thetas,
            "pairwise_affinity": self.residuals.tolist(),
            "slopes": self.slopes.tolist(),
        }


def check_e_geodesic(family: ParametricFamily1D, thetas: Sequence, tol: float = 1e-6) -> GeodesicVerdict:
    """Test whether scores at different parameters are affinely related.

    Entry ``(a, b)`` of ``residuals`` is the fraction of the variance of
    ``Phi(.; theta_b)`` not explained by an affine function of
    ``Phi(.; theta_a)``, measured under ``p(.; theta_0)``; ``slopes`` holds
    the fitted coefficients, from which a reparametrisation can be built.
    """
    if family.param_dim != 1:
        raise ValueError("e-geodesic check needs a one-parameter family")
    if len(thetas) < 2:
        raise ValueError("need at least two parameter values")
    ths = [family.check_theta(t) for t in thetas]
    scores = [scores_for(family, t)[0] for t in ths]
    ref = ths[0]
    lo, hi = family.window(ref)
    for s in scores:
        lo, hi = max(lo, s.window[0]), min(hi, s.window[1])
    k = len(ths)
    phis = [s.phi for s in scores]
    (mass,) = _expect_grid(family, ref, [lambda x: np.ones_like(x)], window=(lo, hi))
    means = _expect_grid(family, ref, phis, window=(lo, hi)) / mass
    cov = np.empty((k, k))
    for a in range(k):
        for b in range(a, k):
            (c,) = _expect_grid(
                family, ref, [lambda x, a=a, b=b: (phis[a](x) - means[a]) * (phis[b](x) - means[b])], window=(lo, hi)
            )
            cov[a, b] = cov[b, a] = c / mass
    residuals = np.zeros((k, k))
    slopes = np.ones((k, k))
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            alpha = cov[a, b] / cov[a, a]
            slopes[a, b] = alpha
            residuals[a, b] = max(0.0, 1.0 - alpha * cov[a, b] / cov[b, b])
    # direct evaluation for accuracy where the closed form above cancels
    for a in range(k):
        for b in range(k):
            if a == b or residuals[a, b] > 1e-3:
                continue
            alpha = slopes[a, b]
            beta = means[b] - alpha * means[a]
            (r,) = _expect_grid(
                family, ref, [lambda x, a=a, b=b: (phis[b](x) - alpha * phis[a](x) - beta) ** 2], window=(lo, hi)
            )
            residuals[a, b] = r / mass / cov[b, b]
    return GeodesicVerdict(bool(np.all(residuals < tol)), residuals, slopes, [t.tolist() for t in ths])

