"""Shared numerical kernel.

Quadrature, finite differences, the standard Gaussian cdf, seeded Monte
Carlo aggregation and a few helpers for small symmetric matrices.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _integrate
from scipy import special

__all__ = [
    "QuadratureError",
    "Quadrature",
    "integrate",
    "gauss_legendre_segments",
    "gaussian_cdf",
    "gaussian_pdf",
    "central_diff",
    "richardson",
    "McConfig",
    "McEstimate",
    "run_trials",
    "mc_mean",
    "symmetrize",
    "min_eig",
    "is_psd",
    "sym_inverse",
]

SQRT2PI = math.sqrt(2.0 * math.pi)


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error~{error:.3g})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class Quadrature:
    """Tolerances for :func:`integrate`.

    ``max_depth`` bounds the number of adaptive subdivisions.
    """

    abs_tol: float = 1e-13
    rel_tol: float = 1e-11
    max_depth: int = 400
    rule: str = "gauss-kronrod"


DEFAULT_QUADRATURE = Quadrature()


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    quad: Quadrature = DEFAULT_QUADRATURE,
    points: Sequence[float] | None = None,
) -> float:
    """Integrate a scalar function over ``[a, b]``.

    Parameters
    ----------
    f : callable
        Integrand, called with a float.
    a, b : float
        Finite or infinite limits.
    quad : Quadrature
        Tolerances.
    points : sequence of float, optional
        Interior points where ``f`` has kinks or other local difficulties.

    Raises
    ------
    QuadratureError
        If the subdivision limit is hit or the integrand is not finite.
    """
    if a == b:
        return 0.0
    if a > b:
        return -integrate(f, b, a, quad, points)
    pts = None
    if points is not None:
        pts = sorted({float(p) for p in points if a < p < b})
    if pts and (math.isinf(a) or math.isinf(b)):
        # quad ignores ``points`` on infinite ranges; split by hand
        edges = [a, *pts, b]
        return math.fsum(integrate(f, lo, hi, quad) for lo, hi in zip(edges[:-1], edges[1:]))
    res = _integrate.quad(
        f,
        a,
        b,
        epsabs=quad.abs_tol,
        epsrel=quad.rel_tol,
        limit=quad.max_depth,
        points=pts or None,
        full_output=1,
    )
    value, err, info = res[0], res[1], res[2]
    ier = 0 if len(res) == 3 else 1
    if not math.isfinite(value):
        raise QuadratureError("non-finite integrand", value, err)
    if ier and err > max(quad.abs_tol, quad.rel_tol * abs(value)) * 100:
        raise QuadratureError(f"quadrature failed after {info['last']} subdivisions", value, err)
    return float(value)


@lru_cache(maxsize=8)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def gauss_legendre_segments(
    f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, order: int = 16
) -> np.ndarray:
    """Integrals of a vectorised ``f`` over each ``[edges[k], edges[k+1]]``.

    Fixed-order rule; the caller is responsible for choosing segments on
    which ``f`` is smooth.
    """
    edges = np.asarray(edges, dtype=float)
    nodes, weights = _legendre(order)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * nodes[None, :]
    vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    return half * (vals @ weights)


def gaussian_cdf(x):
    """Standard normal cdf, accurate to a few ulp across the real line."""
    return special.ndtr(x)


def gaussian_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT2PI


def default_step(x: float) -> float:
    return 1e-5 * max(1.0, abs(x))


def central_diff(f: Callable[[float], float], x: float, h: float | None = None) -> float:
    """Second-order central difference ``(f(x+h) - f(x-h)) / 2h``."""
    if h is None:
        h = default_step(x)
    fp, fm = f(x + h), f(x - h)
    if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
        raise ValueError(f"non-finite function value near x={x!r}")
    return (fp - fm) / (2.0 * h)


def richardson(g: Callable[[float], float], h: float, order: int = 1, levels: int = 3) -> float:
    """Extrapolate ``g(h) -> g(0)`` for an error expansion in powers of ``h``.

    ``order`` is the leading error power (1 for one-sided differences,
    2 for central ones); successive powers are assumed to step by ``order``.
    """
    table = [g(h / 2**k) for k in range(levels)]
    p = order
    for _ in range(levels - 1):
        fac = 2.0**p
        table = [(fac * table[k + 1] - table[k]) / (fac - 1.0) for k in range(len(table) - 1)]
        p += order
    return table[0]


# --------------------------------------------------------------------------
# Monte Carlo

#: Trials per random substream. Fixed so that results do not depend on how
#: blocks are grouped into chunks or scheduled on workers.
BLOCK_SIZE = 1000


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    ``chunk`` is the number of substream blocks handed to a worker at once
    and has no influence on the numbers produced.
    """

    trials: int = 20_000
    seed: int = 0
    chunk: int = 16
    workers: int = 1

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("need at least 2 trials")
        if self.chunk < 1 or self.workers < 1:
            raise ValueError("chunk and workers must be positive")


@dataclass(frozen=True)
class McEstimate:
    mean: np.ndarray | float
    stderr: np.ndarray | float

    def interval(self, z: float = 1.96):
        return self.mean - z * self.stderr, self.mean + z * self.stderr


def _blocks(cfg: McConfig) -> list[tuple[int, int]]:
    nblocks = -(-cfg.trials // BLOCK_SIZE)
    return [(b, min(BLOCK_SIZE, cfg.trials - b * BLOCK_SIZE)) for b in range(nblocks)]


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, block]))


def run_trials(kernel: Callable[[np.random.Generator, int], np.ndarray], cfg: McConfig) -> np.ndarray:
    """Evaluate ``kernel(rng, size)`` over all blocks and stack the results.

    The kernel returns an array whose leading axis has length ``size``.
    Output rows are in trial order whatever the chunking or worker count.
    """
    blocks = _blocks(cfg)
    chunks = [blocks[i : i + cfg.chunk] for i in range(0, len(blocks), cfg.chunk)]

    def work(chunk):
        return [np.asarray(kernel(block_rng(cfg.seed, b), size)) for b, size in chunk]

    if cfg.workers == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(work, chunks))
    return np.concatenate([a for part in parts for a in part], axis=0)


def mc_mean(values: np.ndarray) -> McEstimate:
    """Mean over the leading axis with its standard error."""
    values = np.asarray(values, dtype=float)
    t = values.shape[0]
    # trial axis last and contiguous so numpy uses pairwise summation
    flat = np.ascontiguousarray(values.reshape(t, -1).T)
    mean = flat.mean(axis=1).reshape(values.shape[1:])
    se = (flat.std(axis=1, ddof=1) / math.sqrt(t)).reshape(values.shape[1:])
    if values.ndim == 1:
        mean, se = float(mean), float(se)
    return McEstimate(mean, se)


# --------------------------------------------------------------------------
# small symmetric matrices


def symmetrize(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return 0.5 * (m + m.T)


def min_eig(m) -> float:
    return float(np.linalg.eigvalsh(symmetrize(m))[0])


def is_psd(m, rel_tol: float = 1e-10) -> bool:
    """Eigenvalue floor test, tolerance relative to the trace magnitude."""
    m = symmetrize(m)
    scale = max(abs(np.trace(m)), np.finfo(float).tiny)
    return min_eig(m) >= -rel_tol * scale


def sym_inverse(m) -> np.ndarray:
    m = symmetrize(m)
    if np.linalg.cond(m) > 1e12:
        raise np.linalg.LinAlgError("matrix is numerically singular")
    return symmetrize(np.linalg.inv(m))
