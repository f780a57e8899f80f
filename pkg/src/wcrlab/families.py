"""One-dimensional parametric families.

A :class:`BaseDensity` is a fixed density on the real line. Families put
a location, scale or location-scale parametrisation on top of a base, or
wrap user-supplied callables (``kind="custom"``). All evaluators are
vectorised over ``x`` and take the parameter vector ``theta`` explicitly.

Densities are assumed continuous and strictly positive on the interior of
their support; the score solver relies on that.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .numerics import central_diff, gauss_legendre_segments, gaussian_cdf, gaussian_pdf, integrate

__all__ = [
    "InvalidParameter",
    "BaseDensity",
    "ParametricFamily1D",
    "GAUSSIAN",
    "LAPLACE",
    "LOGISTIC",
    "UNIFORM",
    "BASES",
    "base_from_cdf_table",
    "make_location",
    "make_scale",
    "make_location_scale",
    "make_custom",
    "curve",
    "sample",
    "from_descriptor",
]

#: Tail mass cut from each side when an unbounded support is truncated.
TAIL = 1e-15

SQRT2 = math.sqrt(2.0)


class InvalidParameter(ValueError):
    pass


@dataclass(frozen=True)
class BaseDensity:
    """A density on the real line with its cdf and quantile function."""

    name: str
    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    quantile: Callable[[np.ndarray], np.ndarray]
    mean: float
    variance: float
    support: tuple[float, float] = (-math.inf, math.inf)
    kinks: tuple[float, ...] = ()
    symmetric: bool = False
    metadata: Mapping[str, object] = field(default_factory=dict)

    def window(self, tail: float = TAIL) -> tuple[float, float]:
        lo, hi = self.support
        if math.isinf(lo):
            lo = float(self.quantile(tail))
        if math.isinf(hi):
            hi = -lo if self.symmetric else float(self.quantile(1.0 - tail))
        return lo, hi


def _laplace_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-SQRT2 * np.abs(z)) / SQRT2


def _laplace_cdf(z):
    z = np.asarray(z, dtype=float)
    e = 0.5 * np.exp(-SQRT2 * np.abs(z))
    return np.where(z < 0, e, 1.0 - e)


def _laplace_quantile(u):
    u = np.asarray(u, dtype=float)
    lo = np.log(2.0 * np.minimum(u, 0.5)) / SQRT2
    hi = -np.log(2.0 * np.minimum(1.0 - u, 0.5)) / SQRT2
    return np.where(u < 0.5, lo, hi)


_LOGISTIC_SCALE = math.sqrt(3.0) / math.pi


def _logistic_pdf(z):
    t = np.asarray(z, dtype=float) / _LOGISTIC_SCALE
    return special.expit(t) * special.expit(-t) / _LOGISTIC_SCALE


def _logistic_cdf(z):
    return special.expit(np.asarray(z, dtype=float) / _LOGISTIC_SCALE)


def _logistic_quantile(u):
    return _LOGISTIC_SCALE * special.logit(np.asarray(u, dtype=float))


_SQRT3 = math.sqrt(3.0)


def _uniform_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) <= _SQRT3, 0.5 / _SQRT3, 0.0)


def _uniform_cdf(z):
    return np.clip((np.asarray(z, dtype=float) + _SQRT3) / (2 * _SQRT3), 0.0, 1.0)


def _uniform_quantile(u):
    return (2.0 * np.asarray(u, dtype=float) - 1.0) * _SQRT3


GAUSSIAN = BaseDensity(
    "gaussian", gaussian_pdf, gaussian_cdf, special.ndtri, 0.0, 1.0, symmetric=True
)
# exp(-sqrt(2)|z|)/sqrt(2): unit variance, so sigma of the family is its std
LAPLACE = BaseDensity(
    "laplace", _laplace_pdf, _laplace_cdf, _laplace_quantile, 0.0, 1.0, kinks=(0.0,), symmetric=True
)
LOGISTIC = BaseDensity(
    "logistic", _logistic_pdf, _logistic_cdf, _logistic_quantile, 0.0, 1.0, symmetric=True
)
UNIFORM = BaseDensity(
    "uniform",
    _uniform_pdf,
    _uniform_cdf,
    _uniform_quantile,
    0.0,
    1.0,
    support=(-_SQRT3, _SQRT3),
    symmetric=True,
)

BASES = {b.name: b for b in (GAUSSIAN, LAPLACE, LOGISTIC, UNIFORM)}


def base_from_cdf_table(x: Sequence[float], cdf: Sequence[float], name: str = "table") -> BaseDensity:
    """Base density from a tabulated, strictly increasing cdf.

    The cdf is interpolated monotonically; the pdf is its derivative, which
    is less accurate than an analytic density and is flagged in
    ``metadata["pdf_derived"]``.
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(cdf, dtype=float)
    if x.ndim != 1 or x.shape != c.shape or x.size < 4:
        raise ValueError("cdf table needs matching 1-d arrays with at least 4 points")
    if np.any(np.diff(x) <= 0) or np.any(np.diff(c) <= 0):
        raise ValueError("cdf table must be strictly increasing in x and cdf")
    if abs(c[0]) > 1e-8 or abs(c[-1] - 1.0) > 1e-8:
        raise ValueError("cdf table must start at 0 and end at 1")
    F = PchipInterpolator(x, c, extrapolate=False)
    f = F.derivative()
    Q = PchipInterpolator(c, x, extrapolate=False)
    lo, hi = float(x[0]), float(x[-1])

    def pdf(z):
        z = np.asarray(z, dtype=float)
        return np.where((z >= lo) & (z <= hi), np.nan_to_num(f(z)), 0.0)

    def cdf_(z):
        z = np.asarray(z, dtype=float)
        return np.where(z < lo, 0.0, np.where(z > hi, 1.0, np.nan_to_num(F(z))))

    def quantile(u):
        return Q(np.clip(np.asarray(u, dtype=float), 0.0, 1.0))

    # pdf is piecewise quadratic on the table cells, so a 4-point rule is exact
    mean = math.fsum(gauss_legendre_segments(lambda t: t * pdf(t), x, 4))
    var = math.fsum(gauss_legendre_segments(lambda t: (t - mean) ** 2 * pdf(t), x, 4))
    return BaseDensity(
        name, pdf, cdf_, quantile, mean, var, support=(lo, hi), metadata={"pdf_derived": True}
    )


def _standardized(base: BaseDensity) -> bool:
    return abs(base.mean) <= 1e-6 and abs(base.variance - 1.0) <= 1e-6


@dataclass(frozen=True)
class ParametricFamily1D:
    """A theta-indexed density on the real line.

    For the built-in kinds ``theta`` is ``(mu,)``, ``(sigma,)`` or
    ``(mu, sigma)``. Custom families carry their own callables with the
    signature ``fn(x, theta)``.
    """

    kind: str
    param_dim: int
    base: BaseDensity | None = None
    names: tuple[str, ...] = ()
    custom_cdf: Callable | None = None
    custom_pdf: Callable | None = None
    custom_quantile: Callable | None = None
    custom_dtheta: Callable | None = None
    custom_support: Callable | None = None
    custom_kinks: Callable | None = None
    metadata: Mapping[str, object] = field(default_factory=dict)

    # -- parameters -------------------------------------------------------

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.param_dim,):
            raise InvalidParameter(f"expected {self.param_dim} parameters, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InvalidParameter("parameters must be finite")
        if self.kind == "scale" and theta[0] <= 0:
            raise InvalidParameter("scale parameter must be positive")
        if self.kind == "location-scale" and theta[1] <= 0:
            raise InvalidParameter("sigma must be positive")
        return theta

    def _loc_scale(self, theta) -> tuple[float, float]:
        if self.kind == "location":
            return theta[0], 1.0
        if self.kind == "scale":
            return 0.0, theta[0]
        return theta[0], theta[1]

    # -- evaluators -------------------------------------------------------

    def pdf(self, x, theta):
        theta = self.check_theta(theta)
        if self.kind == "custom":
            if self.custom_pdf is not None:
                return self.custom_pdf(x, theta)
            x = np.asarray(x, dtype=float)
            h = 1e-5 * np.maximum(1.0, np.abs(x))
            return (self.custom_cdf(x + h, theta) - self.custom_cdf(x - h, theta)) / (2 * h)
        loc, scale = self._loc_scale(theta)
        return self.base.pdf((np.asarray(x, dtype=float) - loc) / scale) / scale

    def cdf(self, x, theta):
        theta = self.check_theta(theta)
        if self.kind == "custom":
            return self.custom_cdf(x, theta)
        loc, scale = self._loc_scale(theta)
        return self.base.cdf((np.asarray(x, dtype=float) - loc) / scale)

    def quantile(self, u, theta):
        theta = self.check_theta(theta)
        if self.kind == "custom":
            return self.custom_quantile(u, theta)
        loc, scale = self._loc_scale(theta)
        return loc + scale * self.base.quantile(u)

    def dtheta_cdf(self, x, theta, i: int):
        """Partial derivative of the cdf with respect to ``theta[i]``."""
        theta = self.check_theta(theta)
        if not 0 <= i < self.param_dim:
            raise IndexError(f"parameter index {i} out of range for {self.param_dim} parameters")
        x = np.asarray(x, dtype=float)
        if self.kind == "custom":
            if self.custom_dtheta is not None:
                return self.custom_dtheta(x, theta, i)
            h = 1e-5 * max(1.0, abs(theta[i]))
            e = np.zeros_like(theta)
            e[i] = h
            return (self.custom_cdf(x, theta + e) - self.custom_cdf(x, theta - e)) / (2 * h)
        loc, scale = self._loc_scale(theta)
        z = (x - loc) / scale
        p = self.base.pdf(z) / scale
        is_scale = self.kind == "scale" or (self.kind == "location-scale" and i == 1)
        # F = F0((x - loc)/scale): d/dloc = -p, d/dscale = -z p
        return -z * p if is_scale else -p

    def support(self, theta) -> tuple[float, float]:
        theta = self.check_theta(theta)
        if self.kind == "custom":
            if self.custom_support is not None:
                return self.custom_support(theta)
            return (-math.inf, math.inf)
        loc, scale = self._loc_scale(theta)
        lo, hi = self.base.support
        return loc + scale * lo, loc + scale * hi

    def window(self, theta, tail: float = TAIL) -> tuple[float, float]:
        """Integration window: the support truncated at tail mass ``tail``."""
        theta = self.check_theta(theta)
        if self.kind == "custom":
            lo, hi = self.support(theta)
            if math.isinf(lo):
                lo = float(self.quantile(tail, theta))
            if math.isinf(hi):
                hi = float(self.quantile(1.0 - tail, theta))
            return lo, hi
        loc, scale = self._loc_scale(theta)
        lo, hi = self.base.window(tail)
        return loc + scale * lo, loc + scale * hi

    def kinks(self, theta) -> tuple[float, ...]:
        theta = self.check_theta(theta)
        if self.kind == "custom":
            return tuple(self.custom_kinks(theta)) if self.custom_kinks is not None else ()
        loc, scale = self._loc_scale(theta)
        return tuple(loc + scale * k for k in self.base.kinks)

    def median(self, theta) -> float:
        return float(self.quantile(0.5, theta))

    def expect(self, g: Callable[[float], float], theta) -> float:
        """E_theta[g(X)] by adaptive quadrature over the integration window."""
        lo, hi = self.window(theta)
        return integrate(
            lambda t: float(g(t)) * float(self.pdf(t, theta)),
            lo,
            hi,
            points=(*self.kinks(theta), self.median(theta)),
        )


def make_location(base: BaseDensity) -> ParametricFamily1D:
    """``p(x; mu) = f(x - mu)``."""
    return ParametricFamily1D("location", 1, base, ("mu",))


def make_scale(base: BaseDensity) -> ParametricFamily1D:
    """``p(x; sigma) = f(x / sigma) / sigma``."""
    return ParametricFamily1D("scale", 1, base, ("sigma",))


def make_location_scale(base: BaseDensity) -> ParametricFamily1D:
    """``p(x; mu, sigma) = f((x - mu) / sigma) / sigma`` for a standardised base.

    Raises
    ------
    ValueError
        If the base does not have mean 0 and variance 1 (to within 1e-6).
    """
    if not _standardized(base):
        raise ValueError(
            f"base {base.name!r} must have mean 0 and variance 1, "
            f"got mean={base.mean:.3g}, variance={base.variance:.6g}"
        )
    return ParametricFamily1D("location-scale", 2, base, ("mu", "sigma"))


def make_custom(
    cdf: Callable,
    quantile: Callable,
    param_dim: int,
    pdf: Callable | None = None,
    dtheta_cdf: Callable | None = None,
    support: Callable | None = None,
    kinks: Callable | None = None,
    names: tuple[str, ...] = (),
) -> ParametricFamily1D:
    """Family from callables ``fn(x, theta)``.

    Without ``pdf`` the density is a central difference of ``cdf``; without
    ``dtheta_cdf`` the parameter derivative is one too.
    """
    meta = {"pdf_derived": pdf is None}
    return ParametricFamily1D(
        "custom",
        param_dim,
        None,
        names or tuple(f"theta{i}" for i in range(param_dim)),
        cdf,
        pdf,
        quantile,
        dtheta_cdf,
        support,
        kinks,
        meta,
    )


def curve(
    family: ParametricFamily1D,
    path: Callable[[float], Sequence[float]],
    dpath: Callable[[float], Sequence[float]] | None = None,
) -> ParametricFamily1D:
    """One-parameter sub-model ``t -> family at path(t)``.

    ``dpath`` is the velocity of the path; a central difference is used if
    it is omitted. The cdf derivative follows from the chain rule.
    """

    def at(theta):
        return family.check_theta(path(float(theta[0])))

    def velocity(t: float) -> np.ndarray:
        if dpath is not None:
            return np.asarray(dpath(t), dtype=float)
        return np.asarray(central_diff(lambda s: np.asarray(path(s), dtype=float), t))

    def dtheta(x, theta, i):
        th = at(theta)
        v = velocity(float(theta[0]))
        return sum(family.dtheta_cdf(x, th, k) * v[k] for k in range(family.param_dim) if v[k] != 0)

    return make_custom(
        cdf=lambda x, th: family.cdf(x, at(th)),
        quantile=lambda u, th: family.quantile(u, at(th)),
        param_dim=1,
        pdf=lambda x, th: family.pdf(x, at(th)),
        dtheta_cdf=dtheta,
        support=lambda th: family.support(at(th)),
        kinks=lambda th: family.kinks(at(th)),
        names=("t",),
    )


def draw(family: ParametricFamily1D, theta, rng: np.random.Generator, size) -> np.ndarray:
    """Inverse-cdf draws from a caller-owned generator."""
    return np.asarray(family.quantile(rng.random(size), theta), dtype=float)


def sample(family: ParametricFamily1D, theta, n: int, seed: int) -> np.ndarray:
    """``n`` draws by inverse-cdf transform of a uniform stream seeded by ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    theta = family.check_theta(theta)
    return draw(family, theta, np.random.default_rng(seed), n)


_KIND_BUILDERS = {
    "location": make_location,
    "scale": make_scale,
    "location-scale": make_location_scale,
}


def from_descriptor(desc: str | Mapping) -> ParametricFamily1D:
    """Build a family from a JSON descriptor.

    ``{"kind": "location-scale", "base": "laplace"}``; ``base`` may also be
    ``{"cdf_table": {"x": [...], "cdf": [...]}}``.
    """
    if isinstance(desc, str):
        desc = json.loads(desc)
    kind = desc.get("kind", "location-scale")
    if kind not in _KIND_BUILDERS:
        raise ValueError(f"unsupported family kind {kind!r}")
    base_desc = desc.get("base", "gaussian")
    if isinstance(base_desc, str):
        try:
            base = BASES[base_desc]
        except KeyError:
            raise ValueError(f"unknown base density {base_desc!r}") from None
    elif isinstance(base_desc, Mapping) and "cdf_table" in base_desc:
        table = base_desc["cdf_table"]
        base = base_from_cdf_table(table["x"], table["cdf"], name=base_desc.get("name", "table"))
    else:
        raise ValueError("base must be a name or a {'cdf_table': ...} object")
    return _KIND_BUILDERS[kind](base)
