"""
Free rotationally symmetric alpha-stable process on R^d.

Characteristic function, transition density and its gradient, Levy intensity and
normalizing constant, and the fractional Laplacian of smooth test functions. The
unit-time radial profile is tabulated once per (dimension, alpha) and every density
evaluation goes through the scaling identity p(t, x) = t^{-d/alpha} f_d(t^{-1/alpha}|x|).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special
from scipy.interpolate import PchipInterpolator

from errors import AccuracyError, DomainError

logger = logging.getLogger(__name__)

TAIL_CROSSOVER = 50.0
PROFILE_NODES = 1201
TAIL_SERIES_TERMS = 12
SPECTRAL_FLOOR = 1e-17

PointFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StableParams:
    """Dimension ``d`` and stability index ``alpha`` in (1, 2)."""

    d: int
    alpha: float

    def __post_init__(self) -> None:
        if int(self.d) != self.d or int(self.d) < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d!r}")
        if not 1.0 < float(self.alpha) < 2.0:
            raise DomainError(f"alpha must lie in (1, 2), got {self.alpha!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def normalizer(self) -> float:
        return _normalizer(self.d, self.alpha)

    @property
    def sphere_area(self) -> float:
        return sphere_area(self.d)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""

    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@lru_cache(maxsize=None)
def _normalizer(d: int, alpha: float) -> float:
    log_value = (
        math.log(alpha)
        + (alpha - 1.0) * math.log(2.0)
        - 0.5 * d * math.log(math.pi)
        + special.gammaln((d + alpha) / 2.0)
        - special.gammaln(1.0 - alpha / 2.0)
    )
    return float(math.exp(log_value))


def levy_normalizer(params: StableParams) -> float:
    return params.normalizer


def as_points(params: StableParams, x) -> Tuple[np.ndarray, str]:
    arr = np.asarray(x, dtype=float)
    d = params.d
    if arr.ndim == 0:
        if d != 1:
            raise DomainError(f"a scalar point needs d = 1, got d = {d}")
        return arr.reshape(1, 1), "scalar"
    if d == 1 and arr.shape[-1] != 1:
        return arr[..., None], "flat"
    if arr.shape[-1] != d:
        raise DomainError(f"points must have a trailing axis of length {d}, got shape {arr.shape}")
    if arr.ndim == 1:
        return arr.reshape(1, d), "point"
    return arr, "batch"


def scalar_result(values: np.ndarray, kind: str):
    if kind in ("scalar", "point"):
        return float(values.reshape(-1)[0])
    return values


def vector_result(values: np.ndarray, kind: str):
    if kind == "scalar":
        return float(values.reshape(-1)[0])
    if kind == "flat":
        return values[..., 0]
    if kind == "point":
        return values[0]
    return values


def _check_time(t: float, allow_zero: bool = False) -> float:
    t = float(t)
    if not math.isfinite(t) or t < 0.0 or (t == 0.0 and not allow_zero):
        raise DomainError(f"time must be {'non-negative' if allow_zero else 'positive'}, got {t!r}")
    return t


def char_function(params: StableParams, xi, t: float):
    """exp(-t |xi|^alpha)."""

    t = _check_time(t, allow_zero=True)
    pts, kind = as_points(params, xi)
    values = np.exp(-t * np.linalg.norm(pts, axis=-1) ** params.alpha)
    return scalar_result(values, kind)


def _spectral_cutoff(alpha: float) -> float:
    return (-math.log(SPECTRAL_FLOOR)) ** (1.0 / alpha)


def _log_series_coefficients(dim: int, alpha: float, terms: int = TAIL_SERIES_TERMS) -> Tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, terms + 1, dtype=float)
    log_magnitude = (
        special.gammaln(alpha * k / 2.0 + 1.0)
        + special.gammaln((alpha * k + dim) / 2.0)
        + alpha * k * math.log(2.0)
        - special.gammaln(k + 1.0)
        - (1.0 + dim / 2.0) * math.log(math.pi)
    )
    signs = np.where(k % 2 == 1, 1.0, -1.0) * np.sin(math.pi * alpha * k / 2.0)
    return k, signs * np.exp(log_magnitude)


def tail_series(dim: int, alpha: float, r) -> np.ndarray:
    """Large-r expansion of the unit-time profile; first term is A(d,-alpha) r^{-d-alpha}."""

    r = np.asarray(r, dtype=float)
    k, coef = _log_series_coefficients(dim, alpha)
    powers = -(alpha * k[:, None] + dim)
    return np.einsum("k,k...->...", coef, r.reshape(1, -1) ** powers).reshape(r.shape)


def _tail_series_mass(dim: int, alpha: float, radius: float) -> float:
    k, coef = _log_series_coefficients(dim, alpha)
    return float(sphere_area(dim) * np.sum(coef * radius ** (-alpha * k) / (alpha * k)))


def _profile_at_zero(dim: int, alpha: float) -> float:
    return (2.0 * math.pi) ** (-dim) * sphere_area(dim) * math.gamma(dim / alpha) / alpha


def _profile_integrand(dim: int, alpha: float, radii: np.ndarray) -> Callable[[float], np.ndarray]:
    if dim == 1:
        def integrand(s: float) -> np.ndarray:
            return math.exp(-s ** alpha) * np.cos(radii * s) / math.pi
    elif dim == 3:
        def integrand(s: float) -> np.ndarray:
            return math.exp(-s ** alpha) * s * np.sin(radii * s) / (2.0 * math.pi ** 2 * radii)
    else:
        order = dim / 2.0 - 1.0
        prefactor = (2.0 * math.pi) ** (-dim / 2.0) * radii ** (1.0 - dim / 2.0)

        def integrand(s: float) -> np.ndarray:
            return prefactor * math.exp(-s ** alpha) * s ** (dim / 2.0) * special.jv(order, radii * s)
    return integrand


@dataclass(frozen=True)
class RadialProfile:
    """Unit-time radial profile f_d with monotone cubic interpolation and an asymptotic tail."""

    dim: int
    alpha: float
    grid: np.ndarray
    values: np.ndarray
    tail_exponent: float
    _interpolant: PchipInterpolator = field(repr=False, compare=False)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape, dtype=float)
        inner = r <= TAIL_CROSSOVER
        if np.any(inner):
            out[inner] = np.exp(self._interpolant(np.log1p(r[inner])))
        if np.any(~inner):
            out[~inner] = tail_series(self.dim, self.alpha, r[~inner])
        return out

    def mass_outside(self, radius: float) -> float:
        """Mass of the unit-time law outside the ball of the given radius."""

        radius = float(radius)
        if radius >= TAIL_CROSSOVER:
            return _tail_series_mass(self.dim, self.alpha, radius)
        omega = sphere_area(self.dim)
        inner, _ = integrate.quad(
            lambda r: r ** (self.dim - 1) * float(self(np.array(r))),
            radius,
            TAIL_CROSSOVER,
            limit=400,
            epsabs=1e-13,
            epsrel=1e-11,
        )
        return omega * inner + _tail_series_mass(self.dim, self.alpha, TAIL_CROSSOVER)


@lru_cache(maxsize=None)
def radial_profile(dim: int, alpha: float, nodes: int = PROFILE_NODES) -> RadialProfile:
    """Tabulate f_dim on a grid uniform in log(1 + r) over [0, TAIL_CROSSOVER]."""

    u = np.linspace(0.0, math.log1p(TAIL_CROSSOVER), nodes)
    radii = np.expm1(u)
    values = np.empty_like(radii)
    values[0] = _profile_at_zero(dim, alpha)
    positive = radii[1:]
    result, error = integrate.quad_vec(
        _profile_integrand(dim, alpha, positive),
        0.0,
        _spectral_cutoff(alpha),
        epsabs=1e-13,
        epsrel=1e-12,
        norm="max",
        limit=20000,
    )
    if not np.isfinite(error) or error > 1e-9:
        raise AccuracyError(
            f"radial inversion for dim={dim}, alpha={alpha} reached error {error:.3e}",
            dim=dim,
            alpha=alpha,
            error=error,
        )
    values[1:] = result
    if np.any(values <= 0.0):
        bad = radii[np.argmax(values <= 0.0)]
        raise AccuracyError(f"non-positive profile value at r={bad:.4g}", dim=dim, alpha=alpha, radius=bad)
    logger.debug("tabulated profile dim=%d alpha=%.4f on %d nodes (error %.2e)", dim, alpha, nodes, error)
    return RadialProfile(
        dim=dim,
        alpha=alpha,
        grid=radii,
        values=values,
        tail_exponent=dim + alpha,
        _interpolant=PchipInterpolator(u, np.log(values)),
    )


def profile_quadrature(dim: int, alpha: float, r: float) -> float:
    """Direct quadrature of the unit-time profile at one radius (oracle path)."""

    r = float(r)
    if r == 0.0:
        return _profile_at_zero(dim, alpha)
    cutoff = _spectral_cutoff(alpha)
    if dim == 1:
        result = integrate.quad(
            lambda s: math.exp(-s ** alpha),
            0.0,
            cutoff,
            weight="cos",
            wvar=r,
            limit=4000,
            epsabs=1e-13,
            epsrel=1e-10,
            full_output=1,
        )
        scale = 1.0 / math.pi
    else:
        order = dim / 2.0 - 1.0
        result = integrate.quad(
            lambda s: math.exp(-s ** alpha) * s ** (dim / 2.0) * special.jv(order, r * s),
            0.0,
            cutoff,
            limit=4000,
            epsabs=1e-13,
            epsrel=1e-10,
            full_output=1,
        )
        scale = (2.0 * math.pi) ** (-dim / 2.0) * r ** (1.0 - dim / 2.0)
    value, error = result[0] * scale, result[1] * scale
    # quad appends a message to its output only when it did not converge
    if len(result) > 3 or not math.isfinite(value):
        raise AccuracyError(f"profile quadrature failed at r={r}", dim=dim, alpha=alpha, error=error)
    return float(value)


def density(params: StableParams, t: float, x):
    """Transition density p(t, x) of the free process."""

    t = _check_time(t)
    pts, kind = as_points(params, x)
    scale = t ** (1.0 / params.alpha)
    radii = np.linalg.norm(pts, axis=-1) / scale
    values = t ** (-params.d / params.alpha) * radial_profile(params.d, params.alpha)(radii)
    return scalar_result(values, kind)


def density_quadrature(params: StableParams, t: float, x) -> float:
    """Single-point density evaluated without the cached profile."""

    t = _check_time(t)
    pts, _ = as_points(params, x)
    radius = float(np.linalg.norm(pts[0])) * t ** (-1.0 / params.alpha)
    if radius > TAIL_CROSSOVER:
        profile = float(tail_series(params.d, params.alpha, np.array([radius]))[0])
    else:
        profile = profile_quadrature(params.d, params.alpha, radius)
    return t ** (-params.d / params.alpha) * profile


def density_gradient(params: StableParams, t: float, x):
    """Gradient in x of p(t, x), via f_d'(r) = -2 pi r f_{d+2}(r)."""

    t = _check_time(t)
    pts, kind = as_points(params, x)
    scale = t ** (1.0 / params.alpha)
    radii = np.linalg.norm(pts, axis=-1) / scale
    shape = radial_profile(params.d + 2, params.alpha)(radii)
    factor = -2.0 * math.pi * t ** (-(params.d + 2) / params.alpha) * shape
    return vector_result(factor[..., None] * pts, kind)


def tail_mass(params: StableParams, t: float, radius: float) -> float:
    """Mass of p(t, .) outside the ball B(0, radius)."""

    t = _check_time(t)
    if radius <= 0.0:
        return 1.0
    return radial_profile(params.d, params.alpha).mass_outside(radius * t ** (-1.0 / params.alpha))


def total_mass(params: StableParams, t: float) -> float:
    """Integral of p(t, .) by radial quadrature plus the analytic tail."""

    t = _check_time(t)
    cutoff = TAIL_CROSSOVER * t ** (1.0 / params.alpha)
    omega = params.sphere_area
    unit = np.zeros(params.d)

    def radial(r: float) -> float:
        unit[0] = r
        return omega * r ** (params.d - 1) * density(params, t, unit.copy())

    inner, error = integrate.quad(radial, 0.0, cutoff, limit=400, epsabs=1e-12, epsrel=1e-11)
    return float(inner + tail_mass(params, t, cutoff))


def comparability_constant(params: StableParams, times: Sequence[float], radii: Sequence[float]) -> float:
    """Largest max(p/phi, phi/p) over a probe grid, phi = t^{-d/a} ^ t|x|^{-d-a}."""

    worst = 1.0
    d, alpha = params.d, params.alpha
    radii = np.asarray(radii, dtype=float)
    points = np.zeros((radii.size, d))
    points[:, 0] = radii
    for t in times:
        values = density(params, t, points)
        with np.errstate(divide="ignore"):
            phi = np.minimum(t ** (-d / alpha), t * radii ** (-d - alpha))
        ratio = values / phi
        worst = max(worst, float(np.max(ratio)), float(np.max(1.0 / ratio)))
    return worst


def semigroup_residual(params: StableParams, s: float, t: float, x: float) -> float:
    """|int p(s, z) p(t, x - z) dz - p(s + t, x)| / p(s + t, x) for d = 1."""

    if params.d != 1:
        raise DomainError("semigroup_residual is one-dimensional")
    s = _check_time(s)
    t = _check_time(t)
    target = density(params, s + t, float(x))
    value, _ = integrate.quad(
        lambda z: density(params, s, z) * density(params, t, x - z),
        -np.inf,
        np.inf,
        limit=400,
        epsabs=1e-12,
        epsrel=1e-10,
    )
    return abs(value - target) / target


def levy_intensity(params: StableParams, x, y):
    """J(x, y) = A(d, -alpha) |x - y|^{-(d + alpha)}."""

    px, kind = as_points(params, x)
    py, _ = as_points(params, y)
    gap = np.linalg.norm(px - py, axis=-1)
    if np.any(gap == 0.0):
        raise DomainError("the Levy intensity is undefined on the diagonal x = y")
    return scalar_result(params.normalizer * gap ** (-(params.d + params.alpha)), kind)


def levy_tail_mass(params: StableParams, rho: float) -> float:
    """nu({|z| >= rho}) = A omega rho^{-alpha} / alpha."""

    if rho <= 0.0:
        raise DomainError(f"rho must be positive, got {rho!r}")
    return params.normalizer * params.sphere_area * rho ** (-params.alpha) / params.alpha


def _spherical_cos_average(d: int, u: np.ndarray) -> np.ndarray:
    if d == 1:
        return np.cos(u)
    order = d / 2.0 - 1.0
    return math.gamma(d / 2.0) * (2.0 / u) ** order * special.jv(order, u)


def levy_symbol(params: StableParams, xi_norm: float) -> float:
    """int (cos(xi . z) - 1) J(0, z) dz by radial quadrature; equals -|xi|^alpha."""

    d, alpha = params.d, params.alpha
    xi_norm = float(xi_norm)
    if xi_norm == 0.0:
        return 0.0

    def near(u: float) -> float:
        if u < 1e-3:
            deficit = -u * u / (2.0 * d) + u ** 4 / (8.0 * d * (d + 2.0))
        else:
            deficit = float(_spherical_cos_average(d, np.array(u))) - 1.0
        return deficit * u ** (-1.0 - alpha)

    head, _ = integrate.quad(near, 0.0, 1.0, limit=200, epsabs=1e-14, epsrel=1e-12)
    if d == 1:
        oscillatory, _ = integrate.quad(
            lambda u: u ** (-1.0 - alpha), 1.0, np.inf, weight="cos", wvar=1.0, epsabs=1e-14, limlst=200
        )
    else:
        oscillatory, _ = integrate.quad(
            lambda u: float(_spherical_cos_average(d, np.array(u))) * u ** (-1.0 - alpha),
            1.0,
            np.inf,
            limit=4000,
            epsabs=1e-12,
        )
    integral = head + oscillatory - 1.0 / alpha
    return params.normalizer * params.sphere_area * xi_norm ** alpha * integral


@lru_cache(maxsize=None)
def sphere_rule(d: int, resolution: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Directions and weights integrating over the unit sphere; weights sum to its area."""

    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        count = resolution or 64
        angles = 2.0 * math.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1), np.full(count, 2.0 * math.pi / count)
    if d == 3:
        rings = resolution or 16
        cos_theta, ring_weights = np.polynomial.legendre.leggauss(rings)
        count = 2 * rings
        phi = 2.0 * math.pi * np.arange(count) / count
        sin_theta = np.sqrt(1.0 - cos_theta ** 2)
        directions = np.stack(
            [
                np.outer(sin_theta, np.cos(phi)).ravel(),
                np.outer(sin_theta, np.sin(phi)).ravel(),
                np.repeat(cos_theta, count),
            ],
            axis=1,
        )
        weights = np.repeat(ring_weights, count) * (2.0 * math.pi / count)
        return directions, weights
    raise DomainError(f"spherical quadrature is available for d <= 3, got d = {d}")


def single_point(params: StableParams, x) -> np.ndarray:
    pts, _ = as_points(params, x)
    if pts.reshape(-1, params.d).shape[0] != 1:
        raise DomainError("expected a single point")
    return pts.reshape(params.d).copy()


def fractional_laplacian(
    params: StableParams,
    f: PointFunction,
    x,
    support_radius: Optional[float] = None,
) -> float:
    """
    Delta^{alpha/2} f(x) from the symmetrized second-difference integral.

    ``f`` maps an (n, d) array of points to n values. With ``support_radius`` the
    function must vanish outside B(0, support_radius) and the far field is exact.
    """

    d, alpha = params.d, params.alpha
    point = single_point(params, x)
    directions, weights = sphere_rule(d)
    centre = float(np.asarray(f(point[None, :]), dtype=float).reshape(-1)[0])
    if not math.isfinite(centre):
        raise AccuracyError("test function is not finite at the evaluation point", point=point.tolist())

    def shell(rho: np.ndarray) -> np.ndarray:
        offsets = rho[:, None, None] * directions[None, :, :]
        plus = np.asarray(f((point + offsets).reshape(-1, d)), dtype=float).reshape(rho.size, -1)
        minus = np.asarray(f((point - offsets).reshape(-1, d)), dtype=float).reshape(rho.size, -1)
        values = 0.5 * (plus + minus - 2.0 * centre) @ weights
        if not np.all(np.isfinite(values)):
            raise AccuracyError("test function returned non-finite values", point=point.tolist())
        return values

    length = support_radius if support_radius else 1.0
    delta = 1e-2 * length
    g1, g2 = shell(np.array([delta, delta / 2.0]))
    quartic = 4.0 * (g1 - 4.0 * g2) / (3.0 * delta ** 4)
    quadratic = (g1 - quartic * delta ** 4) / delta ** 2
    near = quadratic * delta ** (2.0 - alpha) / (2.0 - alpha) + quartic * delta ** (4.0 - alpha) / (4.0 - alpha)

    def integrand(rho: float) -> float:
        return float(shell(np.array([rho]))[0]) * rho ** (-1.0 - alpha)

    if support_radius is not None:
        reach = float(np.linalg.norm(point)) + support_radius
        middle, error = integrate.quad(integrand, delta, reach, limit=400, epsabs=1e-13, epsrel=1e-11)
        far = -float(np.sum(weights)) * centre * reach ** (-alpha) / alpha
    else:
        middle, error = integrate.quad(integrand, delta, 1.0, limit=400, epsabs=1e-13, epsrel=1e-11)
        outer, outer_error = integrate.quad(integrand, 1.0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-11)
        middle += outer
        error += outer_error
        far = 0.0
    if error > 1e-7 * max(1.0, abs(middle)):
        raise AccuracyError(f"fractional Laplacian quadrature error {error:.2e}", point=point.tolist())
    return params.normalizer * (near + middle + far)


def spectral_fractional_laplacian(
    params: StableParams, f: PointFunction, half_width: float = 128.0, nodes: int = 2 ** 15
) -> Tuple[np.ndarray, np.ndarray]:
    """-F^{-1}(|xi|^alpha F f) on a periodized one-dimensional grid."""

    if params.d != 1:
        raise DomainError("the spectral fractional Laplacian is one-dimensional")
    step = 2.0 * half_width / nodes
    grid = -half_width + step * np.arange(nodes)
    values = np.asarray(f(grid[:, None]), dtype=float)
    xi = 2.0 * math.pi * np.fft.fftfreq(nodes, d=step)
    result = -np.fft.ifft(np.abs(xi) ** params.alpha * np.fft.fft(values)).real
    return grid, result
