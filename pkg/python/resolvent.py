"""
Resolvent kernel of the free process and the Neumann series for the drifted one.

    r_lambda(x) = int_0^inf e^{-lambda t} p(t, x) dt = lambda^{d/alpha - 1} r_1(lambda^{1/alpha} x)
    grad r_lambda(x) = -2 pi x lambda^{(d+2)/alpha - 1} R^{(d+2)}_1(lambda^{1/alpha} |x|)

where R^{(D)}_1 is the unit resolvent profile built from the D-dimensional density profile.
Profiles are tabulated on a grid uniform in log(rho); every radial integral against them
is a trapezoid sum over the same nodes plus power-law tails at both ends.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from errors import AccuracyError, ContractionError, DomainError, ThresholdNotFoundError
from kato import DriftField, default_probe, kato_modulus, local_kato_integral
from parallel import map_parallel
from stable_core import (
    StableParams,
    as_points,
    density,
    radial_profile,
    scalar_result,
    sphere_area,
    sphere_rule,
    vector_result,
)

logger = logging.getLogger(__name__)

LOG_RHO_MIN = -14.0
LOG_RHO_MAX = 7.0
LOG_RHO_STEP = 0.01
LOG_TIME_STEP = 0.05
LAGUERRE_NODES = 64
CONTRACTION_TARGET = 0.5
CONTRACTION_LIMIT = 0.9
DEFAULT_LAMBDA_GRID = tuple(2.0 ** (k / 8.0) for k in range(-48, 97))
SPECTRAL_NODES = {1: 2 ** 13, 2: 2 ** 9, 3: 2 ** 6}


@dataclass(frozen=True)
class ResolventProfile:
    """R^{(D)}_1 on log-spaced nodes with log-log spline, power-law ends and the value at 0."""

    dim: int
    alpha: float
    log_rho: np.ndarray
    values: np.ndarray
    at_zero: float
    low_slope: float
    high_slope: float
    scale: float
    _spline: CubicSpline = field(repr=False, compare=False)

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.log_rho)

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        out = np.empty(rho.shape)
        zero = rho == 0.0
        out[zero] = self.at_zero
        u = np.log(rho[~zero])
        result = np.empty(u.shape)
        inner = (u >= self.log_rho[0]) & (u <= self.log_rho[-1])
        result[inner] = np.exp(self._spline(u[inner]))
        below = u < self.log_rho[0]
        if np.any(below):
            if self.dim < self.alpha:
                result[below] = self.scale * _laguerre_profile(self.dim, self.alpha, np.exp(u[below]))
            else:
                result[below] = self.values[0] * np.exp(self.low_slope * (u[below] - self.log_rho[0]))
        above = u > self.log_rho[-1]
        result[above] = self.values[-1] * np.exp(self.high_slope * (u[above] - self.log_rho[-1]))
        out[~zero] = result
        return out

    def log_radial_integral(
        self, power: float, shell: np.ndarray, low_shell: Optional[float] = None, high_shell: Optional[float] = None
    ) -> float:
        """
        int_0^inf rho^power R(rho) S(rho) d(log rho) for S sampled on the nodes.

        Beyond the nodes S is held at ``low_shell``/``high_shell`` (default: its end samples)
        and R follows its end slopes.
        """

        weight = np.exp(power * self.log_rho) * self.values
        integrand = weight * shell
        body = LOG_RHO_STEP * (np.sum(integrand) - 0.5 * (integrand[0] + integrand[-1]))
        low_rate = power + self.low_slope
        high_rate = -(power + self.high_slope)
        if low_rate <= 0.0 or high_rate <= 0.0:
            raise AccuracyError(f"radial integral with power {power} diverges at an end", power=power)
        low = weight[0] * (shell[0] if low_shell is None else low_shell)
        high = weight[-1] * (shell[-1] if high_shell is None else high_shell)
        return float(body + low / low_rate + high / high_rate)


@lru_cache(maxsize=None)
def _laguerre_rule(dim: int, alpha: float):
    return special.roots_genlaguerre(LAGUERRE_NODES, -dim / alpha)


def _laguerre_profile(dim: int, alpha: float, rho: np.ndarray) -> np.ndarray:
    """int e^{-t} t^{-D/alpha} f_D(t^{-1/alpha} rho) dt by generalized Gauss-Laguerre; D < alpha."""

    nodes, weights = _laguerre_rule(dim, alpha)
    profile = radial_profile(dim, alpha)
    args = np.asarray(rho, dtype=float)[:, None] * nodes[None, :] ** (-1.0 / alpha)
    return profile(args) @ weights


@lru_cache(maxsize=None)
def resolvent_profile(dim: int, alpha: float, normalize: bool = False) -> ResolventProfile:
    """
    Tabulate R^{(dim)}_1 by trapezoid quadrature in v = log t.

    With ``normalize`` the table is rescaled to unit mass; the rescaling must be below 1e-5.
    """

    log_rho = np.arange(LOG_RHO_MIN, LOG_RHO_MAX + LOG_RHO_STEP / 2.0, LOG_RHO_STEP)
    v = np.arange(alpha * LOG_RHO_MIN - 30.0, 4.0 + LOG_TIME_STEP / 2.0, LOG_TIME_STEP)
    weights = LOG_TIME_STEP * np.exp(-np.exp(v) + v * (1.0 - dim / alpha))
    profile = radial_profile(dim, alpha)
    values = np.empty(log_rho.size)
    for block in np.array_split(np.arange(log_rho.size), 8):
        args = np.exp(log_rho[block][:, None] - v[None, :] / alpha)
        values[block] = profile(args) @ weights
    if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
        raise AccuracyError(f"resolvent profile for dim={dim}, alpha={alpha} is not positive", dim=dim, alpha=alpha)
    at_zero = float(_laguerre_profile(dim, alpha, np.zeros(1))[0]) if dim < alpha else math.inf
    spline = CubicSpline(log_rho, np.log(values))
    low_slope = float(spline(log_rho[0], 1))
    high_slope = float(spline(log_rho[-1], 1))
    table = ResolventProfile(dim, alpha, log_rho, values, at_zero, low_slope, high_slope, 1.0, spline)
    if not normalize:
        return table
    mass = table.log_radial_integral(dim, np.full(log_rho.size, sphere_area(dim)))
    if abs(mass - 1.0) > 1e-5:
        raise AccuracyError(f"unit resolvent mass {mass:.8f} for dim={dim}, alpha={alpha}", mass=mass)
    logger.debug("resolvent profile dim=%d alpha=%.4f mass defect %.2e", dim, alpha, mass - 1.0)
    values = values / mass
    return ResolventProfile(
        dim, alpha, log_rho, values, at_zero / mass, low_slope, high_slope, 1.0 / mass,
        CubicSpline(log_rho, np.log(values)),
    )


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not math.isfinite(lam) or lam <= 0.0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    return lam


@dataclass(frozen=True)
class ResolventKernel:
    """r_lambda and grad r_lambda for one lambda."""

    params: StableParams
    lam: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", _check_lambda(self.lam))

    @property
    def profile(self) -> ResolventProfile:
        return resolvent_profile(self.params.d, self.params.alpha, True)

    @property
    def gradient_profile(self) -> ResolventProfile:
        return resolvent_profile(self.params.d + 2, self.params.alpha, False)

    def __call__(self, x):
        d, alpha = self.params.d, self.params.alpha
        pts, kind = as_points(self.params, x)
        radii = self.lam ** (1.0 / alpha) * np.linalg.norm(pts, axis=-1)
        values = self.lam ** (d / alpha - 1.0) * self.profile(radii)
        return scalar_result(values, kind)

    def gradient(self, x):
        d, alpha = self.params.d, self.params.alpha
        pts, kind = as_points(self.params, x)
        radii = np.linalg.norm(pts, axis=-1)
        if np.any(radii == 0.0):
            raise DomainError("grad r_lambda is undefined at the origin")
        shape = self.gradient_profile(self.lam ** (1.0 / alpha) * radii)
        factor = -2.0 * math.pi * self.lam ** ((d + 2) / alpha - 1.0) * shape
        return vector_result(factor[..., None] * pts, kind)

    def mass(self) -> float:
        shell = np.full(self.profile.log_rho.size, sphere_area(self.params.d))
        return self.profile.log_radial_integral(self.params.d, shell) / self.lam


def resolvent_kernel(params: StableParams, lam: float, x):
    """r_lambda(x); math.inf at x = 0 when d > alpha."""

    return ResolventKernel(params, lam)(x)


def resolvent_gradient(params: StableParams, lam: float, x):
    return ResolventKernel(params, lam).gradient(x)


def resolvent_quadrature(params: StableParams, lam: float, x) -> float:
    """int_0^inf e^{-lambda t} p(t, x) dt by adaptive quadrature in log t (oracle path)."""

    lam = _check_lambda(lam)
    pts, _ = as_points(params, x)
    point = pts.reshape(-1, params.d)[0]
    if not np.any(point) and params.d > params.alpha:
        return math.inf

    def integrand(v: float) -> float:
        t = math.exp(v)
        return t * math.exp(-lam * t) * float(density(params, t, point))

    upper = math.log(60.0 / lam)
    value, error = integrate.quad(integrand, -60.0, upper, limit=400, epsabs=1e-14, epsrel=1e-11)
    if error > 1e-8 * max(1.0, abs(value)):
        raise AccuracyError(f"resolvent quadrature error {error:.2e}", point=point.tolist(), lam=lam)
    return float(value)


def _shell_values(params: StableParams, g: Callable, x: np.ndarray, rho: np.ndarray) -> np.ndarray:
    directions, weights = sphere_rule(params.d)
    pts = x[None, None, :] + rho[:, None, None] * directions[None, :, :]
    values = np.asarray(g(pts.reshape(-1, params.d)), dtype=float).reshape(rho.size, -1)
    values = np.where(np.isfinite(values), values, 0.0)
    return values @ weights


def _shell_at_origin(params: StableParams, g: Callable, x: np.ndarray) -> Optional[float]:
    value = float(np.asarray(g(x[None, :]), dtype=float).reshape(-1)[0])
    return sphere_area(params.d) * value if math.isfinite(value) else None


def apply_resolvent(params: StableParams, lam: float, g: Callable, x) -> float:
    """(R_lambda g)(x) = int r_lambda(x - y) g(y) dy; ``g`` maps (n, d) points to n values."""

    lam = _check_lambda(lam)
    point = np.asarray(x, dtype=float).reshape(params.d)
    profile = resolvent_profile(params.d, params.alpha, True)
    rho = lam ** (-1.0 / params.alpha) * profile.rho
    shell = np.zeros(rho.size)
    reach = getattr(g, "support_radius", None)
    active = rho <= (float(np.linalg.norm(point)) + reach) if reach else np.ones(rho.size, dtype=bool)
    shell[active] = _shell_values(params, g, point, rho[active])
    low = _shell_at_origin(params, g, point)
    return profile.log_radial_integral(params.d, shell, low_shell=low) / lam


class ResolventImage:
    """f = R_lambda g as a function with a gradient (R_lambda applied to grad g)."""

    def __init__(self, params: StableParams, lam: float, g) -> None:
        self.params = params
        self.lam = _check_lambda(lam)
        self.g = g
        self.support_radius = None

    def __call__(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.params.d)
        return np.array([apply_resolvent(self.params, self.lam, self.g, p) for p in pts])

    def gradient(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.params.d)
        out = np.empty(pts.shape)
        for c in range(self.params.d):
            component = _Component(self.g, c)
            out[:, c] = [apply_resolvent(self.params, self.lam, component, p) for p in pts]
        return out


class _Component:
    def __init__(self, g, axis: int) -> None:
        self.g = g
        self.axis = axis
        self.support_radius = getattr(g, "support_radius", None)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self.g.gradient(pts), dtype=float).reshape(pts.shape)[:, self.axis]


def _drift_dot(drift: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    return np.sum(drift * gradient, axis=-1)


def drift_apply(field_: DriftField, f, x) -> float:
    """(B f)(x) = b(x) . grad f(x)."""

    point = np.asarray(x, dtype=float).reshape(1, field_.d)
    drift = np.asarray(field_(point), dtype=float).reshape(field_.d)
    if not np.all(np.isfinite(drift)):
        raise DomainError(f"{field_.kind} field is singular at {point[0].tolist()}")
    if field_.is_zero:
        return 0.0
    gradient = np.asarray(f.gradient(point), dtype=float).reshape(field_.d)
    return float(_drift_dot(drift, gradient))


def spectral_resolvent(
    params: StableParams, lam: float, g: Callable, half_width: float = 128.0, nodes: int = 2 ** 15
):
    """F^{-1}(g_hat / (lambda + |xi|^alpha)) on a periodized one-dimensional grid."""

    if params.d != 1:
        raise DomainError("the spectral resolvent is one-dimensional")
    lam = _check_lambda(lam)
    step = 2.0 * half_width / nodes
    grid = -half_width + step * np.arange(nodes)
    values = np.asarray(g(grid[:, None]), dtype=float)
    xi = 2.0 * math.pi * np.fft.fftfreq(nodes, d=step)
    return grid, np.fft.ifft(np.fft.fft(values) / (lam + np.abs(xi) ** params.alpha)).real


def contraction_integral(field_: DriftField, params: StableParams, lam: float, x) -> float:
    """int |grad r_lambda(x - y)| |b(y)| dy."""

    lam = _check_lambda(lam)
    if field_.is_zero:
        return 0.0
    point = np.asarray(x, dtype=float).reshape(params.d)
    profile = resolvent_profile(params.d + 2, params.alpha, False)
    rho = lam ** (-1.0 / params.alpha) * profile.rho
    shell = _shell_values(params, field_.magnitude, point, rho)
    scale = 2.0 * math.pi * lam ** (1.0 / params.alpha - 1.0)
    return scale * profile.log_radial_integral(params.d + 1, shell)


def _sup_contraction(field_, params, lam, probe, threads) -> float:
    return max(map_parallel(lambda x: contraction_integral(field_, params, lam, x), list(probe), threads))


def lambda0_estimate(
    field_: DriftField,
    params: StableParams,
    lambda_grid: Optional[Sequence[float]] = None,
    probe: Optional[np.ndarray] = None,
    threads: int = 1,
) -> float:
    """Smallest grid lambda with sup_x int |grad r_lambda(x - y)| |b(y)| dy <= 1/2."""

    field_.check_admissible(params)
    grid = np.asarray(DEFAULT_LAMBDA_GRID if lambda_grid is None else lambda_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0.0) or grid[0] <= 0.0:
        raise DomainError("lambda grid must be positive and strictly increasing")
    if field_.is_zero:
        return float(grid[0])
    points = default_probe(field_) if probe is None else np.asarray(probe, dtype=float).reshape(-1, params.d)
    cache: Dict[int, float] = {}

    def measure(i: int) -> float:
        if i not in cache:
            cache[i] = _sup_contraction(field_, params, float(grid[i]), points, threads)
            logger.debug("lambda %.5g: contraction integral %.4g", grid[i], cache[i])
        return cache[i]

    if measure(grid.size - 1) > CONTRACTION_TARGET:
        raise ThresholdNotFoundError(
            f"contraction integral {cache[grid.size - 1]:.3g} > 1/2 even at lambda = {grid[-1]:.4g}; "
            "extend the lambda grid",
            largest_lambda=float(grid[-1]),
        )
    lo, hi = -1, grid.size - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if measure(mid) <= CONTRACTION_TARGET:
            hi = mid
        else:
            lo = mid
    logger.info("lambda_0 = %.5g (integral %.4g)", grid[hi], cache[hi])
    return float(grid[hi])


@dataclass
class NeumannSeriesState:
    lam: float
    lambda0: Optional[float]
    points: np.ndarray
    terms: np.ndarray
    term_norms: np.ndarray
    gradient_norms: np.ndarray
    contraction_factor: float
    ratio: float
    remainder_bound: float

    @property
    def value(self) -> np.ndarray:
        return np.sum(self.terms, axis=0)

    def trace_rows(self) -> List[List[float]]:
        partial = np.cumsum(self.terms, axis=0)
        return [[k, float(self.term_norms[k])] + partial[k].tolist() for k in range(self.terms.shape[0])]

    def as_dict(self) -> Dict[str, object]:
        return {
            "lambda": self.lam,
            "lambda0": self.lambda0,
            "value": self.value.tolist(),
            "terms": int(self.terms.shape[0]),
            "contraction_factor": self.contraction_factor,
            "ratio": self.ratio,
            "remainder_bound": self.remainder_bound,
        }


class _SpectralBox:
    def __init__(self, d: int, half_width: float, nodes: int) -> None:
        self.d = d
        self.half_width = half_width
        self.nodes = nodes
        self.step = 2.0 * half_width / nodes
        axis = -half_width + self.step * np.arange(nodes)
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=-1)
        self.shape = (nodes,) * d
        line = 2.0 * math.pi * np.fft.fftfreq(nodes, d=self.step)
        self.frequencies = np.meshgrid(*([line] * d), indexing="ij")
        self.line = line
        self.modulus = np.sqrt(sum(f * f for f in self.frequencies))

    def sample(self, func: Callable) -> np.ndarray:
        return np.asarray(func(self.points), dtype=float).reshape(self.shape)

    def evaluate(self, spectrum: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Trigonometric interpolation of a grid function at arbitrary points."""

        values = []
        for x in points:
            result = spectrum
            for c in range(self.d):
                phase = np.exp(1j * self.line * (x[c] + self.half_width))
                result = np.tensordot(phase, result, axes=([0], [0]))
            values.append(float(np.real(result)) / self.nodes ** self.d)
        return np.array(values)


def neumann_resolvent(
    field_: DriftField,
    params: StableParams,
    lam: float,
    g: Callable,
    x,
    max_terms: int = 40,
    lambda0: Optional[float] = None,
    half_width: float = 64.0,
    nodes: Optional[int] = None,
) -> NeumannSeriesState:
    """Partial sums of sum_k R_lambda (B R_lambda)^k g at the points x, with a geometric remainder."""

    lam = _check_lambda(lam)
    if lambda0 is not None and lam <= lambda0:
        raise DomainError(f"lambda = {lam} does not exceed lambda_0 = {lambda0}")
    field_.check_admissible(params)
    points = np.asarray(x, dtype=float).reshape(-1, params.d)
    box = _SpectralBox(params.d, half_width, nodes or SPECTRAL_NODES.get(params.d, 2 ** 5))
    drift = None
    if not field_.is_zero:
        drift = np.asarray(field_(box.points), dtype=float).reshape(box.shape + (params.d,))
        if not np.all(np.isfinite(drift)):
            raise DomainError(f"{field_.kind} field is not finite on the spectral grid; regularize it first")
    denominator = lam + box.modulus ** params.alpha
    source = np.fft.fftn(box.sample(g))
    terms, term_norms, gradient_norms = [], [], []
    for k in range(max_terms):
        spectrum = source / denominator
        terms.append(box.evaluate(spectrum, points))
        term_norms.append(float(np.max(np.abs(np.fft.ifftn(spectrum).real))))
        if drift is None:
            break
        gradient = np.stack([np.fft.ifftn(1j * f * spectrum).real for f in box.frequencies], axis=-1)
        gradient_norms.append(float(np.max(np.linalg.norm(gradient, axis=-1))))
        if k >= 1 and term_norms[-2] > 0.0 and term_norms[-1] / term_norms[-2] > CONTRACTION_LIMIT:
            raise ContractionError(
                f"term ratio {term_norms[-1] / term_norms[-2]:.3f} > {CONTRACTION_LIMIT} at order {k}; "
                "lambda is at or below the contraction threshold",
                order=k,
                lam=lam,
            )
        if term_norms[-1] <= 1e-15 * term_norms[0]:
            break
        source = np.fft.fftn(_drift_dot(drift, gradient))
    norms = np.array(term_norms)
    ratios = norms[1:] / np.where(norms[:-1] > 0.0, norms[:-1], np.inf)
    ratio = float(np.max(ratios)) if ratios.size else 0.0
    grads = np.array(gradient_norms)
    factors = grads[1:] / np.where(grads[:-1] > 0.0, grads[:-1], np.inf)
    contraction = float(np.max(factors)) if factors.size else 0.0
    remainder = norms[-1] * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
    logger.info("Neumann series at lambda=%.4g: %d terms, ratio %.3f, remainder %.2e",
                lam, len(terms), ratio, remainder)
    return NeumannSeriesState(
        lam=lam,
        lambda0=lambda0,
        points=points,
        terms=np.array(terms),
        term_norms=norms,
        gradient_norms=grads,
        contraction_factor=contraction,
        ratio=ratio,
        remainder_bound=float(remainder),
    )


def translated_resolvent(params: StableParams, lam: float, drift: float, g, x: float) -> float:
    """int_0^inf e^{-lambda t} int p(t, y - x - c t) g(y) dy dt for a one-dimensional bump g."""

    if params.d != 1:
        raise DomainError("the translated resolvent oracle is one-dimensional")
    lam = _check_lambda(lam)
    centre = float(np.asarray(g.center).reshape(-1)[0])
    lo, hi = centre - g.width, centre + g.width
    x = float(x)

    def smoothed(t: float) -> float:
        shift = x + drift * t
        scale = t ** (1.0 / params.alpha)
        a, b = (lo - shift) / scale, (hi - shift) / scale
        points = [0.0] if a < 0.0 < b else None
        value, _ = integrate.quad(
            lambda u: float(density(params, 1.0, u)) * float(g(np.array([[shift + scale * u]]))[0]),
            a, b, points=points, limit=400, epsabs=1e-13, epsrel=1e-11,
        )
        return value

    def integrand(v: float) -> float:
        t = math.exp(v)
        return t * math.exp(-lam * t) * smoothed(t)

    value, _ = integrate.quad(
        integrand, math.log(1e-10), math.log(60.0 / lam), limit=400, epsabs=1e-13, epsrel=1e-10
    )
    return float(value)


def drift_resolvent_bound(
    field_: DriftField, params: StableParams, lam: float, probe: Optional[np.ndarray] = None, threads: int = 1
) -> float:
    """sup over probe points of (R_lambda |b|)(x)."""

    lam = _check_lambda(lam)
    if field_.is_zero:
        return 0.0
    points = default_probe(field_) if probe is None else np.asarray(probe, dtype=float).reshape(-1, params.d)
    magnitude = _Magnitude(field_)
    return max(map_parallel(lambda x: apply_resolvent(params, lam, magnitude, x), list(points), threads))


class _Magnitude:
    def __init__(self, field_: DriftField) -> None:
        self.field = field_
        self.support_radius = field_.support_radius

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.field.magnitude(pts)


@dataclass
class GradientKatoReport:
    constant: float
    times: List[float]
    ratios: List[float]

    def as_dict(self) -> Dict[str, object]:
        return {"constant": self.constant, "times": self.times, "ratios": self.ratios}


def _outer_kato_integral(field_: DriftField, params: StableParams, x: np.ndarray, t: float, r: float) -> float:
    def shell(rho: float) -> float:
        return float(_shell_values(params, field_.magnitude, x, np.array([rho]))[0]) * rho ** (-2.0 - params.alpha)

    value, _ = integrate.quad(shell, r, np.inf, limit=200, epsabs=1e-13, epsrel=1e-10)
    return t * t * value


def gradient_kato_constant(
    field_: DriftField,
    params: StableParams,
    times: Sequence[float] = (0.1, 1.0, 10.0),
    probe: Optional[np.ndarray] = None,
) -> GradientKatoReport:
    """
    Smallest C with sup_x int (|z|^{-(d+1-alpha)} ^ t^2 |z|^{-(d+1+alpha)}) |b(x - z)| dz <= C M(t^{1/alpha})
    over the given times.
    """

    points = default_probe(field_) if probe is None else np.asarray(probe, dtype=float).reshape(-1, params.d)
    ratios = []
    for t in times:
        r = t ** (1.0 / params.alpha)
        modulus = kato_modulus(field_, params, r, points).value
        integral = max(
            local_kato_integral(field_, params, x, r) + _outer_kato_integral(field_, params, x, t, r) for x in points
        )
        ratios.append(integral / modulus if modulus > 0.0 else 0.0)
    return GradientKatoReport(constant=max(ratios), times=list(times), ratios=ratios)
