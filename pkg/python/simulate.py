"""
Monte Carlo for dX = dY + b(X) dt driven by a symmetric alpha-stable process Y.

Every path draws from its own Philox stream keyed by (seed, path index), so a path set
is the same whatever the chunking or thread count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate, stats

from errors import DomainError, HorizonError, InsufficientSampleError, KernelQualityError
from heat_kernel import SeriesKernel, kernel_rows
from kato import DriftField
from parallel import chunked, map_parallel
from stable_core import StableParams, levy_tail_mass, radial_profile, sphere_rule, tail_mass

logger = logging.getLogger(__name__)

PATH_CHUNK = 2048
ROW_MASS_TOLERANCE = 1e-2
CDF_NODES = 20001


@dataclass(frozen=True)
class SimConfig:
    params: StableParams
    field: DriftField
    x0: tuple = (0.0,)
    dt: float = 0.01
    horizon: float = 1.0
    n_paths: int = 10000
    seed: int = 12345
    jump_threshold: float = 1.0
    regularization_radius: Optional[float] = None
    threads: int = 1

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise DomainError(f"dt must be positive, got {self.dt!r}")
        if self.horizon < self.dt:
            raise DomainError(f"horizon {self.horizon} is shorter than dt {self.dt}")
        if int(self.n_paths) < 1:
            raise DomainError("n_paths must be at least 1")
        ratio = self.horizon / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise DomainError(f"horizon {self.horizon} is not a multiple of dt {self.dt}")
        x0 = tuple(float(c) for c in np.atleast_1d(self.x0))
        if len(x0) != self.params.d:
            raise DomainError(f"x0 must be {self.params.d}-dimensional")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def effective_field(self) -> DriftField:
        """The drift actually stepped: singular fields are capped at the regularization radius."""

        self.field.check_admissible(self.params)
        if self.field.kind == "power_singularity":
            if self.regularization_radius is None:
                raise DomainError("a singular drift needs a regularization radius")
            return self.field.regularized(self.regularization_radius)
        return self.field


@dataclass
class PathRecord:
    times: np.ndarray
    states: np.ndarray
    increments: np.ndarray
    jump_log: List[tuple] = field(default_factory=list)


@dataclass
class PathSet:
    """States (n, K+1, d) and increments (n, K, d) of a batch of paths."""

    params: StableParams
    dt: float
    states: np.ndarray
    increments: np.ndarray
    failed: np.ndarray
    seed: int
    jump_threshold: float
    method: str = "euler"
    drift: Dict[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(self.failed))

    @property
    def valid(self) -> np.ndarray:
        return ~self.failed

    def at(self, step: int) -> np.ndarray:
        """States of the valid paths at one step, shape (n_valid, d)."""

        return self.states[self.valid, step]

    def final(self) -> np.ndarray:
        return self.at(self.steps)

    def record(self, index: int) -> PathRecord:
        increments = self.increments[index]
        sizes = np.linalg.norm(increments, axis=-1)
        jumps = [(int(k), increments[k].copy()) for k in np.flatnonzero(sizes >= self.jump_threshold)]
        return PathRecord(self.times, self.states[index], increments, jumps)

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))

    def summary(self) -> Dict[str, object]:
        final = self.final()
        return {
            "method": self.method,
            "n_paths": len(self),
            "n_failed": self.n_failed,
            "dt": self.dt,
            "horizon": self.horizon,
            "seed": self.seed,
            "final_median": np.median(final, axis=0).tolist() if final.size else None,
            "drift": self.drift,
        }


def path_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def _positive_stable(beta: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """One-sided beta-stable variables with Laplace transform exp(-u^beta) (Kanter)."""

    theta = math.pi * (1.0 - rng.random(size))
    w = rng.standard_exponential(size)
    return (
        np.sin(beta * theta) / np.sin(theta) ** (1.0 / beta)
        * (np.sin((1.0 - beta) * theta) / w) ** ((1.0 - beta) / beta)
    )


def sample_stable_increment(params: StableParams, dt: float, rng: np.random.Generator, size: Optional[int] = None):
    """Increments with characteristic function exp(-dt |xi|^alpha); shape (d,) or (size, d)."""

    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    count = 1 if size is None else int(size)
    alpha, d = params.alpha, params.d
    if d == 1:
        v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, count)
        w = rng.standard_exponential(count)
        x = (
            np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
        )
        out = (dt ** (1.0 / alpha) * x)[:, None]
    else:
        beta = alpha / 2.0
        s = dt ** (1.0 / beta) * _positive_stable(beta, rng, count)
        out = np.sqrt(2.0 * s)[:, None] * rng.standard_normal((count, d))
    return out[0] if size is None else out


def _euler_block(config: SimConfig, drift: DriftField, indices: range):
    steps = config.steps
    increments = np.stack(
        [sample_stable_increment(config.params, config.dt, path_stream(config.seed, i), steps) for i in indices]
    )
    states, failed = _euler_states(config, drift, increments, config.dt)
    return states, increments, failed


def _euler_states(config: SimConfig, drift: DriftField, increments: np.ndarray, dt: float):
    count, steps, d = increments.shape
    states = np.empty((count, steps + 1, d))
    states[:, 0] = config.x0
    failed = np.zeros(count, dtype=bool)
    for k in range(steps):
        current = states[:, k]
        velocity = np.asarray(drift(current), dtype=float).reshape(count, d)
        failed |= ~np.all(np.isfinite(velocity), axis=-1)
        velocity = np.where(failed[:, None], 0.0, velocity)
        states[:, k + 1] = current + increments[:, k] + velocity * dt
    return states, failed


def euler_paths(config: SimConfig) -> PathSet:
    """X_{k+1} = X_k + dY_k + b(X_k) dt with exact stable increments."""

    drift = config.effective_field()
    blocks = map_parallel(
        lambda block: _euler_block(config, drift, range(block.start, block.stop)),
        chunked(config.n_paths, PATH_CHUNK),
        config.threads,
    )
    states = np.concatenate([b[0] for b in blocks])
    increments = np.concatenate([b[1] for b in blocks])
    failed = np.concatenate([b[2] for b in blocks])
    if failed.any():
        logger.warning("%d of %d paths hit a non-finite drift and are excluded", failed.sum(), failed.size)
    logger.info("simulated %d Euler paths over %d steps", config.n_paths, config.steps)
    return PathSet(
        config.params, config.dt, states, increments, failed, config.seed, config.jump_threshold, "euler",
        drift.describe(),
    )


def reconstruct_noise(path: PathRecord, field_: DriftField) -> np.ndarray:
    """Z_k = X_k - X_0 - sum_{j<k} b(X_j) dt, shape (K+1, d)."""

    states = np.asarray(path.states, dtype=float)
    dt = float(path.times[1] - path.times[0])
    velocity = np.asarray(field_(states[:-1]), dtype=float).reshape(states[:-1].shape)
    drift = np.concatenate([np.zeros((1, states.shape[1])), np.cumsum(velocity * dt, axis=0)])
    return states - states[0] - drift


def noise_increments(paths: PathSet, field_: DriftField) -> np.ndarray:
    """Reconstructed noise increments of every valid path, shape (n_valid, K, d)."""

    states = paths.states[paths.valid]
    count, steps, d = states.shape[0], paths.steps, paths.params.d
    velocity = np.asarray(field_(states[:, :-1].reshape(-1, d)), dtype=float).reshape(count, steps, d)
    return np.diff(states, axis=1) - velocity * paths.dt


@dataclass
class _ChainRows:
    axis: np.ndarray
    flat_cdf: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def nodes(self) -> int:
        return self.axis.size


def _chain_rows(kernel: SeriesKernel, dt: float) -> _ChainRows:
    grid, params = kernel.grid, kernel.params
    rows = kernel_rows(kernel, dt).values[:, 0]
    axis = grid.axis
    n = axis.size
    cells = 0.5 * (rows[:, 1:] + rows[:, :-1]) * grid.spacing
    cumulative = np.concatenate([np.zeros((n, 1)), np.cumsum(np.maximum(cells, 0.0), axis=1)], axis=1)
    inside = cumulative[:, -1]
    left = np.array([0.5 * tail_mass(params, dt, grid.half_width + x) for x in axis])
    right = np.array([0.5 * tail_mass(params, dt, grid.half_width - x) for x in axis])
    total = inside + left + right
    # only interior sources are mass-checked; edge rows leak drifted mass
    interior = grid.interior_mask(0.5)
    deviation = np.where(interior, np.abs(total - 1.0), 0.0)
    worst = int(np.argmax(deviation))
    if deviation[worst] > ROW_MASS_TOLERANCE:
        raise KernelQualityError(
            f"kernel row at x = {axis[worst]:.4g} has mass {total[worst]:.5f}",
            source=float(axis[worst]),
            mass=float(total[worst]),
        )
    cdf = cumulative / inside[:, None]
    return _ChainRows(axis, (cdf + np.arange(n)[:, None]).ravel(), left / total, right / total)


def _chain_step(rows: _ChainRows, x: np.ndarray, uniforms: np.ndarray, alpha: float, half_width: float) -> np.ndarray:
    n = rows.nodes
    spacing = rows.axis[1] - rows.axis[0]
    node = np.clip(np.rint((x + half_width) / spacing).astype(int), 0, n - 1)
    u, v = uniforms[:, 0], uniforms[:, 1]
    position = np.searchsorted(rows.flat_cdf, node + v)
    j = np.clip(position - node * n, 1, n - 1)
    lower = rows.flat_cdf[node * n + j - 1] - node
    upper = rows.flat_cdf[node * n + j] - node
    width = np.where(upper > lower, upper - lower, 1.0)
    y = rows.axis[j - 1] + spacing * np.clip((v - lower) / width, 0.0, 1.0)
    step = y - rows.axis[node]
    tail = (1.0 - v) ** (-1.0 / alpha)
    go_left = u < rows.left[node]
    go_right = u > 1.0 - rows.right[node]
    step = np.where(go_left, -(half_width + rows.axis[node]) * tail, step)
    step = np.where(go_right, (half_width - rows.axis[node]) * tail, step)
    return step


def kernel_chain_paths(kernel: SeriesKernel, config: SimConfig) -> PathSet:
    """Markov chain with steps drawn from the grid rows of q^b(dt, x, .) by inverse CDF."""

    params, grid = kernel.params, kernel.grid
    if params.d != 1:
        raise DomainError("kernel-chain sampling is one-dimensional")
    ratio = config.dt / grid.time_step
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise DomainError(f"dt = {config.dt} is not a multiple of the kernel time step {grid.time_step}")
    rows = _chain_rows(kernel, config.dt)
    steps = config.steps

    def run(block: slice):
        indices = range(block.start, block.stop)
        uniforms = np.stack([path_stream(config.seed, i).random((steps, 2)) for i in indices])
        states = np.empty((len(indices), steps + 1, 1))
        states[:, 0] = config.x0
        increments = np.empty((len(indices), steps, 1))
        for k in range(steps):
            move = _chain_step(rows, states[:, k, 0], uniforms[:, k], params.alpha, grid.half_width)
            increments[:, k, 0] = move
            states[:, k + 1, 0] = states[:, k, 0] + move
        return states, increments

    blocks = map_parallel(run, chunked(config.n_paths, PATH_CHUNK), config.threads)
    states = np.concatenate([b[0] for b in blocks])
    increments = np.concatenate([b[1] for b in blocks])
    logger.info("simulated %d kernel-chain paths over %d steps", config.n_paths, steps)
    return PathSet(
        params, config.dt, states, increments, np.zeros(states.shape[0], dtype=bool), config.seed,
        config.jump_threshold, "kernel_chain", kernel.drift.describe(),
    )


@dataclass
class LevySystemReport:
    """
    ``observed`` counts increments of one Euler step, which overstates the jump count by
    O(dt); ``extrapolated`` is 2 x (count at dt) - (count at 2 dt), path by path.
    """

    rho: float
    horizon: float
    observed: float
    expected: float
    std_error: float
    z_score: float
    dispersion: float
    extrapolated: float
    extrapolated_std_error: float = math.nan
    functional_observed: Optional[float] = None
    functional_expected: Optional[float] = None

    @property
    def extrapolated_z(self) -> float:
        return (self.extrapolated - self.expected) / self.extrapolated_std_error

    def as_dict(self) -> Dict[str, object]:
        out = dict(self.__dict__)
        out["extrapolated_z"] = self.extrapolated_z
        return out


def levy_functional(params: StableParams, f: Callable, floor: float) -> float:
    """int_{|z| >= floor} f(z) J(z) dz by radial quadrature over spherical sums."""

    directions, weights = sphere_rule(params.d)

    def shell(rho: float) -> float:
        values = np.asarray(f(rho * directions), dtype=float)
        return float(values @ weights) * params.normalizer * rho ** (-1.0 - params.alpha)

    value, _ = integrate.quad(shell, floor, np.inf, limit=400, epsabs=1e-12, epsrel=1e-10)
    return value


def levy_system_check(
    paths: PathSet,
    params: StableParams,
    rho: float,
    horizon: Optional[float] = None,
    f: Optional[Callable] = None,
    floor: Optional[float] = None,
) -> LevySystemReport:
    """Mean count of increments with |dY| >= rho over [0, T] against T nu(|z| >= rho)."""

    if rho <= 0.0:
        raise DomainError(f"rho must be positive, got {rho!r}")
    if rho < paths.jump_threshold:
        raise DomainError(f"rho = {rho} is below the recorded jump threshold {paths.jump_threshold}")
    horizon = paths.horizon if horizon is None else float(horizon)
    if horizon > paths.horizon + 1e-12:
        raise DomainError(f"horizon {horizon} exceeds the simulated {paths.horizon}")
    steps = int(round(horizon / paths.dt))
    increments = paths.increments[paths.valid, :steps]
    n = increments.shape[0]
    expected = horizon * levy_tail_mass(params, rho)
    if n * expected < 9.0:
        raise InsufficientSampleError(
            f"{n} paths give {n * expected:.2f} expected jumps; a 3-sigma test needs at least 9",
            n_paths=n,
            expected=expected,
        )
    counts = np.count_nonzero(np.linalg.norm(increments, axis=-1) >= rho, axis=1)
    mean = float(np.mean(counts))
    variance = float(np.var(counts, ddof=1)) if n > 1 else 0.0
    std_error = math.sqrt(max(variance, expected) / n)
    pairs = steps // 2
    if pairs:
        coarse = increments[:, : 2 * pairs].reshape(n, pairs, 2, -1).sum(axis=2)
        coarse_counts = np.count_nonzero(np.linalg.norm(coarse, axis=-1) >= rho, axis=1) * (steps / (2.0 * pairs))
        per_path = 2.0 * counts - coarse_counts
    else:
        per_path = counts.astype(float)
    extrapolated = float(np.mean(per_path))
    spread = float(np.var(per_path, ddof=1)) if n > 1 else 0.0
    report = LevySystemReport(
        rho=rho,
        horizon=horizon,
        observed=mean,
        expected=expected,
        std_error=std_error,
        z_score=(mean - expected) / std_error,
        dispersion=variance / mean if mean > 0.0 else math.nan,
        extrapolated=extrapolated,
        extrapolated_std_error=math.sqrt(max(spread, expected) / n),
    )
    if f is not None:
        floor = rho if floor is None else float(floor)
        flat = increments.reshape(-1, params.d)
        sums = np.asarray(f(flat), dtype=float).reshape(n, steps).sum(axis=1)
        report.functional_observed = float(np.mean(sums))
        report.functional_expected = horizon * levy_functional(params, f, floor)
    logger.info("Levy system at rho=%.3g: %.5f observed vs %.5f expected (z=%.2f)", rho, mean, expected,
                report.z_score)
    return report


@dataclass
class EmpiricalResolvent:
    value: float
    std_error: float
    truncation_bound: float
    lam: float
    n_paths: int

    def as_dict(self) -> Dict[str, object]:
        return dict(self.__dict__)


def empirical_resolvent(paths: PathSet, lam: float, g, tolerance: Optional[float] = None) -> EmpiricalResolvent:
    """Average over paths of the trapezoid sum of e^{-lambda t_k} g(X_k) dt."""

    if lam <= 0.0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    bound = math.exp(-lam * paths.horizon) * float(g.sup_norm) / lam
    if tolerance is not None and bound > 0.5 * tolerance:
        raise HorizonError(
            f"truncation bound {bound:.3e} exceeds half the tolerance {tolerance:.3e}; lengthen the horizon",
            bound=bound,
            horizon=paths.horizon,
        )
    states = paths.states[paths.valid]
    n, steps1, d = states.shape
    weights = paths.dt * np.exp(-lam * paths.times)
    weights[[0, -1]] *= 0.5
    values = np.asarray(g(states.reshape(-1, d)), dtype=float).reshape(n, steps1)
    per_path = values @ weights
    std_error = float(np.std(per_path, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return EmpiricalResolvent(float(np.mean(per_path)), std_error, bound, float(lam), n)


@dataclass
class WeakErrorStudy:
    steps: List[int]
    means: List[float]
    differences: List[float]

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.differences, self.differences[1:]))

    def as_dict(self) -> Dict[str, object]:
        return {**self.__dict__, "decreasing": self.decreasing}


def coupled_weak_errors(config: SimConfig, f: Callable, levels: int = 3) -> WeakErrorStudy:
    """|E f(X_T^{dt}) - E f(X_T^{dt/2})| over ``levels`` halvings with coupled increments."""

    drift = config.effective_field()
    fine_steps = config.steps * 2 ** levels
    fine_dt = config.horizon / fine_steps
    d = config.params.d

    def level_means(block: slice) -> np.ndarray:
        fine = np.stack(
            [sample_stable_increment(config.params, fine_dt, path_stream(config.seed, i), fine_steps)
             for i in range(block.start, block.stop)]
        )
        sums = []
        for level in range(levels + 1):
            group = 2 ** (levels - level)
            increments = fine.reshape(fine.shape[0], -1, group, d).sum(axis=2)
            states, failed = _euler_states(config, drift, increments, fine_dt * group)
            values = np.asarray(f(states[~failed, -1]), dtype=float)
            sums.append((values.sum(), values.size))
        return np.array(sums)

    totals = sum(map_parallel(level_means, chunked(config.n_paths, PATH_CHUNK), config.threads))
    means = (totals[:, 0] / totals[:, 1]).tolist()
    return WeakErrorStudy(
        steps=[config.steps * 2 ** level for level in range(levels + 1)],
        means=means,
        differences=[abs(a - b) for a, b in zip(means, means[1:])],
    )


@lru_cache(maxsize=None)
def _unit_cdf_table(alpha: float):
    profile = radial_profile(1, alpha)
    radii = np.linspace(0.0, 50.0, CDF_NODES)
    half = integrate.cumulative_trapezoid(profile(radii), x=radii, initial=0.0)
    # pin the far end to the analytic tail mass
    half *= (0.5 - 0.5 * profile.mass_outside(50.0)) / half[-1]
    return radii, half, profile


def free_cdf(params: StableParams, t: float, shift: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """CDF of p(t, . - shift) for d = 1."""

    if params.d != 1:
        raise DomainError("the free CDF is one-dimensional")
    radii, half, profile = _unit_cdf_table(params.alpha)
    scale = t ** (1.0 / params.alpha)

    def cdf(y) -> np.ndarray:
        s = (np.atleast_1d(np.asarray(y, dtype=float)) - shift) / scale
        r = np.abs(s)
        inner = np.interp(np.minimum(r, radii[-1]), radii, half)
        far = np.array([0.5 - 0.5 * profile.mass_outside(v) for v in np.atleast_1d(r[r > radii[-1]])])
        inner[r > radii[-1]] = far
        return 0.5 + np.sign(s) * inner

    return cdf


def kernel_cdf(kernel: SeriesKernel, t: float, source: float) -> Callable[[np.ndarray], np.ndarray]:
    """CDF of a series-kernel row on the grid, with free tails outside the box."""

    grid, params = kernel.grid, kernel.params
    if params.d != 1:
        raise DomainError("kernel CDFs are one-dimensional")
    row = kernel.as_table().row(t, [source])
    cells = 0.5 * (row[1:] + row[:-1]) * grid.spacing
    left = 0.5 * tail_mass(params, t, grid.half_width + source)
    right = 0.5 * tail_mass(params, t, grid.half_width - source)
    cumulative = left + np.concatenate([[0.0], np.cumsum(cells)])
    cumulative /= cumulative[-1] + right
    tail = free_cdf(params, t, source)

    def cdf(y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.interp(y, grid.axis, cumulative)
        outside = np.abs(y) > grid.half_width
        if np.any(outside):
            out[outside] = tail(y[outside])
        return out

    return cdf


def ks_against_kernel(samples: np.ndarray, cdf: Callable) -> Dict[str, float]:
    """One-sample Kolmogorov-Smirnov statistic and p-value against a CDF."""

    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size < 2:
        raise InsufficientSampleError("a KS test needs at least 2 samples")
    result = stats.ks_1samp(samples, cdf)
    return {"statistic": float(result.statistic), "pvalue": float(result.pvalue), "n": int(samples.size),
            "critical_01": 1.63 / math.sqrt(samples.size)}


@dataclass
class EmpiricalDensity:
    edges: np.ndarray
    counts: np.ndarray
    n_samples: int
    _sorted: np.ndarray = field(repr=False)

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.n_samples * np.diff(self.edges))

    def cdf(self, x) -> np.ndarray:
        return np.searchsorted(self._sorted, np.asarray(x, dtype=float), side="right") / self.n_samples

    def rows(self) -> List[List[float]]:
        centres = 0.5 * (self.edges[1:] + self.edges[:-1])
        return [[float(c), int(n), float(p)] for c, n, p in zip(centres, self.counts, self.density)]


def empirical_density(
    samples: np.ndarray, bins: int = 200, limits: Optional[Sequence[float]] = None
) -> EmpiricalDensity:
    """Histogram of one-dimensional samples; samples outside ``limits`` go to the end bins."""

    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise InsufficientSampleError("no samples to histogram")
    lo, hi = limits if limits is not None else np.quantile(samples, [0.005, 0.995])
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(np.clip(samples, lo, hi), bins=edges)
    return EmpiricalDensity(edges, counts, int(samples.size), np.sort(samples))
