"""
Perturbation series for the transition density of the drifted stable process.

    q_0 = p,   q_k(t, x, y) = int_0^t int q_{k-1}(s, x, z) b(z) . grad_z p(t - s, z, y) dz ds

Tables hold q_k(t, x, .) for a set of source nodes x on a uniform box grid. The spatial
integral is a grid convolution with exactly sampled grad p, batched by FFT over all
(s, t) pairs; the time integral is composite Simpson on the uniform mesh. At s = 0 the
first-order integrand is known in closed form (-b(x) . grad p(t, y - x)); the value at
s = t, where the sampled kernel degenerates, is extrapolated from the four preceding
nodes. Only slices at least MIN_CERTIFIED_STEPS steps from the origin are certified.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft

from errors import (
    BoundViolationError,
    CompositionDepthError,
    ConvergenceError,
    DomainError,
    FitError,
)
from kato import DriftField, zero_field
from parallel import chunked, map_parallel
from stable_core import (
    StableParams,
    comparability_constant,
    density,
    density_gradient,
    fractional_laplacian,
    tail_mass,
)

logger = logging.getLogger(__name__)

MIN_CERTIFIED_STEPS = 4
ROW_SUM_TOLERANCE = 1e-3
SOURCE_CHUNK = 32
ALIASING_WARNING = 1e-6

# G(s = t) from G at the preceding nodes, exact for polynomials of degree < len
_EXTRAPOLATION = {1: (1.0,), 2: (2.0, -1.0), 3: (3.0, -3.0, 1.0), 4: (4.0, -6.0, 4.0, -1.0)}


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform box [-L, L]^d with spacing h and a uniform time mesh on (0, horizon]."""

    d: int = 1
    half_width: float = 10.0
    spacing: float = 0.05
    horizon: float = 1.0
    steps: int = 100
    tail_bound: float = 0.02
    probe_sources: Tuple[Tuple[float, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.spacing <= 0.0 or self.half_width <= 0.0:
            raise DomainError("grid spacing and half width must be positive")
        if self.horizon <= 0.0 or int(self.steps) < 1:
            raise DomainError("horizon must be positive and steps at least 1")
        cells = 2.0 * self.half_width / self.spacing
        if abs(cells - round(cells)) > 1e-9 * cells:
            raise DomainError(f"2L = {2 * self.half_width} is not a multiple of h = {self.spacing}")
        sources = self.probe_sources or (tuple([0.0] * self.d),)
        sources = tuple(tuple(float(c) for c in np.atleast_1d(s)) for s in sources)
        if any(len(s) != self.d for s in sources):
            raise DomainError(f"probe sources must be {self.d}-dimensional")
        object.__setattr__(self, "probe_sources", sources)
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def nodes_per_axis(self) -> int:
        return int(round(2.0 * self.half_width / self.spacing)) + 1

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.nodes_per_axis,) * self.d

    @property
    def size(self) -> int:
        return self.nodes_per_axis ** self.d

    @property
    def time_step(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.time_step * np.arange(1, self.steps + 1)

    @property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.nodes_per_axis)

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.d

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def offset_points(self) -> np.ndarray:
        n = self.nodes_per_axis
        line = self.spacing * np.arange(-(n - 1), n)
        mesh = np.meshgrid(*([line] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def node_index(self, point) -> Tuple[int, ...]:
        coords = np.asarray(point, dtype=float).reshape(self.d)
        if np.any(np.abs(coords) > self.half_width + 1e-12):
            raise DomainError(f"point {coords.tolist()} lies outside the box [-{self.half_width}, {self.half_width}]^d")
        index = np.rint((coords + self.half_width) / self.spacing).astype(int)
        return tuple(int(i) for i in index)

    def node(self, index: Sequence[int]) -> np.ndarray:
        return -self.half_width + self.spacing * np.asarray(index, dtype=float)

    def trapezoid_weights(self) -> np.ndarray:
        line = np.full(self.nodes_per_axis, self.spacing)
        line[[0, -1]] *= 0.5
        weights = line
        for _ in range(self.d - 1):
            weights = np.multiply.outer(weights, line)
        return weights

    def interior_mask(self, fraction: float = 0.5) -> np.ndarray:
        pts = self.points()
        return np.all(np.abs(pts) <= fraction * self.half_width + 1e-12, axis=-1).reshape(self.shape)

    def box_tail_mass(self, params: StableParams, t: float, source=None) -> float:
        """Mass of p(t, . - x) outside the box, summed over the 2d faces."""

        x = np.zeros(self.d) if source is None else np.asarray(source, dtype=float).reshape(self.d)
        line = StableParams(1, params.alpha)
        total = 0.0
        for c in range(self.d):
            for gap in (self.half_width - x[c], self.half_width + x[c]):
                total += 0.5 * tail_mass(line, t, max(gap, 0.0))
        return min(total, 1.0)

    def aliasing_level(self, params: StableParams) -> float:
        return math.exp(-self.time_step * (2.0 * math.pi / self.spacing) ** params.alpha)

    def check(self, params: StableParams) -> None:
        if params.d != self.d:
            raise DomainError(f"grid is {self.d}-dimensional but the process is {params.d}-dimensional")
        mass = self.box_tail_mass(params, self.horizon)
        if mass > self.tail_bound:
            raise DomainError(
                f"tail mass {mass:.3e} of p(horizon) outside the box exceeds the declared bound {self.tail_bound:.3e}; "
                "enlarge half_width or shorten the horizon"
            )
        level = self.aliasing_level(params)
        if level > ALIASING_WARNING:
            logger.warning("time step %.3g under-resolves grad p on spacing %.3g (aliasing %.1e)",
                           self.time_step, self.spacing, level)

    def refined(self) -> "SpaceTimeGrid":
        return replace(self, spacing=self.spacing / 2.0)

    def describe(self) -> Dict[str, object]:
        return {
            "d": self.d,
            "half_width": self.half_width,
            "spacing": self.spacing,
            "horizon": self.horizon,
            "steps": self.steps,
            "tail_bound": self.tail_bound,
            "probe_sources": [list(s) for s in self.probe_sources],
        }


@dataclass
class KernelTable:
    """Values q(t, x, y) for slices ``times``, source nodes ``sources`` and every grid target."""

    order: int
    params: StableParams
    grid: SpaceTimeGrid
    times: np.ndarray
    source_index: List[Tuple[int, ...]]
    values: np.ndarray
    pieces: Tuple[float, ...] = ()

    @property
    def sources(self) -> np.ndarray:
        return np.array([self.grid.node(i) for i in self.source_index])

    @property
    def sup_norm(self) -> np.ndarray:
        axes = (0,) + tuple(range(2, self.values.ndim))
        return np.max(np.abs(self.values), axis=axes)

    def slice_index(self, t: float) -> int:
        matches = np.flatnonzero(np.abs(self.times - t) <= 1e-9 * max(1.0, t))
        if matches.size == 0:
            raise DomainError(f"t = {t!r} is not a slice of this table")
        return int(matches[0])

    def row(self, t: float, source) -> np.ndarray:
        index = self.grid.node_index(source)
        try:
            position = self.source_index.index(index)
        except ValueError:
            raise DomainError(f"source {list(source)} is not stored in this table") from None
        return self.values[position, self.slice_index(t)]


def simpson_weights(j: int, dt: float) -> np.ndarray:
    """Weights of the nodes 0..j for int_0^{j dt}: Simpson, closed by the 3/8 rule for odd j."""

    base = np.zeros(j + 1)
    if j == 1:
        base[:] = dt / 2.0
        return base
    simpson_end = j if j % 2 == 0 else j - 3
    for start in range(0, simpson_end, 2):
        base[start:start + 3] += dt / 3.0 * np.array([1.0, 4.0, 1.0])
    if j % 2 == 1:
        base[j - 3:j + 1] += 3.0 * dt / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return base


def duhamel_weights(steps: int, dt: float) -> np.ndarray:
    """W[j, i]: weight of G(tau_i, tau_j), i < j, with the s = t node folded into the earlier ones."""

    weights = np.zeros((steps + 1, steps + 1))
    for j in range(1, steps + 1):
        base = simpson_weights(j, dt)
        row = base[:j].copy()
        coefficients = _EXTRAPOLATION[min(j, 4)]
        for lag, c in enumerate(coefficients, start=1):
            row[j - lag] += base[j] * c
        weights[j, :j] = row
    return weights


class _Recursion:
    """Grid operators shared by every order of the series for one (params, field, grid)."""

    def __init__(self, params: StableParams, field_: DriftField, grid: SpaceTimeGrid, slices: Optional[int] = None):
        grid.check(params)
        field_.check_admissible(params)
        self.params = params
        self.field = field_
        self.grid = grid
        self.slices = grid.steps if slices is None else int(slices)
        self.dt = grid.time_step
        d, n = params.d, grid.nodes_per_axis
        self.axes = tuple(range(-d, 0))
        offsets = grid.offset_points()
        offset_shape = (2 * n - 1,) * d
        times = self.dt * np.arange(1, self.slices + 1)
        self.offset_density = np.stack([density(params, t, offsets).reshape(offset_shape) for t in times])
        gradients = np.stack([density_gradient(params, t, offsets) for t in times])
        self.offset_gradient = np.moveaxis(gradients, -1, 1).reshape((self.slices, d) + offset_shape)
        self.fft_shape = tuple(fft.next_fast_len(3 * n - 2, real=True) for _ in range(d))
        self.valid = tuple(slice(n - 1, 2 * n - 1) for _ in range(d))
        self.kernel_hat = None
        self.drift = None
        if not field_.is_zero:
            self.kernel_hat = fft.rfftn(grid.cell_volume * self.offset_gradient, s=self.fft_shape, axes=self.axes)
            values = np.asarray(field_(grid.points()), dtype=float).reshape(grid.size, d)
            if not np.all(np.isfinite(values)):
                raise DomainError(f"{field_.kind} field is not finite on the grid; regularize it first")
            self.drift = np.moveaxis(values, -1, 0).reshape((d,) + grid.shape)
        self.weights = duhamel_weights(self.slices, self.dt)

    def _window(self, index: Tuple[int, ...]) -> Tuple[slice, ...]:
        n = self.grid.nodes_per_axis
        return tuple(slice(n - 1 - i, 2 * n - 1 - i) for i in index)

    def free(self, source_index: Sequence[Tuple[int, ...]]) -> np.ndarray:
        return np.stack([self.offset_density[(slice(None),) + self._window(i)] for i in source_index])

    def origin_term(self, source_index: Sequence[Tuple[int, ...]]) -> np.ndarray:
        """-b(x) . grad p(tau_j, y - x) for every slice and source."""

        rows = []
        for index in source_index:
            bx = self.drift[(slice(None),) + tuple(index)]
            window = self.offset_gradient[(slice(None), slice(None)) + self._window(index)]
            rows.append(-np.tensordot(bx, window, axes=([0], [1])))
        return np.stack(rows)

    def next_term(self, previous: np.ndarray, first: bool, source_index: Sequence[Tuple[int, ...]]) -> np.ndarray:
        out = np.zeros_like(previous)
        if self.field.is_zero:
            return out
        flux = previous[:, :, None] * self.drift[None, None]
        flux_hat = fft.rfftn(flux, s=self.fft_shape, axes=self.axes)
        origin = self.origin_term(source_index) if first else None
        pad = (1,) * (self.params.d + 1)
        for j in range(1, self.slices + 1):
            if j >= 2:
                w = self.weights[j, 1:j].reshape((-1,) + pad)
                acc = np.einsum("sic...,ic...->s...", flux_hat[:, : j - 1], w * self.kernel_hat[j - 2::-1])
                out[:, j - 1] = -fft.irfftn(acc, s=self.fft_shape, axes=self.axes)[(slice(None),) + self.valid]
            if first:
                out[:, j - 1] += self.weights[j, 0] * origin[:, j - 1]
        return out

    def series(self, source_index: Sequence[Tuple[int, ...]], orders: int, keep_terms: bool) -> List[np.ndarray]:
        terms = [self.free(source_index)]
        total = terms[0].copy()
        previous = terms[0]
        for k in range(1, orders + 1):
            previous = self.next_term(previous, k == 1, source_index)
            total += previous
            if keep_terms:
                terms.append(previous)
        return terms if keep_terms else [total]


def free_table(
    params: StableParams,
    grid: SpaceTimeGrid,
    sources: Optional[Sequence] = None,
    engine: Optional[_Recursion] = None,
) -> KernelTable:
    """Order-0 table: the free density sampled exactly at the grid offsets."""

    index = [grid.node_index(s) for s in (sources or grid.probe_sources)]
    engine = engine or _Recursion(params, zero_field(params.d), grid)
    return KernelTable(0, params, grid, grid.times[: engine.slices], index, engine.free(index))


def perturbation_term(
    prev: KernelTable,
    field_: DriftField,
    grid: Optional[SpaceTimeGrid] = None,
    engine: Optional[_Recursion] = None,
) -> KernelTable:
    """Next order of the series from the previous table, on the same slices and sources."""

    grid = grid or prev.grid
    if np.any(~np.isfinite(prev.values)):
        raise DomainError(f"order {prev.order} table has non-finite entries")
    engine = engine or _Recursion(prev.params, field_, grid, slices=prev.times.size)
    values = engine.next_term(prev.values, prev.order == 0, prev.source_index)
    return KernelTable(prev.order + 1, prev.params, grid, prev.times, list(prev.source_index), values)


@dataclass
class SeriesKernel:
    """Summed perturbation series on the probe rows, with the certified range (0, t0]."""

    params: StableParams
    drift: DriftField = field(repr=False)
    grid: SpaceTimeGrid = field(repr=False)
    terms: List[KernelTable] = field(repr=False)
    partial_sums: np.ndarray = field(repr=False)
    t0_estimate: float = 0.0
    decay_ratio: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)
    tail_bound: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    certified: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool), repr=False)
    row_sums: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)
    ratio_threshold: float = 0.5
    threads: int = 1

    @property
    def orders(self) -> int:
        return len(self.terms) - 1

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def source_index(self) -> List[Tuple[int, ...]]:
        return self.terms[0].source_index

    @property
    def certified_times(self) -> np.ndarray:
        return self.times[self.certified]

    @property
    def observed_ratio(self) -> float:
        if not np.any(self.certified) or self.decay_ratio.size == 0:
            return 0.0
        return float(np.max(self.decay_ratio[:, self.certified]))

    def slice_index(self, t: float) -> int:
        j = int(round(t / self.grid.time_step))
        if j < 1 or j > self.grid.steps or abs(j * self.grid.time_step - t) > 1e-9 * max(1.0, t):
            raise DomainError(f"t = {t!r} is not on the time mesh of step {self.grid.time_step}")
        return j - 1

    def table(self, t: float) -> np.ndarray:
        return self.partial_sums[:, self.slice_index(t)]

    def as_table(self) -> KernelTable:
        return KernelTable(self.orders, self.params, self.grid, self.times, self.source_index, self.partial_sums)

    def summary(self) -> Dict[str, object]:
        return {
            "orders": self.orders,
            "t0_estimate": self.t0_estimate,
            "decay_ratio": self.observed_ratio,
            "ratio_threshold": self.ratio_threshold,
            "tail_bound": float(np.max(self.tail_bound[self.certified])) if np.any(self.certified) else None,
            "row_sum_deviation": float(np.max(np.abs(self.row_sums[:, self.certified] - 1.0)))
            if np.any(self.certified)
            else None,
            "term_sup_norms": [float(t.sup_norm.max()) for t in self.terms],
        }


def row_sums(values: np.ndarray, params: StableParams, grid: SpaceTimeGrid, source_index, times) -> np.ndarray:
    """int q(t, x, y) dy by the trapezoid rule on the box plus the free tail outside it."""

    weights = grid.trapezoid_weights()
    axes = tuple(range(2, values.ndim))
    inside = np.tensordot(values, weights, axes=(axes, tuple(range(grid.d))))
    tails = np.array([[grid.box_tail_mass(params, t, grid.node(i)) for t in times] for i in source_index])
    return inside + tails


def _ratios(norms: np.ndarray, reference: np.ndarray, floor: float) -> np.ndarray:
    """Successive norm ratios per slice; zero once a term is below floor * reference."""

    ratios = np.zeros((norms.shape[0] - 1, norms.shape[1]))
    settled = np.zeros(norms.shape[1], dtype=bool)
    for k in range(norms.shape[0] - 1):
        # terms at the quadrature noise level stop taking part in the decay test
        settled |= norms[k + 1] <= floor * reference
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(norms[k] > 0.0, norms[k + 1] / norms[k], 0.0)
        ratios[k] = np.where(settled, 0.0, ratio)
    return ratios


def _tail_bounds(norms: np.ndarray, ratios: np.ndarray, reference: np.ndarray, floor: float) -> np.ndarray:
    last = norms[-1]
    rho = np.max(ratios[-2:], axis=0) if ratios.shape[0] >= 2 else ratios[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(rho < 1.0, last * rho / (1.0 - rho), np.inf)
    settled = np.min(norms[1:], axis=0) <= floor * reference
    bound = np.where(settled, np.maximum(floor * reference, last), bound)
    return np.where(last == 0.0, 0.0, bound)


def _decay_prefix(ratios: np.ndarray, certifiable: np.ndarray, threshold: float) -> np.ndarray:
    ok = np.all(ratios <= threshold, axis=0) & certifiable
    prefix = np.zeros_like(ok)
    for j in np.flatnonzero(certifiable):
        if not ok[j]:
            break
        prefix[j] = True
    return prefix


def series_sum(
    field_: DriftField,
    params: StableParams,
    grid: SpaceTimeGrid,
    max_order: int = 12,
    ratio_threshold: float = 0.5,
    series_tol: float = 1e-6,
    threads: int = 1,
) -> SeriesKernel:
    """Sum the series on the probe rows and detect the certified range (0, t0]."""

    if max_order < 2:
        raise DomainError(f"max_order must be at least 2, got {max_order}")
    if not 0.0 < ratio_threshold < 1.0:
        raise DomainError(f"ratio_threshold must lie in (0, 1), got {ratio_threshold}")
    engine = _Recursion(params, field_, grid)
    certifiable = np.arange(1, grid.steps + 1) >= MIN_CERTIFIED_STEPS
    if not np.any(certifiable):
        raise DomainError(f"the time mesh needs at least {MIN_CERTIFIED_STEPS} steps")

    tables = [free_table(params, grid, engine=engine)]
    source_index = tables[0].source_index
    total = tables[0].values.copy()
    norms = [tables[0].sup_norm]
    axes = tuple(i for i in range(total.ndim) if i != 1)
    for k in range(1, max_order + 1):
        tables.append(perturbation_term(tables[-1], field_, engine=engine))
        total += tables[-1].values
        norms.append(tables[-1].sup_norm)
        logger.debug("order %d: sup norm %.3e at the horizon", k, norms[-1][-1])
        if k < 2:
            continue
        stacked = np.array(norms)
        scale = np.max(np.abs(total), axis=axes)
        ratios = _ratios(stacked, scale, series_tol)
        prefix = _decay_prefix(ratios[-2:], certifiable, ratio_threshold)
        if not np.any(prefix):
            continue
        bounds = _tail_bounds(stacked, ratios, scale, series_tol)
        if np.all(bounds[prefix] <= series_tol * scale[prefix]):
            break

    stacked = np.array(norms)
    scale = np.max(np.abs(total), axis=axes)
    ratios = _ratios(stacked, scale, series_tol)
    certified = _decay_prefix(ratios, certifiable, ratio_threshold)
    if not np.any(certified):
        raise ConvergenceError(
            f"no geometric decay below ratio {ratio_threshold} on any time slice; reduce the horizon "
            f"(currently {grid.horizon}) or the drift",
            horizon=grid.horizon,
            worst_ratio=float(np.max(ratios[:, certifiable])),
        )
    t0 = float(grid.times[certified][-1])
    sums = row_sums(total, params, grid, source_index, grid.times)
    deviation = np.max(np.abs(sums[:, certified] - 1.0))
    if deviation > ROW_SUM_TOLERANCE:
        logger.warning("row sums deviate from 1 by %.2e on certified slices", deviation)
    if np.any(total[:, certified] <= 0.0):
        logger.warning("series sum has non-positive values on certified slices")
    logger.info("series summed to order %d; t0 = %.4g (ratio %.3g)", len(tables) - 1, t0,
                float(np.max(ratios[:, certified])))
    return SeriesKernel(
        params=params,
        drift=field_,
        grid=grid,
        terms=tables,
        partial_sums=total,
        t0_estimate=t0,
        decay_ratio=ratios,
        tail_bound=_tail_bounds(stacked, ratios, scale, series_tol),
        certified=certified,
        row_sums=sums,
        ratio_threshold=ratio_threshold,
        threads=threads,
    )


def kernel_rows(
    kernel: SeriesKernel, t: float, source_index: Optional[Sequence[Tuple[int, ...]]] = None
) -> KernelTable:
    """Series rows at one certified time for arbitrary source nodes (every node by default)."""

    j = kernel.slice_index(t)
    if not kernel.certified[j]:
        raise DomainError(f"t = {t} is outside the certified range (0, {kernel.t0_estimate}]")
    grid = kernel.grid
    if source_index is None:
        source_index = [tuple(int(i) for i in idx) for idx in np.ndindex(*grid.shape)]
    source_index = list(source_index)
    engine = _Recursion(kernel.params, kernel.drift, grid, slices=j + 1)

    def run(block: slice) -> np.ndarray:
        return engine.series(source_index[block], kernel.orders, keep_terms=False)[0][:, j]

    blocks = map_parallel(run, chunked(len(source_index), SOURCE_CHUNK), kernel.threads)
    values = np.concatenate(blocks, axis=0)[:, None]
    return KernelTable(kernel.orders, kernel.params, grid, np.array([t]), source_index, values)


def full_kernel_matrix(kernel: SeriesKernel, t: float) -> np.ndarray:
    """q(t, x, y) for every pair of grid nodes, shape (nodes, nodes)."""

    table = kernel_rows(kernel, t)
    return table.values[:, 0].reshape(kernel.grid.size, kernel.grid.size)


def compose(first: np.ndarray, second: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """(Q_s Q_t)(x, y) = int q(s, x, z) q(t, z, y) dz on the grid."""

    weights = grid.trapezoid_weights().reshape(-1)
    return (first * weights[None, :]) @ second


def _pieces(target_steps: int, t0_steps: int, min_steps: int, depth: int) -> List[int]:
    count = max(1, -(-target_steps // t0_steps))
    if count > 2 ** depth:
        raise CompositionDepthError(
            f"{count} pieces of at most t0 exceed the composition depth {depth}", pieces=count, depth=depth
        )
    base, extra = divmod(target_steps, count)
    if base < min_steps:
        raise DomainError(f"pieces of {base} steps are below the certified minimum of {min_steps}")
    return [base + 1] * extra + [base] * (count - extra)


def _balanced_product(matrices: List[np.ndarray], grid: SpaceTimeGrid) -> np.ndarray:
    while len(matrices) > 1:
        paired = [compose(matrices[i], matrices[i + 1], grid) for i in range(0, len(matrices) - 1, 2)]
        if len(matrices) % 2:
            paired.append(matrices[-1])
        matrices = paired
    return matrices[0]


def extend_semigroup(kernel: SeriesKernel, target_time: float, composition_depth: int = 8) -> KernelTable:
    """q(target_time, ., .) for every node pair by balanced composition of certified slices."""

    dt = kernel.grid.time_step
    steps = int(round(target_time / dt))
    if steps < 1 or abs(steps * dt - target_time) > 1e-9 * max(1.0, target_time):
        raise DomainError(f"target time {target_time!r} is not on the time mesh of step {dt}")
    t0_steps = int(round(kernel.t0_estimate / dt))
    pieces = _pieces(steps, t0_steps, MIN_CERTIFIED_STEPS, composition_depth)
    cache: Dict[int, np.ndarray] = {}
    for piece in set(pieces):
        cache[piece] = full_kernel_matrix(kernel, piece * dt)
    matrix = _balanced_product([cache[p] for p in pieces], kernel.grid)
    logger.info("extended to t = %.4g from %d pieces", target_time, len(pieces))
    grid = kernel.grid
    index = [tuple(int(i) for i in idx) for idx in np.ndindex(*grid.shape)]
    values = matrix.reshape((grid.size, 1) + grid.shape)
    return KernelTable(
        kernel.orders, kernel.params, grid, np.array([target_time]), index, values,
        pieces=tuple(p * dt for p in pieces),
    )


@dataclass
class KernelResolvent:
    """int_0^inf e^{-lambda t} Q_t g dt on every grid node."""

    params: StableParams
    grid: SpaceTimeGrid
    lam: float
    tau: float
    values: np.ndarray
    g_sup: float

    def at(self, x) -> float:
        return float(self.values.reshape(-1)[np.ravel_multi_index(self.grid.node_index(x), self.grid.shape)])

    def truncation(self, x, horizon_factor: float = 40.0, nodes: int = 80) -> float:
        """||g|| int_0^inf e^{-lambda t} (mass of p(t, . - x) outside the box) dt."""

        times = np.linspace(0.0, horizon_factor / self.lam, nodes + 1)[1:]
        leak = np.array([self.grid.box_tail_mass(self.params, t, x) for t in times])
        step = times[1] - times[0]
        return float(self.g_sup * step * np.sum(np.exp(-self.lam * times) * leak))


def kernel_resolvent(kernel: SeriesKernel, lam: float, g, tau: Optional[float] = None) -> KernelResolvent:
    """
    Laplace transform in time of the series kernel applied to g.

    With A g = int_0^tau e^{-lambda t} Q_t g dt from the certified slices, the Markov property
    gives u = A g + e^{-lambda tau} Q_tau u, which is solved on the grid.
    """

    if lam <= 0.0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    grid = kernel.grid
    dt = grid.time_step
    steps = int(round((kernel.t0_estimate if tau is None else tau) / dt))
    if steps < MIN_CERTIFIED_STEPS or not kernel.certified[steps - 1]:
        raise DomainError(f"tau = {steps * dt} is outside the certified range (0, {kernel.t0_estimate}]")
    points = grid.points()
    weights = grid.trapezoid_weights().reshape(-1)
    g_nodes = np.asarray(g(points), dtype=float).reshape(-1)
    source_index = [tuple(int(i) for i in idx) for idx in np.ndindex(*grid.shape)]
    engine = _Recursion(kernel.params, kernel.drift, grid, slices=steps)

    def run(block: slice):
        rows = engine.series(source_index[block], kernel.orders, keep_terms=False)[0]
        flat = rows.reshape(rows.shape[0], steps, -1)
        return flat @ (weights * g_nodes), flat[:, -1]

    blocks = map_parallel(run, chunked(len(source_index), SOURCE_CHUNK), kernel.threads)
    semigroup = np.concatenate([b[0] for b in blocks])
    last = np.concatenate([b[1] for b in blocks])
    time_weights = simpson_weights(steps, dt) * np.exp(-lam * dt * np.arange(steps + 1))
    applied = time_weights[0] * g_nodes + semigroup @ time_weights[1:]
    system = np.eye(grid.size) - math.exp(-lam * steps * dt) * last * weights[None, :]
    values = np.linalg.solve(system, applied).reshape(grid.shape)
    logger.info("kernel resolvent at lambda=%.4g from %d certified slices", lam, steps)
    return KernelResolvent(kernel.params, grid, float(lam), steps * dt, values, float(np.max(np.abs(g_nodes))))


@dataclass
class ComparabilityReport:
    c_hat: float
    min_value: float
    upper: float
    lower: float
    slices: int

    def as_dict(self) -> Dict[str, float]:
        return {"c_hat": self.c_hat, "min_value": self.min_value, "upper": self.upper, "lower": self.lower,
                "slices": self.slices}


def _phi(params: StableParams, t: float, gaps: np.ndarray) -> np.ndarray:
    d, alpha = params.d, params.alpha
    with np.errstate(divide="ignore"):
        return np.minimum(t ** (-d / alpha), t * gaps ** (-d - alpha))


def comparability_check(kernel: SeriesKernel, params: Optional[StableParams] = None) -> ComparabilityReport:
    """c_hat = max over certified nodes of max(q / phi, phi / q)."""

    params = params or kernel.params
    grid = kernel.grid
    points = grid.points()
    upper = lower = 1.0
    minimum = math.inf
    for j in np.flatnonzero(kernel.certified):
        t = float(kernel.times[j])
        for s, index in enumerate(kernel.source_index):
            values = kernel.partial_sums[s, j].reshape(-1)
            low = int(np.argmin(values))
            if values[low] <= 0.0:
                raise BoundViolationError(
                    f"non-positive kernel value {values[low]:.3e} at t={t}, x={grid.node(index).tolist()}, "
                    f"y={points[low].tolist()}",
                    t=t,
                    x=grid.node(index).tolist(),
                    y=points[low].tolist(),
                )
            phi = _phi(params, t, np.linalg.norm(points - grid.node(index), axis=-1))
            ratio = values / phi
            upper = max(upper, float(np.max(ratio)))
            lower = max(lower, float(np.max(1.0 / ratio)))
            minimum = min(minimum, float(values[low]))
    return ComparabilityReport(
        c_hat=max(upper, lower), min_value=minimum, upper=upper, lower=lower, slices=int(kernel.certified.sum())
    )


def free_comparability(kernel: SeriesKernel) -> float:
    """The same probe measured on the free density directly."""

    grid = kernel.grid
    points = grid.points()
    radii = np.unique(np.concatenate([np.linalg.norm(points - grid.node(i), axis=-1) for i in kernel.source_index]))
    return comparability_constant(kernel.params, kernel.certified_times, radii)


@dataclass
class GeneratorReport:
    times: np.ndarray
    a_values: np.ndarray
    limit: float
    target: float
    drift_part: float
    limit_error: float
    inconclusive: bool

    def as_dict(self) -> Dict[str, object]:
        return {
            "times": self.times.tolist(),
            "a_values": self.a_values.tolist(),
            "limit": self.limit,
            "target": self.target,
            "drift_part": self.drift_part,
            "limit_error": self.limit_error,
            "inconclusive": self.inconclusive,
        }


def _generator_times(kernel: SeriesKernel) -> List[int]:
    t0_steps = int(round(kernel.t0_estimate / kernel.grid.time_step))
    base = MIN_CERTIFIED_STEPS
    if 4 * base > t0_steps:
        raise DomainError(f"t0 = {kernel.t0_estimate} is too short for a three-level extrapolation")
    return [4 * base, 2 * base, base]


def generator_check(kernel: SeriesKernel, field_: DriftField, f, g) -> GeneratorReport:
    """
    Compare (1/t) int (T_t f - f) g against int (Delta^{alpha/2} f + b . grad f) g.

    a_t is taken at t, 2t and 4t and extrapolated quadratically to t = 0.
    """

    params, grid = kernel.params, kernel.grid
    points = grid.points()
    weights = grid.trapezoid_weights().reshape(-1)
    f_nodes = np.asarray(f(points), dtype=float).reshape(-1)
    g_nodes = np.asarray(g(points), dtype=float).reshape(-1)
    support = np.flatnonzero(g_nodes != 0.0)
    if support.size == 0:
        raise DomainError("g vanishes on every grid node")
    source_index = [np.unravel_index(i, grid.shape) for i in support]
    source_index = [tuple(int(c) for c in idx) for idx in source_index]
    steps = _generator_times(kernel)
    times = np.array([s * grid.time_step for s in steps])
    a_values = []
    for t in times:
        rows = kernel_rows(kernel, float(t), source_index).values[:, 0].reshape(len(support), -1)
        semigroup = rows @ (weights * f_nodes)
        a_values.append(float(np.sum((semigroup - f_nodes[support]) * g_nodes[support] * weights[support]) / t))
    a = np.array(a_values)
    limit = (8.0 * a[2] - 6.0 * a[1] + a[0]) / 3.0
    differences = np.diff(a)
    inconclusive = bool(differences[0] * differences[1] < 0.0)
    if inconclusive:
        logger.warning("generator extrapolation is not monotone: %s", a.tolist())

    radius = getattr(f, "support_radius", None)
    laplacian = np.array(
        [fractional_laplacian(params, f, points[i], support_radius=radius) for i in support]
    )
    gradient = np.asarray(f.gradient(points[support]), dtype=float).reshape(len(support), params.d)
    drift = np.asarray(field_(points[support]), dtype=float).reshape(len(support), params.d)
    drift_part = float(np.sum(np.sum(drift * gradient, axis=-1) * g_nodes[support] * weights[support]))
    target = float(np.sum(laplacian * g_nodes[support] * weights[support])) + drift_part
    return GeneratorReport(
        times=times,
        a_values=a,
        limit=float(limit),
        target=target,
        drift_part=drift_part,
        limit_error=abs(float(limit) - target),
        inconclusive=inconclusive,
    )


@dataclass
class DuhamelReport:
    max_residual: float
    order: int
    slices: List[float]

    def as_dict(self) -> Dict[str, object]:
        return {"max_residual": self.max_residual, "order": self.order, "slices": self.slices}


def duhamel_residual(
    kernel: SeriesKernel,
    field_: DriftField,
    grid: Optional[SpaceTimeGrid] = None,
    order: Optional[int] = None,
    max_slices: int = 6,
    target_stride: int = 2,
) -> DuhamelReport:
    """
    max |q - p - int_0^t int q(s, x, z) b(z) . grad_z p(t - s, z, y) dz ds| / max q on a probe subset.

    The space integral is a direct sum over grid nodes, independent of the FFT path.
    """

    grid = grid or kernel.grid
    params = kernel.params
    order = kernel.orders if order is None else int(order)
    if not 0 <= order <= kernel.orders:
        raise DomainError(f"order must lie in [0, {kernel.orders}]")
    total = sum(term.values for term in kernel.terms[: order + 1])
    free = kernel.terms[0].values
    slices = np.flatnonzero(kernel.certified)
    if slices.size > max_slices:
        slices = slices[np.linspace(0, slices.size - 1, max_slices).round().astype(int)]
    if field_.is_zero:
        residual = np.max(np.abs(total[:, slices] - free[:, slices]))
        scale = np.max(np.abs(total[:, slices]))
        return DuhamelReport(float(residual / scale), order, kernel.times[slices].tolist())

    points = grid.points()
    targets = np.flatnonzero(grid.interior_mask(0.5).reshape(-1))[::target_stride]
    drift = np.asarray(field_(points), dtype=float).reshape(grid.size, params.d)
    dt = grid.time_step
    last = int(slices[-1]) + 1
    weights = duhamel_weights(last, dt)
    flat = total.reshape(total.shape[0], total.shape[1], -1)
    free_flat = free.reshape(flat.shape)
    sources = [grid.node(index) for index in kernel.source_index]
    gaps = (points[targets][:, None, :] - points[None, :, :]).reshape(-1, params.d)
    integral = np.zeros((len(sources), last, targets.size))
    for lag in range(1, last + 1):
        gradient = density_gradient(params, lag * dt, gaps).reshape(targets.size, grid.size, params.d)
        for s, x in enumerate(sources):
            # q(0, x, .) is the point mass at x
            direct = density_gradient(params, lag * dt, points[targets] - x)
            integral[s, lag - 1] -= weights[lag, 0] * (direct @ _drift_at(field_, x, params.d))
            for j in range(lag + 1, last + 1):
                flux = flat[s, j - lag - 1][:, None] * drift
                integral[s, j - 1] -= weights[j, j - lag] * grid.cell_volume * np.einsum("tzc,zc->t", gradient, flux)
    residual = flat[:, :last][:, :, targets] - free_flat[:, :last][:, :, targets] - integral
    scale = np.max(np.abs(total[:, slices]))
    return DuhamelReport(float(np.max(np.abs(residual[:, slices]))) / scale, order, kernel.times[slices].tolist())


def _drift_at(field_: DriftField, x: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(field_(x[None, :]), dtype=float).reshape(d)


@dataclass
class LongTimeConstants:
    c2: float
    c3: float
    times: np.ndarray
    log_ratio: np.ndarray

    def as_dict(self) -> Dict[str, object]:
        return {"c2": self.c2, "c3": self.c3, "times": self.times.tolist(), "log_ratio": self.log_ratio.tolist()}


def long_time_constants(kernel: SeriesKernel, extensions: Sequence[KernelTable] = ()) -> LongTimeConstants:
    """Fit C2, C3 with exp(-C3 t) p / C2 <= q <= C2 exp(C3 t) p on interior probe targets."""

    params, grid = kernel.params, kernel.grid
    mask = grid.interior_mask(0.5).reshape(-1)
    points = grid.points()[mask]
    rows: List[Tuple[float, np.ndarray, np.ndarray]] = []
    for j in np.flatnonzero(kernel.certified):
        for s, index in enumerate(kernel.source_index):
            rows.append((float(kernel.times[j]), kernel.partial_sums[s, j].reshape(-1)[mask], grid.node(index)))
    for table in extensions:
        for index in kernel.source_index:
            rows.append((float(table.times[0]), table.row(float(table.times[0]), grid.node(index)).reshape(-1)[mask],
                         grid.node(index)))
    by_time: Dict[float, float] = {}
    for t, values, x in rows:
        if np.any(values <= 0.0):
            raise BoundViolationError(f"non-positive kernel value on the interior at t={t}", t=t)
        free = density(params, t, points - x)
        by_time[t] = max(by_time.get(t, 0.0), float(np.max(np.abs(np.log(values / free)))))
    if len(by_time) < 2:
        raise FitError("need at least two time slices to fit the long-time constants")
    times = np.array(sorted(by_time))
    spreads = np.array([by_time[t] for t in times])
    slope = float(np.polyfit(times, spreads, 1)[0])
    c3 = max(slope, 0.0)
    c2 = float(math.exp(np.max(spreads - c3 * times)))
    return LongTimeConstants(c2=max(c2, 1.0), c3=c3, times=times, log_ratio=spreads)


def interior_relative_error(values: np.ndarray, reference: np.ndarray, mask: np.ndarray) -> float:
    """sup over masked nodes of |values - reference| / reference."""

    return float(np.max(np.abs(values[..., mask] - reference[..., mask]) / reference[..., mask]))


def translated_density(params: StableParams, grid: SpaceTimeGrid, t: float, source, shift) -> np.ndarray:
    """p(t, y - x - shift) on the grid, the constant-drift oracle."""

    x = np.asarray(source, dtype=float).reshape(params.d)
    c = np.asarray(shift, dtype=float).reshape(params.d)
    return density(params, t, grid.points() - x - c).reshape(grid.shape)
