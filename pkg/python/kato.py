"""
Drift fields b: R^d -> R^d and their Kato-class modulus

    M(r) = sup_x int_{B(x, r)} |b(y)| |x - y|^{-(d + 1 - alpha)} dy.

The radial factor is removed exactly: in polar shells about x the integral is
int_0^r rho^{alpha - 2} S(rho) d rho with S the spherical integral of |b|, and the
substitution u = rho^{alpha - 1} leaves a bounded integrand for bounded fields.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from errors import AccuracyError, ConfigError, DomainError, FitError
from parallel import map_parallel
from stable_core import StableParams, sphere_rule

logger = logging.getLogger(__name__)

FIELD_KINDS = ("zero", "constant", "sinusoidal", "gaussian_bump", "power_singularity", "user_table", "sum")
DECAY_VERDICT_FRACTION = 0.05
REFINEMENT_PASSES = 3


def _points(d: int, x) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if d == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        return arr[..., None], True
    if arr.shape[-1] != d:
        raise DomainError(f"points must have a trailing axis of length {d}, got shape {arr.shape}")
    return arr, False


@dataclass(frozen=True)
class DriftField:
    """A vector field with the metadata the Kato and simulation code relies on."""

    d: int
    kind: str
    function: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    sup_bound: Optional[float] = None
    support_radius: Optional[float] = None
    singularity_exponent: Optional[float] = None
    parameters: Dict[str, object] = field(default_factory=dict, compare=False)
    symmetry_points: Tuple[Tuple[float, ...], ...] = ()
    table: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False, compare=False)

    def __call__(self, x) -> np.ndarray:
        pts, flat = _points(self.d, x)
        values = np.asarray(self.function(pts), dtype=float).reshape(pts.shape)
        return values[..., 0] if flat else values

    def magnitude(self, x) -> np.ndarray:
        pts, _ = _points(self.d, x)
        return np.linalg.norm(np.asarray(self.function(pts), dtype=float).reshape(pts.shape), axis=-1)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def check_admissible(self, params: StableParams) -> None:
        if params.d != self.d:
            raise DomainError(f"field is {self.d}-dimensional but the process is {params.d}-dimensional")
        if self.kind == "power_singularity" and not self.singularity_exponent < params.alpha - 1.0:
            raise DomainError(
                f"|x|^-gamma is Kato-admissible only for gamma < alpha - 1 = {params.alpha - 1.0:.4g}, "
                f"got gamma = {self.singularity_exponent}"
            )

    def scaled(self, factor: float) -> "DriftField":
        base = self.function
        factor = float(factor)
        if factor == 0.0:
            return zero_field(self.d)
        return replace(
            self,
            function=lambda pts: factor * base(pts),
            sup_bound=None if self.sup_bound is None else abs(factor) * self.sup_bound,
            parameters={**self.parameters, "scale": factor * float(self.parameters.get("scale", 1.0))},
            table=None if self.table is None else (self.table[0], factor * self.table[1]),
        )

    def __add__(self, other: "DriftField") -> "DriftField":
        if other.d != self.d:
            raise DomainError("cannot add fields of different dimensions")
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        first, second = self.function, other.function
        bound = None
        if self.sup_bound is not None and other.sup_bound is not None:
            bound = self.sup_bound + other.sup_bound
        exponents = [e for e in (self.singularity_exponent, other.singularity_exponent) if e is not None]
        return DriftField(
            d=self.d,
            kind="sum",
            function=lambda pts: first(pts) + second(pts),
            sup_bound=bound,
            singularity_exponent=max(exponents) if exponents else None,
            parameters={"parts": [self.describe(), other.describe()]},
            symmetry_points=tuple(dict.fromkeys(self.symmetry_points + other.symmetry_points)),
        )

    def regularized(self, radius: float) -> "DriftField":
        """Cap |b| at its value on the sphere of the given radius about a singular core."""

        if self.kind != "power_singularity":
            return self
        if radius <= 0.0:
            raise DomainError(f"regularization radius must be positive, got {radius!r}")
        amplitude = float(self.parameters["amplitude"])
        cap = abs(amplitude) * radius ** (-self.singularity_exponent)
        base = self.function

        def capped(pts: np.ndarray) -> np.ndarray:
            values = np.asarray(base(pts), dtype=float).reshape(pts.shape)
            norms = np.linalg.norm(values, axis=-1, keepdims=True)
            norms = np.where(np.isfinite(norms), norms, np.inf)
            factor = np.where(norms > cap, cap / norms, 1.0)
            values = np.where(np.isfinite(values), values, 0.0)
            return values * factor

        return replace(
            self,
            function=capped,
            sup_bound=cap,
            parameters={**self.parameters, "regularization_radius": radius, "cap": cap},
        )

    def describe(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "d": self.d,
            "sup_bound": self.sup_bound,
            "support_radius": self.support_radius,
            "singularity_exponent": self.singularity_exponent,
            **{key: value for key, value in self.parameters.items() if key != "parts"},
            **({"parts": self.parameters["parts"]} if "parts" in self.parameters else {}),
        }


def zero_field(d: int = 1) -> DriftField:
    return DriftField(d=d, kind="zero", function=lambda pts: np.zeros_like(pts), sup_bound=0.0,
                      symmetry_points=(tuple([0.0] * d),))


def constant_field(value, d: Optional[int] = None) -> DriftField:
    vector = np.atleast_1d(np.asarray(value, dtype=float))
    if d is not None and vector.size == 1 and d > 1:
        vector = np.concatenate([vector, np.zeros(d - 1)])
    dim = vector.size
    if not np.any(vector):
        return zero_field(dim)
    return DriftField(
        d=dim,
        kind="constant",
        function=lambda pts: np.broadcast_to(vector, pts.shape).copy(),
        sup_bound=float(np.linalg.norm(vector)),
        parameters={"value": vector.tolist()},
        symmetry_points=(tuple([0.0] * dim),),
    )


def sinusoidal_field(amplitude: float = 0.5, frequency: float = 1.0, d: int = 1) -> DriftField:
    """b_i(x) = amplitude * sin(frequency * x_i)."""

    if amplitude == 0.0:
        return zero_field(d)
    period = 2.0 * math.pi / frequency
    probes = tuple(tuple([float(s)] + [0.0] * (d - 1)) for s in np.linspace(0.0, period, 9)[:-1])
    return DriftField(
        d=d,
        kind="sinusoidal",
        function=lambda pts: amplitude * np.sin(frequency * pts),
        sup_bound=abs(amplitude) * math.sqrt(d),
        parameters={"amplitude": amplitude, "frequency": frequency},
        symmetry_points=probes,
    )


def gaussian_bump_field(
    amplitude: float = 1.0, width: float = 1.0, center: Optional[Sequence[float]] = None, d: int = 1
) -> DriftField:
    """b(x) = amplitude * exp(-|x - c|^2 / (2 width^2)) e_1."""

    c = np.zeros(d) if center is None else np.asarray(center, dtype=float).reshape(d)
    direction = np.zeros(d)
    direction[0] = 1.0

    def function(pts: np.ndarray) -> np.ndarray:
        weight = amplitude * np.exp(-np.sum((pts - c) ** 2, axis=-1) / (2.0 * width ** 2))
        return weight[..., None] * direction

    return DriftField(
        d=d,
        kind="gaussian_bump",
        function=function,
        sup_bound=abs(amplitude),
        parameters={"amplitude": amplitude, "width": width, "center": c.tolist()},
        symmetry_points=(tuple(c.tolist()),),
    )


def power_singularity_field(amplitude: float = 1.0, gamma: float = 0.25, d: int = 1) -> DriftField:
    """b(x) = amplitude |x|^{-gamma} x / |x|, singular at the origin."""

    if gamma < 0.0:
        raise DomainError(f"singularity exponent must be non-negative, got {gamma!r}")

    def function(pts: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(pts, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            return amplitude * norms ** (-gamma - 1.0) * pts

    return DriftField(
        d=d,
        kind="power_singularity",
        function=function,
        singularity_exponent=float(gamma),
        parameters={"amplitude": amplitude, "gamma": gamma},
        symmetry_points=(tuple([0.0] * d),),
    )


def user_table_field(grid: Sequence[float], values: Sequence[float]) -> DriftField:
    """Piecewise-constant one-dimensional field: values[i] on [grid[i], grid[i + 1]), zero outside."""

    nodes = np.asarray(grid, dtype=float)
    levels = np.asarray(values, dtype=float).reshape(-1)
    if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0.0):
        raise DomainError("table grid must be strictly increasing with at least two points")
    if levels.size not in (nodes.size, nodes.size - 1):
        raise DomainError("table needs one value per cell (the last grid row may repeat)")
    levels = levels[: nodes.size - 1]

    def function(pts: np.ndarray) -> np.ndarray:
        x = pts[..., 0]
        index = np.searchsorted(nodes, x, side="right") - 1
        inside = (index >= 0) & (index < levels.size)
        out = np.zeros(x.shape)
        out[inside] = levels[index[inside]]
        return out[..., None]

    midpoints = 0.5 * (nodes[1:] + nodes[:-1])
    return DriftField(
        d=1,
        kind="user_table",
        function=function,
        sup_bound=float(np.max(np.abs(levels))),
        support_radius=float(np.max(np.abs(nodes))),
        parameters={"cells": int(levels.size)},
        symmetry_points=tuple((float(m),) for m in midpoints),
        table=(nodes, levels),
    )


def load_table_field(path: Path) -> DriftField:
    """Read a CSV of (grid point, value) rows into a user_table field."""

    try:
        data = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read drift table {path}: {exc}", section="drift", key="table") from exc
    if data.shape[1] != 2:
        raise ConfigError("drift table rows must be 'grid point, value'", section="drift", key="table")
    return user_table_field(data[:, 0], data[:, 1])


def build_field(kind: str, d: int, options: Dict[str, object]) -> DriftField:
    """Construct a field from a config declaration."""

    if kind == "zero":
        return zero_field(d)
    if kind == "constant":
        return constant_field(options.get("value", 0.0), d=d)
    if kind == "sinusoidal":
        return sinusoidal_field(float(options.get("amplitude", 0.5)), float(options.get("frequency", 1.0)), d=d)
    if kind == "gaussian_bump":
        return gaussian_bump_field(
            float(options.get("amplitude", 1.0)), float(options.get("width", 1.0)), options.get("center"), d=d
        )
    if kind == "power_singularity":
        return power_singularity_field(float(options.get("amplitude", 1.0)), float(options.get("gamma", 0.25)), d=d)
    if kind == "user_table":
        if d != 1:
            raise ConfigError("user_table fields are one-dimensional", section="drift", key="kind")
        if "table" not in options:
            raise ConfigError("user_table needs a 'table' CSV path", section="drift", key="table")
        return load_table_field(Path(str(options["table"])))
    raise ConfigError(f"unknown drift kind {kind!r}; expected one of {', '.join(FIELD_KINDS[:-1])}",
                      section="drift", key="kind")


@dataclass(frozen=True)
class ModulusEstimate:
    """Probe maximum of the Kato integral; a lower bound on the supremum over R^d."""

    value: float
    argmax: Tuple[float, ...]
    probe_max: bool = True

    def __float__(self) -> float:
        return self.value


@dataclass
class KatoModulusCurve:
    radii: np.ndarray
    modulus: np.ndarray
    decay_fit: Optional[float]
    decaying: bool
    argmax: List[Tuple[float, ...]] = field(default_factory=list)

    def as_dict(self) -> Dict[str, object]:
        return {
            "radii": self.radii.tolist(),
            "modulus": self.modulus.tolist(),
            "decay_fit": self.decay_fit,
            "decaying": self.decaying,
        }


def _table_shell_integral(field_: DriftField, params: StableParams, x: float, r: float) -> float:
    nodes, levels = field_.table
    power = params.alpha - 1.0
    lo = np.clip(nodes[:-1], x - r, x + r) - x
    hi = np.clip(nodes[1:], x - r, x + r) - x

    def antiderivative(s: np.ndarray) -> np.ndarray:
        return np.sign(s) * np.abs(s) ** power / power

    return float(np.sum(np.abs(levels) * (antiderivative(hi) - antiderivative(lo))))


def _singular_breaks(field_: DriftField, point: np.ndarray, r: float, power: float) -> Optional[List[float]]:
    """Shell coordinates u = rho^{alpha - 1} at which a shell about point crosses a singular core."""

    if field_.singularity_exponent is None or not field_.symmetry_points:
        return None
    cores = np.asarray(field_.symmetry_points, dtype=float).reshape(-1, field_.d)
    distances = np.linalg.norm(cores - point, axis=-1)
    inside = sorted({float(rho) ** power for rho in distances if 0.0 < rho < r})
    return inside or None


def local_kato_integral(field_: DriftField, params: StableParams, x, r: float) -> float:
    """int_{B(x, r)} |b(y)| |x - y|^{-(d + 1 - alpha)} dy for one centre x."""

    if r <= 0.0:
        raise DomainError(f"radius must be positive, got {r!r}")
    if field_.is_zero:
        return 0.0
    point = np.asarray(x, dtype=float).reshape(params.d)
    if field_.table is not None:
        return _table_shell_integral(field_, params, float(point[0]), r)
    directions, weights = sphere_rule(params.d)
    power = params.alpha - 1.0

    def shell(u: float) -> float:
        rho = u ** (1.0 / power)
        return float(field_.magnitude(point + rho * directions) @ weights)

    value, error = integrate.quad(
        shell,
        0.0,
        r ** power,
        points=_singular_breaks(field_, point, r, power),
        limit=400,
        epsabs=1e-13,
        epsrel=1e-10,
    )
    if not math.isfinite(value) or error > 1e-6 * max(1.0, abs(value)):
        raise AccuracyError(
            f"Kato shell quadrature did not converge at x={point.tolist()}, r={r}",
            point=point.tolist(),
            radius=r,
            error=error,
        )
    return value / power


def default_probe(field_: DriftField) -> np.ndarray:
    if field_.symmetry_points:
        return np.asarray(field_.symmetry_points, dtype=float)
    return np.zeros((1, field_.d))


def _probe_spacing(probe: np.ndarray, r: float) -> float:
    if probe.shape[0] < 2:
        return r / 2.0
    gaps = np.linalg.norm(probe[1:] - probe[:-1], axis=-1)
    gaps = gaps[gaps > 0.0]
    return float(np.min(gaps)) / 2.0 if gaps.size else r / 2.0


def kato_modulus(
    field_: DriftField,
    params: StableParams,
    r: float,
    probe: Optional[np.ndarray] = None,
    threads: int = 1,
) -> ModulusEstimate:
    """Probe maximum of the Kato integral, refined around the best probe point."""

    if r <= 0.0:
        raise DomainError(f"radius must be positive, got {r!r}")
    field_.check_admissible(params)
    points = default_probe(field_) if probe is None else np.asarray(probe, dtype=float).reshape(-1, params.d)
    if points.shape[0] == 0:
        raise DomainError("probe set is empty")
    values = map_parallel(lambda x: local_kato_integral(field_, params, x, r), list(points), threads)
    best = int(np.argmax(values))
    best_value, best_point = float(values[best]), points[best]
    step = _probe_spacing(points, r)
    for _ in range(REFINEMENT_PASSES):
        step /= 2.0
        for axis in range(params.d):
            for sign in (-1.0, 1.0):
                candidate = best_point.copy()
                candidate[axis] += sign * step
                value = local_kato_integral(field_, params, candidate, r)
                if value > best_value:
                    best_value, best_point = value, candidate
    return ModulusEstimate(value=best_value, argmax=tuple(float(c) for c in best_point))


def kato_check(
    field_: DriftField,
    params: StableParams,
    radii: Sequence[float],
    probe: Optional[np.ndarray] = None,
    threads: int = 1,
) -> KatoModulusCurve:
    """Modulus curve over decreasing radii, its log-log decay exponent and the decay verdict."""

    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    if radii.size < 3:
        raise FitError(f"a decay fit needs at least 3 radii, got {radii.size}")
    if radii[-1] <= 0.0:
        raise DomainError("radii must be positive")
    estimates = [kato_modulus(field_, params, float(r), probe, threads) for r in radii]
    modulus = np.array([e.value for e in estimates])
    # true modulus is monotone; lift each lower bound by the smaller-radius ones
    modulus = np.maximum.accumulate(modulus[::-1])[::-1]
    if np.all(modulus == 0.0):
        decay_fit = None
    else:
        positive = modulus > 0.0
        if np.count_nonzero(positive) < 3:
            raise FitError("fewer than 3 positive modulus values to fit")
        slope, _ = np.polyfit(np.log(radii[positive]), np.log(modulus[positive]), 1)
        decay_fit = float(slope)
    decaying = bool(modulus[-1] <= DECAY_VERDICT_FRACTION * modulus[0])
    logger.info("Kato modulus for %s: fit %s, decaying=%s", field_.kind, decay_fit, decaying)
    return KatoModulusCurve(
        radii=radii, modulus=modulus, decay_fit=decay_fit, decaying=decaying, argmax=[e.argmax for e in estimates]
    )
