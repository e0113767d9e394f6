"""
Validation suites: identities of the series kernel, agreement of independent resolvent
constructions, and the law of the reconstructed driving noise.

Every check produces a CheckRecord with a measured value, the tolerance it is held to
and a status: pass, fail, skip (does not apply) or inconclusive (measured but undecided).
A report passes only when every check passes; skipped and inconclusive checks are
listed separately and never fail a run. Hard numerical failures abort the suite and
name the failing check.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from bumps import bump, bump_family
from config import RunConfig
from errors import (
    BoundViolationError,
    CompositionDepthError,
    DomainError,
    InsufficientSampleError,
    NumericalError,
)
from heat_kernel import (
    MIN_CERTIFIED_STEPS,
    ROW_SUM_TOLERANCE,
    KernelTable,
    SeriesKernel,
    SpaceTimeGrid,
    comparability_check,
    compose,
    duhamel_residual,
    extend_semigroup,
    free_comparability,
    full_kernel_matrix,
    generator_check,
    kernel_resolvent,
    long_time_constants,
    series_sum,
)
from kato import DriftField
from parallel import map_parallel
from resolvent import (
    CONTRACTION_TARGET,
    ResolventImage,
    apply_resolvent,
    drift_apply,
    gradient_kato_constant,
    lambda0_estimate,
    neumann_resolvent,
    translated_resolvent,
)
from simulate import PathSet, empirical_resolvent, euler_paths, kernel_chain_paths, noise_increments

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 2
DETERMINISTIC_FLOOR = 2e-3
DUHAMEL_TOLERANCE = 1e-3
CK_TOLERANCE = 5e-3
GENERATOR_TOLERANCE = 1e-2
# c_hat may exceed the free constant by at most this factor
COMPARABILITY_FACTOR = 10.0
FREE_COMPARABILITY_TOLERANCE = 0.10
REFINEMENT_TOLERANCE = 0.05
DRIFT_GRADIENT_TOLERANCE = 1e-4
DIFFERENCE_STEP = 1e-3
LONG_TIME_MULTIPLES = (2, 4)
CONTRACTION_SLACK = 0.05
CF_POINTS = 20
MIN_NOISE_SAMPLES = 100


class _Skipped(Exception):
    """The check does not apply to this configuration."""


class _Inconclusive(Exception):
    """The check was measured but the measurement cannot decide it."""

    def __init__(self, reason: str, value: float, detail: Dict[str, Any]) -> None:
        super().__init__(reason)
        self.value = value
        self.detail = detail


@dataclass
class CheckRecord:
    name: str
    value: float
    tolerance: float
    passed: bool
    runtime: float
    skipped: bool = False
    detail: Dict[str, Any] = field(default_factory=dict)
    inconclusive: bool = False

    @property
    def status(self) -> str:
        if self.skipped:
            return "skip"
        if self.inconclusive:
            return "inconclusive"
        return "pass" if self.passed else "fail"

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "value": _finite_or_text(self.value),
            "tolerance": _finite_or_text(self.tolerance),
            "status": self.status,
            "passed": self.passed,
            "runtime": self.runtime,
            "detail": self.detail,
        }


def _finite_or_text(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass
class ValidationReport:
    suite: str
    checks: List[CheckRecord] = field(default_factory=list)
    constants: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def failures(self) -> List[CheckRecord]:
        return [c for c in self.checks if c.status == "fail"]

    @property
    def unresolved(self) -> List[CheckRecord]:
        """Skipped and inconclusive checks."""

        return [c for c in self.checks if c.status in ("skip", "inconclusive")]

    @property
    def verdict(self) -> str:
        if self.failures:
            return "fail"
        return "inconclusive" if self.unresolved else "pass"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def counts(self) -> Dict[str, int]:
        tally = {status: 0 for status in ("pass", "fail", "skip", "inconclusive")}
        for c in self.checks:
            tally[c.status] += 1
        return tally

    def check(self, name: str) -> CheckRecord:
        for record in self.checks:
            if record.name == name:
                return record
        raise KeyError(name)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "suite": self.suite,
            "verdict": self.verdict,
            "passed": self.passed,
            "counts": self.counts(),
            "checks": [c.as_dict() for c in self.checks],
            "constants": {k: _finite_or_text(v) for k, v in self.constants.items()},
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_plain)

    def render_table(self) -> str:
        width = max([len(c.name) for c in self.checks] + [5])
        lines = [f"suite: {self.suite}", f"{'check':<{width}}  {'value':>12}  {'tolerance':>12}  verdict  runtime"]
        for c in self.checks:
            status = "FAIL" if c.status == "fail" else c.status
            lines.append(f"{c.name:<{width}}  {c.value:>12.4e}  {c.tolerance:>12.4e}  {status:<7}  {c.runtime:.2f}s")
        for key, value in sorted(self.constants.items()):
            lines.append(f"{key} = {value}")
        if self.failures:
            lines.append(f"overall: FAIL ({len(self.failures)} checks)")
        elif self.unresolved:
            names = ", ".join(f"{c.name} ({c.status})" for c in self.unresolved)
            lines.append(f"overall: inconclusive ({names})")
        else:
            lines.append("overall: pass")
        return "\n".join(lines) + "\n"

    def save(self, directory: Path, stem: Optional[str] = None) -> Tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or f"report_{self.suite}"
        json_path = directory / f"{stem}.json"
        text_path = directory / f"{stem}.txt"
        json_path.write_text(self.to_json() + "\n", encoding="utf-8")
        text_path.write_text(self.render_table(), encoding="utf-8")
        return json_path, text_path


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


def _provenance(config: RunConfig) -> Dict[str, Any]:
    return {"config_hash": config.config_hash, "seed": config.seed}


def _measure(name: str, tolerance: float, compute: Callable[[], Tuple[float, Dict[str, Any]]],
             passes: Optional[Callable[[float, float], bool]] = None) -> CheckRecord:
    start = time.perf_counter()
    try:
        value, detail = compute()
    except _Skipped as reason:
        logger.info("check %s skipped: %s", name, reason)
        return CheckRecord(name, math.nan, tolerance, False, time.perf_counter() - start, skipped=True,
                           detail={"reason": str(reason)})
    except _Inconclusive as outcome:
        logger.warning("check %s inconclusive: %s", name, outcome)
        return CheckRecord(name, float(outcome.value), float(tolerance), False, time.perf_counter() - start,
                           detail={"reason": str(outcome), **outcome.detail}, inconclusive=True)
    except NumericalError as exc:
        raise type(exc)(f"check {name!r} failed: {exc}", check=name, **exc.context) from exc
    verdict = passes(value, tolerance) if passes else value <= tolerance
    elapsed = time.perf_counter() - start
    logger.info("check %s: %.4e (tolerance %.4e) %s", name, value, tolerance, "pass" if verdict else "FAIL")
    return CheckRecord(name, float(value), float(tolerance), bool(verdict), elapsed, detail=detail)


def build_kernel(field_: DriftField, config: RunConfig, grid: Optional[SpaceTimeGrid] = None) -> SeriesKernel:
    solver = config.solver
    return series_sum(
        field_,
        config.params(),
        grid or config.space_time_grid(),
        max_order=solver["max_order"],
        ratio_threshold=solver["ratio_threshold"],
        series_tol=solver["series_tol"],
        threads=config.threads,
    )


def _corrupt(kernel: SeriesKernel) -> SeriesKernel:
    values = kernel.partial_sums.copy()
    j = int(np.flatnonzero(kernel.certified)[-1])
    row = values[0, j].reshape(-1)
    row[row.size // 2] = -abs(row[row.size // 2]) - 1e-3
    logger.warning("fault injection: negative cell at t = %.4g", kernel.times[j])
    return replace(kernel, partial_sums=values)


def _normalization(kernel: SeriesKernel):
    deviation = np.abs(kernel.row_sums[:, kernel.certified] - 1.0)
    return float(np.max(deviation)), {"certified_slices": int(kernel.certified.sum())}


def _positivity(kernel: SeriesKernel):
    minimum = float(np.min(kernel.partial_sums[:, kernel.certified]))
    return minimum, {"min_value": minimum}


def _chapman_kolmogorov(kernel: SeriesKernel):
    grid = kernel.grid
    total = int(round(kernel.t0_estimate / grid.time_step))
    first = total // 2
    second = total - first
    if first < MIN_CERTIFIED_STEPS:
        raise _Skipped(f"t0 spans {total} steps; two certified pieces need {2 * MIN_CERTIFIED_STEPS}")
    matrix = full_kernel_matrix(kernel, second * grid.time_step)
    mask = grid.interior_mask(0.5).reshape(-1)
    worst = 0.0
    for s in range(len(kernel.source_index)):
        left = kernel.partial_sums[s, first - 1].reshape(1, -1)
        composed = compose(left, matrix, grid)[0]
        direct = kernel.partial_sums[s, total - 1].reshape(-1)
        worst = max(worst, float(np.max(np.abs(composed - direct)[mask]) / np.max(direct)))
    return worst, {"pieces": [first * grid.time_step, second * grid.time_step]}


def _duhamel(kernel: SeriesKernel, field_: DriftField):
    report = duhamel_residual(kernel, field_)
    return report.max_residual, report.as_dict()


def _comparability(kernel: SeriesKernel):
    try:
        report = comparability_check(kernel)
    except BoundViolationError as exc:
        return math.inf, {"violation": str(exc), **exc.context}
    return report.c_hat, report.as_dict()


def _free_agreement(kernel: SeriesKernel, free: float):
    c_hat, detail = _comparability(kernel)
    return abs(c_hat / free - 1.0), {"c_hat": c_hat, "free": free}


def _refinement(kernel: SeriesKernel, field_: DriftField, config: RunConfig):
    coarse, _ = _comparability(kernel)
    fine_kernel = build_kernel(field_, config, grid=kernel.grid.refined())
    fine, detail = _comparability(fine_kernel)
    if not (math.isfinite(coarse) and math.isfinite(fine)):
        return math.inf, {"coarse": coarse, "fine": fine}
    return abs(fine / coarse - 1.0), {"coarse": coarse, "fine": fine, "fine_spacing": fine_kernel.grid.spacing}


def _generator(kernel: SeriesKernel, field_: DriftField):
    centre = kernel.grid.probe_sources[0]
    f = bump(centre, width=1.0)
    g = bump(centre, width=1.0)
    try:
        report = generator_check(kernel, field_, f, g)
    except DomainError as exc:
        raise _Skipped(str(exc)) from exc
    scale = abs(report.target - report.drift_part) + abs(report.drift_part)
    detail = report.as_dict()
    detail["scale"] = scale
    if report.inconclusive:
        raise _Inconclusive("extrapolated limits are not monotone", report.limit_error / scale, detail)
    return report.limit_error / scale, detail


def long_time_extensions(
    kernel: SeriesKernel, composition_depth: int, multiples: Sequence[int] = LONG_TIME_MULTIPLES
) -> List[KernelTable]:
    """Composed tables at multiples of t0, up to the first one the depth cannot reach."""

    dt = kernel.grid.time_step
    t0_steps = int(round(kernel.t0_estimate / dt))
    tables: List[KernelTable] = []
    for multiple in multiples:
        target = multiple * t0_steps * dt
        try:
            tables.append(extend_semigroup(kernel, target, composition_depth))
        except (CompositionDepthError, DomainError) as exc:
            logger.warning("no extension to t = %.4g: %s", target, exc)
            break
    return tables


def run_identity_suite(
    field_: DriftField,
    config: RunConfig,
    inject_fault: bool = False,
    kernel: Optional[SeriesKernel] = None,
    refine: bool = True,
    extensions: Optional[Sequence[KernelTable]] = None,
) -> ValidationReport:
    """
    Normalization, positivity, Chapman-Kolmogorov, Duhamel, comparability and generator checks.

    Comparability is held to a multiple of the free constant, compared with the free constant
    itself for b = 0, and, with ``refine``, re-measured on the grid of half the spacing.
    """

    kernel = kernel or build_kernel(field_, config)
    if inject_fault:
        kernel = _corrupt(kernel)
    free = free_comparability(kernel)
    jobs: List[Tuple[str, float, Callable, Optional[Callable]]] = [
        ("normalization", ROW_SUM_TOLERANCE, lambda: _normalization(kernel), None),
        ("positivity", 0.0, lambda: _positivity(kernel), lambda v, tol: v > tol),
        ("chapman_kolmogorov", CK_TOLERANCE, lambda: _chapman_kolmogorov(kernel), None),
        ("duhamel_residual", DUHAMEL_TOLERANCE, lambda: _duhamel(kernel, field_), None),
        ("comparability", COMPARABILITY_FACTOR * free, lambda: _comparability(kernel), None),
        ("generator", GENERATOR_TOLERANCE, lambda: _generator(kernel, field_), None),
    ]
    if field_.is_zero:
        jobs.append(("free_comparability", FREE_COMPARABILITY_TOLERANCE, lambda: _free_agreement(kernel, free), None))
    if refine:
        jobs.append(("comparability_refinement", REFINEMENT_TOLERANCE,
                     lambda: _refinement(kernel, field_, config), None))
    records = map_parallel(lambda job: _measure(job[0], job[1], job[2], job[3]), jobs, config.threads)
    report = ValidationReport("identity", records, provenance=_provenance(config))
    report.constants.update({
        "t0": kernel.t0_estimate,
        "decay_ratio": kernel.observed_ratio,
        "orders": kernel.orders,
        "free_c_hat": free,
    })
    c_hat = report.check("comparability").value
    report.constants["c_hat"] = c_hat
    if not inject_fault:
        try:
            if extensions is None:
                extensions = long_time_extensions(kernel, config.solver["composition_depth"])
            fitted = long_time_constants(kernel, extensions)
            report.constants.update({"c2": fitted.c2, "c3": fitted.c3, "long_time_times": fitted.times.tolist()})
        except NumericalError as exc:
            logger.warning("long-time constants not fitted: %s", exc)
    logger.info("identity suite: %s %s", report.verdict, report.counts())
    return report


@dataclass
class MethodValue:
    """A resolvent value with its deterministic error bound and Monte Carlo standard error."""

    method: str
    value: float
    bound: float = 0.0
    std_error: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


def _mesh_multiple(value: float, step: float) -> float:
    return step * math.ceil(value / step - 1e-9)


def _resolvent_horizon(lam: float, sup_norm: float, base: float, step: float) -> float:
    """Shortest multiple of ``step`` (at least ``base``) with e^{-lambda T} |g| / lambda <= DETERMINISTIC_FLOOR / 2."""

    needed = math.log(max(2.0 * sup_norm / (lam * DETERMINISTIC_FLOOR), 1.0)) / lam
    return _mesh_multiple(max(base, needed, step), step)


def _pair_tolerance(a: MethodValue, b: MethodValue) -> float:
    return 3.0 * math.hypot(a.std_error, b.std_error) + a.bound + b.bound + DETERMINISTIC_FLOOR


def cross_validate(
    field_: DriftField,
    config: RunConfig,
    kernel: Optional[SeriesKernel] = None,
    test_functions: Optional[Sequence] = None,
    probes: Optional[Sequence] = None,
) -> ValidationReport:
    """
    Compare R_lambda g(x) from the kernel Laplace transform, the Neumann series, Euler
    Monte Carlo and kernel-chain Monte Carlo (plus the closed-form oracle for constant
    or zero drift) for every test function and probe.
    """

    params = config.params()
    resolvent_cfg = config.resolvent
    base_sim = config.sim_config(drift=field_)
    drift = base_sim.effective_field()
    lambda0 = lambda0_estimate(drift, params, config.lambda_grid(), threads=config.threads)
    lam = resolvent_cfg["lambda"] or 2.0 * lambda0
    if lam <= lambda0:
        raise DomainError(f"lambda = {lam} does not exceed lambda_0 = {lambda0}")
    functions = list(test_functions) if test_functions is not None else bump_family(
        params.d, resolvent_cfg["test_functions"])
    raw_points = probes if probes is not None else config.probes()
    points = [tuple(np.atleast_1d(np.asarray(p, dtype=float))) for p in raw_points]

    use_kernel = params.d == 1
    if use_kernel:
        kernel = kernel or build_kernel(drift, config)
        grid = kernel.grid
        points = [tuple(grid.node(grid.node_index(p)).tolist()) for p in points]
        chain_dt = _mesh_multiple(max(base_sim.dt, MIN_CERTIFIED_STEPS * grid.time_step), grid.time_step)
        if chain_dt > kernel.t0_estimate + 1e-12:
            raise DomainError(f"kernel-chain step {chain_dt} exceeds t0 = {kernel.t0_estimate}")
    else:
        logger.warning("kernel methods are one-dimensional; comparing Neumann series and Euler paths only")
        chain_dt = base_sim.dt

    sup = max(float(g.sup_norm) for g in functions)
    horizon = _resolvent_horizon(lam, sup, base_sim.horizon, chain_dt)
    report = ValidationReport("cross_validation", provenance=_provenance(config))
    report.constants.update({"lambda0": lambda0, "lambda": lam, "mc_horizon": horizon})

    euler_sets: Dict[tuple, PathSet] = {}
    chain_sets: Dict[tuple, PathSet] = {}
    for x in points:
        euler_sets[x] = euler_paths(config.sim_config(drift=field_, horizon=horizon, x0=x))
        if use_kernel:
            chain_config = config.sim_config(drift=drift, horizon=horizon, dt=chain_dt, x0=x)
            chain_sets[x] = kernel_chain_paths(kernel, chain_config)

    contraction = 0.0
    for gi, g in enumerate(functions):
        state = neumann_resolvent(drift, params, lam, g, np.array(points), max_terms=resolvent_cfg["max_terms"],
                                  lambda0=lambda0)
        contraction = max(contraction, state.contraction_factor)
        resolved = kernel_resolvent(kernel, lam, g) if use_kernel else None
        for pi, x in enumerate(points):
            values = [MethodValue("neumann", float(state.value[pi]), state.remainder_bound)]
            mc = empirical_resolvent(euler_sets[x], lam, g)
            values.append(MethodValue("euler_mc", mc.value, mc.truncation_bound, mc.std_error))
            if use_kernel:
                values.append(MethodValue("kernel_laplace", resolved.at(x),
                                          resolved.truncation(x) + ROW_SUM_TOLERANCE * float(g.sup_norm) / lam))
                chain = empirical_resolvent(chain_sets[x], lam, g)
                values.append(MethodValue("chain_mc", chain.value, chain.truncation_bound, chain.std_error))
            oracle = _oracle(drift, params, lam, g, x)
            if oracle is not None:
                values.append(MethodValue("oracle", oracle))
            for a, b in itertools.combinations(values, 2):
                name = f"g{gi}_x{pi}_{a.method}-{b.method}"
                tolerance = _pair_tolerance(a, b)
                detail = {"lambda": lam, "x": list(x), a.method: a.as_dict(), b.method: b.as_dict()}
                gap = abs(a.value - b.value)
                report.checks.append(_measure(name, tolerance, lambda gap=gap, detail=detail: (gap, detail)))

    if not drift.is_zero and resolvent_cfg["lambda"] == 0:
        report.checks.append(_measure(
            "contraction_factor", CONTRACTION_TARGET + CONTRACTION_SLACK,
            lambda: (contraction, {"lambda": lam, "lambda0": lambda0}),
        ))
    report.constants["contraction_factor"] = contraction
    if not drift.is_zero:
        g = functions[0]
        at = np.asarray(points[0], dtype=float) + 0.5 * float(getattr(g, "width", 1.0))
        report.checks.append(_measure(
            "drift_gradient", DRIFT_GRADIENT_TOLERANCE, lambda: drift_gradient_gap(drift, params, lam, g, at),
        ))
        kato_gradient = gradient_kato_constant(drift, params)
        report.constants["gradient_kato_constant"] = kato_gradient.constant
        report.constants["gradient_kato_ratios"] = kato_gradient.ratios
    for failure in report.failures:
        logger.warning("cross validation gap %s = %.4e exceeds %.4e: %s", failure.name, failure.value,
                       failure.tolerance, failure.detail)
    return report


def _difference_gradient(params, lam: float, g, x: np.ndarray, step: float = DIFFERENCE_STEP) -> np.ndarray:
    out = np.empty(params.d)
    for c in range(params.d):
        shift = np.zeros(params.d)
        shift[c] = step
        out[c] = (apply_resolvent(params, lam, g, x + shift) - apply_resolvent(params, lam, g, x - shift)) / (2 * step)
    return out


def drift_gradient_gap(drift: DriftField, params, lam: float, g, x) -> Tuple[float, Dict[str, Any]]:
    """
    Relative gap between B(R_lambda g)(x), with the gradient taken as R_lambda(grad g), and
    b(x) times central differences of R_lambda g.
    """

    point = np.asarray(x, dtype=float).reshape(params.d)
    value = drift_apply(drift, ResolventImage(params, lam, g), point)
    b = np.asarray(drift(point[None, :]), dtype=float).reshape(params.d)
    reference = float(b @ _difference_gradient(params, lam, g, point))
    gap = abs(value - reference)
    relative = gap / abs(reference) if reference != 0.0 else gap
    return relative, {"x": point.tolist(), "value": value, "reference": reference}


def _oracle(drift: DriftField, params, lam: float, g, x) -> Optional[float]:
    if drift.is_zero:
        return float(apply_resolvent(params, lam, g, np.asarray(x)))
    if drift.kind == "constant" and params.d == 1:
        c = float(np.asarray(drift(np.zeros((1, 1)))).reshape(-1)[0])
        return translated_resolvent(params, lam, c, g, float(x[0]))
    return None


def _empirical_cf(samples: np.ndarray, frequencies: np.ndarray) -> np.ndarray:
    """Complex empirical characteristic function at each row of ``frequencies``."""

    return np.mean(np.exp(1j * samples @ frequencies.T), axis=0)


def noise_uniqueness_probe(
    kernel: SeriesKernel,
    config: RunConfig,
    paths: Optional[PathSet] = None,
    scales: Optional[Sequence[float]] = None,
) -> ValidationReport:
    """
    Reconstruct Z from kernel-chain paths and test its increments against exp(-dt |xi|^alpha),
    with the bias estimated from increments over 2 dt, and test lag-1 independence.
    """

    params, grid = kernel.params, kernel.grid
    if paths is None:
        dt = _mesh_multiple(max(config.simulation["dt"], MIN_CERTIFIED_STEPS * grid.time_step), grid.time_step)
        horizon = _mesh_multiple(max(config.simulation["horizon"], 2.0 * dt), dt)
        paths = kernel_chain_paths(kernel, config.sim_config(drift=kernel.drift, horizon=horizon, dt=dt))
    increments = noise_increments(paths, kernel.drift)
    n, steps, d = increments.shape
    if n * steps < MIN_NOISE_SAMPLES or steps < 2:
        raise InsufficientSampleError(
            f"{n} paths x {steps} steps give too few noise increments (need {MIN_NOISE_SAMPLES} and 2 steps)",
            n_paths=n,
            steps=steps,
        )
    dt, alpha = paths.dt, params.alpha
    scales = np.linspace(0.05, 1.0, CF_POINTS) if scales is None else np.asarray(scales, dtype=float)
    direction = np.zeros(d)
    direction[0] = 1.0
    frequencies = np.outer(scales * dt ** (-1.0 / alpha), direction)
    norms = np.linalg.norm(frequencies, axis=-1)

    single = increments.reshape(-1, d)
    pairs = steps // 2
    double = increments[:, : 2 * pairs].reshape(n, pairs, 2, d).sum(axis=2).reshape(-1, d)
    deviation = _empirical_cf(single, frequencies).real - np.exp(-dt * norms ** alpha)
    coarse = _empirical_cf(double, frequencies).real - np.exp(-2.0 * dt * norms ** alpha)
    bias = np.abs(coarse - deviation)
    statistical = 3.0 / math.sqrt(single.shape[0])

    report = ValidationReport("noise_uniqueness", provenance=_provenance(config))
    report.checks.append(_measure(
        "cf_at_zero", 1e-12,
        lambda: (abs(_empirical_cf(single, np.zeros((1, d)))[0] - 1.0), {}),
    ))
    report.checks.append(_measure(
        "increment_cf", 1.0,
        lambda: (float(np.max(np.abs(deviation) / (statistical + bias))),
                 {"max_deviation": float(np.max(np.abs(deviation))), "statistical": statistical,
                  "bias": bias.tolist(), "samples": int(single.shape[0])}),
    ))

    lagged_pairs = n * (steps - 1)
    first = increments[:, :-1].reshape(-1, d)
    second = increments[:, 1:].reshape(-1, d)
    chosen = frequencies[:: max(1, len(frequencies) // 5)]

    def factorization():
        worst = 0.0
        for xi in chosen:
            for eta in chosen:
                joint = np.mean(np.exp(1j * (first @ xi + second @ eta)))
                product = np.mean(np.exp(1j * first @ xi)) * np.mean(np.exp(1j * second @ eta))
                worst = max(worst, abs(joint - product))
        return worst, {"pairs": lagged_pairs, "frequencies": len(chosen) ** 2}

    report.checks.append(_measure("lag1_independence", 3.0 / math.sqrt(lagged_pairs), factorization))
    report.constants.update({"dt": dt, "n_paths": n, "steps": steps})
    return report
