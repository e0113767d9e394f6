#!/usr/bin/env python3
"""
Command-line interface for KatoFlow experiments.

Every command reads one config file (plus flag overrides), writes its artifacts into a
run directory next to the resolved config and a manifest of content hashes, and prints
a one-line JSON status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from bumps import ConstantFunction, bump_family
from config import RunConfig, load_config, parse_points
from errors import EXIT_OK, InsufficientSampleError, KatoFlowError, ValidationFailure, exit_code_for
from gridio import write_csv, write_json, write_kernel, write_manifest, write_paths
from heat_kernel import interior_relative_error, translated_density
from kato import constant_field
from log_setup import configure_logging, level_from_verbosity
from paths import EXTENDED_KERNEL_NAME, KERNEL_NAME, PATHS_NAME, RESOLVED_CONFIG_NAME, ensure_run_dir
from resolvent import drift_resolvent_bound, lambda0_estimate, neumann_resolvent
from simulate import euler_paths, free_cdf, kernel_chain_paths, ks_against_kernel, levy_system_check
from stable_core import density, density_gradient
from validate import build_kernel, cross_validate, long_time_extensions, noise_uniqueness_probe, run_identity_suite

logger = logging.getLogger(__name__)

KERNEL_CSV_LIMIT = 200_000
LEVY_RHO = 1.0


def prepare_run(args, command: str) -> Tuple[RunConfig, Path]:
    config = load_config(Path(args.config) if args.config else None)
    config = config.with_overrides(seed=args.seed, threads=args.threads, out=args.out)
    run_dir = ensure_run_dir(command, config.config_hash, config.output_dir or None)
    config.save(run_dir / RESOLVED_CONFIG_NAME)
    logger.info("run directory %s", run_dir)
    return config, run_dir


def finish_run(config: RunConfig, run_dir: Path, command: str, payload: Dict[str, Any]) -> Dict[str, Any]:
    write_manifest(run_dir, {"command": command, "config_hash": config.config_hash, "seed": config.seed})
    status = {"command": command, "run_dir": str(run_dir), "config_hash": config.config_hash, **payload}
    print(json.dumps(status))
    return status


def command_density(args):
    config, run_dir = prepare_run(args, "density")
    params = config.params()
    points = np.array(parse_points(args.points, params.d))
    values = np.atleast_1d(density(params, args.t, points))
    gradients = np.asarray(density_gradient(params, args.t, points)).reshape(len(points), params.d)
    header = [f"x{i + 1}" for i in range(params.d)] + ["p", "grad_norm"]
    rows = [list(x) + [p, float(np.linalg.norm(g))] for x, p, g in zip(points.tolist(), values, gradients)]
    path = write_csv(run_dir / "density.csv", header, rows)
    return finish_run(config, run_dir, "density", {"t": args.t, "artifacts": [path.name]})


def _oracle_gap(kernel) -> Optional[float]:
    drift = kernel.drift
    if drift.kind != "constant":
        return None
    shift = np.asarray(drift(np.zeros((1, kernel.params.d)))).reshape(-1)
    grid = kernel.grid
    mask = grid.interior_mask(0.5)
    worst = 0.0
    for j in np.flatnonzero(kernel.certified):
        t = float(kernel.times[j])
        for s, index in enumerate(kernel.source_index):
            reference = translated_density(kernel.params, grid, t, grid.node(index), shift * t)
            worst = max(worst, interior_relative_error(kernel.partial_sums[s, j], reference, mask))
    return worst


def command_kernel(args):
    config, run_dir = prepare_run(args, "kernel")
    field_ = config.drift_field()
    kernel = build_kernel(field_, config)
    table = kernel.as_table()
    artifacts = [write_kernel(run_dir / KERNEL_NAME, table).name]
    if table.values.size <= KERNEL_CSV_LIMIT:
        points = kernel.grid.points()
        rows = []
        for s, index in enumerate(kernel.source_index):
            x = kernel.grid.node(index).tolist()
            for j, t in enumerate(kernel.times):
                flat = table.values[s, j].reshape(-1)
                rows.extend([t] + x + points[n].tolist() + [flat[n]] for n in range(flat.size))
        d = kernel.params.d
        header = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)] + ["q"]
        artifacts.append(write_csv(run_dir / "kernel.csv", header, rows).name)
    summary = kernel.summary()
    summary["grid"] = kernel.grid.describe()
    summary["drift"] = field_.describe()
    summary["oracle_gap"] = _oracle_gap(kernel)
    extensions = long_time_extensions(kernel, config.solver["composition_depth"])
    for extension in extensions:
        name = EXTENDED_KERNEL_NAME.format(steps=int(round(extension.times[0] / kernel.grid.time_step)))
        artifacts.append(write_kernel(run_dir / name, extension).name)
    summary["extended_times"] = [float(e.times[0]) for e in extensions]
    artifacts.append(write_json(run_dir / "kernel_summary.json", summary).name)
    report = run_identity_suite(field_, config, kernel=kernel, extensions=extensions)
    artifacts.extend(p.name for p in report.save(run_dir))
    status = finish_run(config, run_dir, "kernel", {
        "t0": kernel.t0_estimate, "oracle_gap": summary["oracle_gap"], "verdict": report.verdict,
        "artifacts": artifacts,
    })
    if report.failures:
        raise ValidationFailure(f"identity suite failed: {[c.name for c in report.failures]}")
    return status


def _test_functions(choice: str, d: int, count: int) -> List:
    if choice == "one":
        return [ConstantFunction(d, 1.0)]
    return bump_family(d, count)


def command_resolvent(args):
    config, run_dir = prepare_run(args, "resolvent")
    params = config.params()
    field_ = config.sim_config().effective_field()
    grid_lambdas = config.lambda_grid()
    artifacts = []
    lambda0 = lambda0_estimate(field_, params, grid_lambdas, threads=config.threads)
    lam = args.lam if args.lam is not None else (config.resolvent["lambda"] or 2.0 * lambda0)
    probes = np.array(config.probes())
    functions = _test_functions(args.g, params.d, config.resolvent["test_functions"])
    value_rows, trace_rows = [], []
    for gi, g in enumerate(functions):
        state = neumann_resolvent(field_, params, lam, g, probes, max_terms=config.resolvent["max_terms"],
                                  lambda0=lambda0)
        for pi, x in enumerate(probes.tolist()):
            value_rows.append([gi] + x + [state.value[pi], state.remainder_bound, state.ratio])
        trace_rows.extend([gi] + row for row in state.trace_rows())
    d = params.d
    header = ["g"] + [f"x{i + 1}" for i in range(d)] + ["value", "remainder_bound", "ratio"]
    artifacts.append(write_csv(run_dir / "resolvent.csv", header, value_rows).name)
    trace_header = ["g", "k", "term_sup_norm"] + [f"partial_{i}" for i in range(len(probes))]
    artifacts.append(write_csv(run_dir / "neumann_trace.csv", trace_header, trace_rows).name)
    if args.scan_constants:
        scan = []
        for c in (float(v) for v in args.scan_constants.split(",")):
            field_c = constant_field([c] + [0.0] * (d - 1))
            scan.append([c, lambda0_estimate(field_c, params, grid_lambdas, threads=config.threads)])
        artifacts.append(write_csv(run_dir / "lambda0_scan.csv", ["c", "lambda0"], scan).name)
    bound = drift_resolvent_bound(field_, params, lam, probes, threads=config.threads)
    return finish_run(config, run_dir, "resolvent", {
        "lambda": lam, "lambda0": lambda0, "drift_resolvent_bound": bound, "artifacts": artifacts,
    })


def command_simulate(args):
    config, run_dir = prepare_run(args, "simulate")
    params = config.params()
    sim = config.sim_config()
    drift = sim.effective_field()
    if args.method == "chain":
        paths = kernel_chain_paths(build_kernel(drift, config), sim)
    else:
        paths = euler_paths(sim)
    artifacts = [write_paths(run_dir / PATHS_NAME, paths).name]
    summary = paths.summary()
    if params.d == 1 and drift.kind in ("zero", "constant"):
        shift = sim.x0[0] + float(np.asarray(drift(np.zeros((1, 1)))).reshape(-1)[0]) * paths.horizon
        summary["ks"] = ks_against_kernel(paths.final()[:, 0], free_cdf(params, paths.horizon, shift))
    try:
        summary["levy"] = levy_system_check(paths, params, max(LEVY_RHO, sim.jump_threshold)).as_dict()
    except InsufficientSampleError as exc:
        logger.warning("Levy system check skipped: %s", exc)
        summary["levy"] = None
    artifacts.append(write_json(run_dir / "simulation_summary.json", summary).name)
    final = paths.final()
    header = [f"x{i + 1}" for i in range(params.d)]
    artifacts.append(write_csv(run_dir / "final_states.csv", header, final.tolist()).name)
    return finish_run(config, run_dir, "simulate", {
        "method": paths.method, "n_paths": len(paths), "n_failed": paths.n_failed, "artifacts": artifacts,
    })


def command_validate(args):
    config, run_dir = prepare_run(args, "validate")
    field_ = config.drift_field()
    drift = config.sim_config().effective_field()
    suites = ("identity", "cross", "noise") if args.suite == "all" else (args.suite,)
    reports = []
    kernel = None
    if config.d == 1 and set(suites) & {"identity", "noise"}:
        kernel = build_kernel(drift, config)
    if "identity" in suites:
        reports.append(run_identity_suite(drift, config, inject_fault=args.inject_fault, kernel=kernel))
    if "cross" in suites:
        reports.append(cross_validate(field_, config, kernel=kernel))
    if "noise" in suites:
        if kernel is None:
            logger.warning("noise probe needs the one-dimensional kernel chain; skipped")
        else:
            reports.append(noise_uniqueness_probe(kernel, config))
    artifacts = []
    for report in reports:
        artifacts.extend(p.name for p in report.save(run_dir))
    failed = [r.suite for r in reports if r.failures]
    status = finish_run(config, run_dir, "validate", {
        "suites": [r.suite for r in reports], "failed": failed,
        "inconclusive": [r.suite for r in reports if r.verdict == "inconclusive"], "artifacts": artifacts,
    })
    if failed:
        raise ValidationFailure(f"validation failed in {', '.join(failed)}")
    return status


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to a key = value config file.")
    common.add_argument("--out", help="Run directory (default runs/<command>-<hash8>).")
    common.add_argument("--threads", type=int, help="Worker threads.")
    common.add_argument("--seed", type=int, help="Seed for all randomness.")
    common.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable).")
    return common


def build_parser():
    parser = argparse.ArgumentParser(
        prog="katoflow", description="Heat kernels, resolvents and paths of stable processes with Kato drift."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()

    density_parser = subparsers.add_parser("density", parents=[common], help="Tabulate p(t, x) and |grad p|.")
    density_parser.add_argument("--t", type=float, default=1.0, help="Time (must be positive).")
    density_parser.add_argument("--points", default="0", help="Points separated by ';'.")
    density_parser.set_defaults(func=command_density)

    kernel_parser = subparsers.add_parser("kernel", parents=[common], help="Build the series kernel and check it.")
    kernel_parser.set_defaults(func=command_kernel)

    resolvent_parser = subparsers.add_parser("resolvent", parents=[common], help="Neumann-series resolvent.")
    resolvent_parser.add_argument("--lambda", dest="lam", type=float, help="Override the resolvent parameter.")
    resolvent_parser.add_argument("--g", choices=["bumps", "one"], default="bumps", help="Test functions.")
    resolvent_parser.add_argument("--scan-constants", help="Comma-separated constants c for a lambda_0 table.")
    resolvent_parser.set_defaults(func=command_resolvent)

    simulate_parser = subparsers.add_parser("simulate", parents=[common], help="Simulate paths.")
    simulate_parser.add_argument("--method", choices=["euler", "chain"], default="euler", help="Path scheme.")
    simulate_parser.set_defaults(func=command_simulate)

    validate_parser = subparsers.add_parser("validate", parents=[common], help="Run validation suites.")
    validate_parser.add_argument("--suite", choices=["identity", "cross", "noise", "all"], default="all")
    validate_parser.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    validate_parser.set_defaults(func=command_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(level_from_verbosity(args.verbose))
    try:
        args.func(args)
    except KatoFlowError as exc:
        print(f"[katoflow:error] {exc}", file=sys.stderr)
        raise SystemExit(exit_code_for(exc)) from exc
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
