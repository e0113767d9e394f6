"""
Run configuration: a sectioned ``key = value`` file, documented defaults and flag overrides.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from errors import ConfigError, KatoFlowError

logger = logging.getLogger(__name__)

# Every recognised key with its default. Omitted keys take these values.
DEFAULTS: Dict[str, Dict[str, str]] = {
    "model": {
        "d": "1",
        "alpha": "1.5",
    },
    "drift": {
        "kind": "zero",
        "value": "0.5",
        "amplitude": "0.5",
        "frequency": "1.0",
        "width": "1.0",
        "center": "0",
        "gamma": "0.25",
        "table": "",
    },
    "grid": {
        "half_width": "10.0",
        "spacing": "0.05",
        "horizon": "1.0",
        "steps": "100",
        "probe_sources": "0",
        "tail_bound": "0.02",
    },
    "solver": {
        "max_order": "12",
        "ratio_threshold": "0.5",
        "series_tol": "1e-6",
        "composition_depth": "8",
        "threads": "1",
    },
    "resolvent": {
        # 0 means twice the contraction threshold
        "lambda": "0",
        "lambda_min": "0.015625",
        "lambda_max": "4096",
        "lambda_per_octave": "8",
        "max_terms": "40",
        "probes": "0",
        "test_functions": "3",
    },
    "simulation": {
        "dt": "0.01",
        "horizon": "1.0",
        "n_paths": "10000",
        "seed": "12345",
        "x0": "0",
        "jump_threshold": "1.0",
        "regularization_radius": "0.01",
    },
    "output": {
        "dir": "",
    },
}

# Left out of config_hash: where a run is written and how many threads compute it.
UNHASHED_KEYS: Tuple[Tuple[str, str], ...] = (("output", "dir"), ("solver", "threads"))


def _coerce_float(value: str, section: str, key: str, line: Optional[int]) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", section, key, line) from None
    if not math.isfinite(number):
        raise ConfigError(f"expected a finite number, got {value!r}", section, key, line)
    return number


def _coerce_int(value: str, section: str, key: str, line: Optional[int]) -> int:
    try:
        return int(str(value).strip())
    except (TypeError, ValueError):
        raise ConfigError(f"expected an integer, got {value!r}", section, key, line) from None


def _coerce_vector(value: str, section: str, key: str, line: Optional[int]) -> Tuple[float, ...]:
    parts = [p for p in str(value).replace(",", " ").split() if p]
    if not parts:
        raise ConfigError("expected at least one number", section, key, line)
    return tuple(_coerce_float(p, section, key, line) for p in parts)


def _coerce_points(value: str, section: str, key: str, line: Optional[int]) -> List[Tuple[float, ...]]:
    """Points separated by ';', coordinates by ',' or spaces."""

    chunks = [c for c in str(value).split(";") if c.strip()]
    if not chunks:
        raise ConfigError("expected at least one point", section, key, line)
    return [_coerce_vector(c, section, key, line) for c in chunks]


def _line_numbers(text: str) -> Dict[Tuple[str, str], int]:
    lines: Dict[Tuple[str, str], int] = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            lines[(section, "")] = number
            continue
        for separator in ("=", ":"):
            if separator in stripped:
                lines[(section or "", stripped.split(separator, 1)[0].strip().lower())] = number
                break
    return lines


@dataclass
class RunConfig:
    """Validated configuration; ``raw`` keeps the resolved strings for echoing."""

    raw: Dict[str, Dict[str, str]]
    d: int
    alpha: float
    drift_kind: str
    drift_options: Dict[str, Any]
    grid: Dict[str, Any]
    solver: Dict[str, Any]
    resolvent: Dict[str, Any]
    simulation: Dict[str, Any]
    output_dir: str
    source: Optional[Path] = None
    lines: Dict[Tuple[str, str], int] = field(default_factory=dict, repr=False)

    @property
    def threads(self) -> int:
        return int(self.solver["threads"])

    @property
    def seed(self) -> int:
        return int(self.simulation["seed"])

    def params(self):
        from stable_core import StableParams

        return self._wrap("model", "alpha", lambda: StableParams(self.d, self.alpha))

    def drift_field(self):
        from kato import build_field

        return self._wrap("drift", "kind", lambda: build_field(self.drift_kind, self.d, self.drift_options))

    def space_time_grid(self):
        from heat_kernel import SpaceTimeGrid

        g = self.grid
        return self._wrap(
            "grid",
            "spacing",
            lambda: SpaceTimeGrid(
                d=self.d,
                half_width=g["half_width"],
                spacing=g["spacing"],
                horizon=g["horizon"],
                steps=g["steps"],
                tail_bound=g["tail_bound"],
                probe_sources=tuple(_pad(p, self.d) for p in g["probe_sources"]),
            ),
        )

    def sim_config(self, drift=None, n_paths: Optional[int] = None, horizon: Optional[float] = None,
                   dt: Optional[float] = None, x0=None):
        from simulate import SimConfig

        s = self.simulation
        return self._wrap(
            "simulation",
            "dt",
            lambda: SimConfig(
                params=self.params(),
                field=self.drift_field() if drift is None else drift,
                x0=_pad(s["x0"] if x0 is None else tuple(np.atleast_1d(x0)), self.d),
                dt=s["dt"] if dt is None else dt,
                horizon=s["horizon"] if horizon is None else horizon,
                n_paths=s["n_paths"] if n_paths is None else n_paths,
                seed=s["seed"],
                jump_threshold=s["jump_threshold"],
                regularization_radius=s["regularization_radius"],
                threads=self.threads,
            ),
        )

    def lambda_grid(self) -> List[float]:
        r = self.resolvent
        per_octave = r["lambda_per_octave"]
        low = math.floor(per_octave * math.log2(r["lambda_min"]) + 1e-9)
        high = math.ceil(per_octave * math.log2(r["lambda_max"]) - 1e-9)
        return [2.0 ** (k / per_octave) for k in range(low, high + 1)]

    def probes(self) -> List[Tuple[float, ...]]:
        return [_pad(p, self.d) for p in self.resolvent["probes"]]

    def _wrap(self, section: str, key: str, build):
        try:
            return build()
        except ConfigError:
            raise
        except (KatoFlowError, ValueError) as exc:
            raise ConfigError(str(exc), section, key, self.lines.get((section, key))) from exc

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None,
                       out: Optional[str] = None) -> "RunConfig":
        """Flags win over file values."""

        raw = {section: dict(values) for section, values in self.raw.items()}
        if seed is not None:
            raw["simulation"]["seed"] = str(int(seed))
        if threads is not None:
            raw["solver"]["threads"] = str(int(threads))
        if out is not None:
            raw["output"]["dir"] = str(out)
        return from_mapping(raw, source=self.source, lines=self.lines)

    def to_text(self, exclude: Tuple[Tuple[str, str], ...] = ()) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for section in DEFAULTS:
            parser[section] = {k: v for k, v in self.raw[section].items() if (section, k) not in exclude}
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    @property
    def config_hash(self) -> str:
        """Hash of the resolved config without the keys that cannot change results."""

        text = self.to_text(exclude=UNHASHED_KEYS)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def _pad(point: Tuple[float, ...], d: int) -> Tuple[float, ...]:
    if len(point) == 1 and d > 1:
        return tuple([point[0]] + [0.0] * (d - 1))
    if len(point) != d:
        raise ConfigError(f"point {list(point)} is not {d}-dimensional")
    return tuple(point)


def from_mapping(
    values: Mapping[str, Mapping[str, str]],
    source: Optional[Path] = None,
    lines: Optional[Dict[Tuple[str, str], int]] = None,
) -> RunConfig:
    """Validate ``section -> key -> string`` values merged over DEFAULTS."""

    lines = lines or {}
    raw: Dict[str, Dict[str, str]] = {section: dict(keys) for section, keys in DEFAULTS.items()}
    for section, keys in values.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]", section, None, lines.get((section, "")))
        for key, value in keys.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {key!r}", section, key, lines.get((section, key)))
            raw[section][key] = str(value).strip()

    def number(section: str, key: str) -> float:
        return _coerce_float(raw[section][key], section, key, lines.get((section, key)))

    def integer(section: str, key: str) -> int:
        return _coerce_int(raw[section][key], section, key, lines.get((section, key)))

    def points(section: str, key: str) -> List[Tuple[float, ...]]:
        return _coerce_points(raw[section][key], section, key, lines.get((section, key)))

    def require(condition: bool, section: str, key: str, message: str) -> None:
        if not condition:
            raise ConfigError(message, section, key, lines.get((section, key)))

    d = integer("model", "d")
    require(d >= 1, "model", "d", f"d must be at least 1, got {d}")
    alpha = number("model", "alpha")
    require(1.0 < alpha < 2.0, "model", "alpha", f"alpha must lie in (1, 2), got {alpha}")

    kind = raw["drift"]["kind"].lower()
    drift_options: Dict[str, Any] = {
        "value": list(_coerce_vector(raw["drift"]["value"], "drift", "value", lines.get(("drift", "value")))),
        "amplitude": number("drift", "amplitude"),
        "frequency": number("drift", "frequency"),
        "width": number("drift", "width"),
        "center": list(_pad(points("drift", "center")[0], d)),
        "gamma": number("drift", "gamma"),
    }
    if raw["drift"]["table"]:
        table = Path(raw["drift"]["table"]).expanduser()
        if not table.is_absolute() and source is not None:
            table = source.parent / table
        drift_options["table"] = str(table)

    grid = {
        "half_width": number("grid", "half_width"),
        "spacing": number("grid", "spacing"),
        "horizon": number("grid", "horizon"),
        "steps": integer("grid", "steps"),
        "probe_sources": points("grid", "probe_sources"),
        "tail_bound": number("grid", "tail_bound"),
    }
    require(grid["spacing"] > 0.0, "grid", "spacing", "spacing must be positive")
    require(grid["half_width"] > 0.0, "grid", "half_width", "half_width must be positive")
    require(grid["horizon"] > 0.0, "grid", "horizon", "horizon must be positive")
    require(grid["steps"] >= 1, "grid", "steps", "steps must be at least 1")
    require(0.0 < grid["tail_bound"] < 1.0, "grid", "tail_bound", "tail_bound must lie in (0, 1)")

    solver = {
        "max_order": integer("solver", "max_order"),
        "ratio_threshold": number("solver", "ratio_threshold"),
        "series_tol": number("solver", "series_tol"),
        "composition_depth": integer("solver", "composition_depth"),
        "threads": integer("solver", "threads"),
    }
    require(solver["max_order"] >= 1, "solver", "max_order", "max_order must be at least 1")
    require(0.0 < solver["ratio_threshold"] < 1.0, "solver", "ratio_threshold", "ratio_threshold must lie in (0, 1)")
    require(solver["series_tol"] > 0.0, "solver", "series_tol", "series_tol must be positive")
    require(solver["composition_depth"] >= 0, "solver", "composition_depth", "composition_depth must be >= 0")
    require(solver["threads"] >= 1, "solver", "threads", "threads must be at least 1")

    resolvent = {
        "lambda": number("resolvent", "lambda"),
        "lambda_min": number("resolvent", "lambda_min"),
        "lambda_max": number("resolvent", "lambda_max"),
        "lambda_per_octave": integer("resolvent", "lambda_per_octave"),
        "max_terms": integer("resolvent", "max_terms"),
        "probes": points("resolvent", "probes"),
        "test_functions": integer("resolvent", "test_functions"),
    }
    require(resolvent["lambda"] >= 0.0, "resolvent", "lambda", "lambda must be non-negative (0 means 2 lambda_0)")
    require(0.0 < resolvent["lambda_min"] < resolvent["lambda_max"], "resolvent", "lambda_min",
            "need 0 < lambda_min < lambda_max")
    require(resolvent["lambda_per_octave"] >= 1, "resolvent", "lambda_per_octave", "must be at least 1")
    require(resolvent["max_terms"] >= 1, "resolvent", "max_terms", "max_terms must be at least 1")
    require(resolvent["test_functions"] >= 1, "resolvent", "test_functions", "need at least one test function")

    simulation = {
        "dt": number("simulation", "dt"),
        "horizon": number("simulation", "horizon"),
        "n_paths": integer("simulation", "n_paths"),
        "seed": integer("simulation", "seed"),
        "x0": points("simulation", "x0")[0],
        "jump_threshold": number("simulation", "jump_threshold"),
        "regularization_radius": number("simulation", "regularization_radius"),
    }
    require(simulation["dt"] > 0.0, "simulation", "dt", "dt must be positive")
    require(simulation["horizon"] >= simulation["dt"], "simulation", "horizon", "horizon must be at least dt")
    require(simulation["n_paths"] >= 1, "simulation", "n_paths", "n_paths must be at least 1")
    require(0 <= simulation["seed"] < 2 ** 64, "simulation", "seed", "seed must be an unsigned 64-bit integer")
    require(simulation["jump_threshold"] > 0.0, "simulation", "jump_threshold", "jump_threshold must be positive")

    return RunConfig(
        raw=raw,
        d=d,
        alpha=alpha,
        drift_kind=kind,
        drift_options=drift_options,
        grid=grid,
        solver=solver,
        resolvent=resolvent,
        simulation=simulation,
        output_dir=raw["output"]["dir"],
        source=source,
        lines=lines,
    )


def parse_config(text: str, source: Optional[Path] = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text, source=str(source) if source else "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", line=getattr(exc, "lineno", None)) from exc
    lines = _line_numbers(text)
    return from_mapping({s: dict(parser[s]) for s in parser.sections()}, source=source, lines=lines)


def load_config(path: Optional[Path] = None) -> RunConfig:
    """Defaults when ``path`` is None; otherwise the parsed file."""

    if path is None:
        return from_mapping({})
    path = Path(path).expanduser()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    logger.info("loaded config %s", path)
    return parse_config(text, source=path)


def parse_points(text: str, d: int, section: str = "cli", key: str = "points") -> List[Tuple[float, ...]]:
    """Points written as in the config file, padded to d coordinates."""

    return [_pad(p, d) for p in _coerce_points(text, section, key, None)]
