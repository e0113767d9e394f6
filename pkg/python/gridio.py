"""
On-disk formats of a run directory.

CSV files are UTF-8 with a header row and numbers in scientific notation with 17
significant digits. Kernel tables and path sets use small binary containers:

    magic (8 bytes) | header length (uint32 LE) | JSON header (UTF-8) | payload

Kernel payload: float64 LE, row-major (t, x, y). Path payload: uint64 LE offsets
(n + 1 entries, in floats) followed by float64 LE records, one per path, each holding the
states (K + 1, d) then the increments (K, d).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import KatoFlowError

logger = logging.getLogger(__name__)

KERNEL_MAGIC = b"KFKERNL1"
PATHS_MAGIC = b"KFPATHS1"
MANIFEST_NAME = "manifest.json"
SCHEMA_VERSION = 1


class FormatError(KatoFlowError):
    """A binary artifact is truncated or carries the wrong magic."""


def format_number(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    return f"{float(value):.16e}"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    return path


def read_csv(path: Path) -> Tuple[List[str], List[List[str]]]:
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return header, [row for row in reader]


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


def _write_container(path: Path, magic: bytes, header: Dict[str, Any], payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    encoded = json.dumps(header, sort_keys=True, default=_jsonable).encode("utf-8")
    with path.open("wb") as handle:
        handle.write(magic)
        handle.write(struct.pack("<I", len(encoded)))
        handle.write(encoded)
        handle.write(payload)
    return path


def _read_container(path: Path, magic: bytes) -> Tuple[Dict[str, Any], bytes]:
    blob = Path(path).read_bytes()
    if blob[:8] != magic:
        raise FormatError(f"{path} is not a {magic.decode()} file")
    if len(blob) < 12:
        raise FormatError(f"{path} is truncated")
    (length,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + length].decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"{path} has a malformed header: {exc}") from exc
    return header, blob[12 + length:]


def write_kernel(path: Path, table) -> Path:
    """Write a KernelTable; values are reordered from (x, t, y) to (t, x, y)."""

    values = np.ascontiguousarray(np.swapaxes(np.asarray(table.values, dtype="<f8"), 0, 1))
    header = {
        "schema": SCHEMA_VERSION,
        "d": table.params.d,
        "alpha": table.params.alpha,
        "order": table.order,
        "grid": table.grid.describe(),
        "times": np.asarray(table.times).tolist(),
        "source_index": [list(i) for i in table.source_index],
        "shape": list(values.shape),
    }
    logger.debug("writing kernel table %s to %s", values.shape, path)
    return _write_container(path, KERNEL_MAGIC, header, values.tobytes())


def read_kernel(path: Path) -> Tuple[Dict[str, Any], np.ndarray]:
    """Header and values in (t, x, y) order."""

    header, payload = _read_container(path, KERNEL_MAGIC)
    shape = tuple(header["shape"])
    expected = int(np.prod(shape)) * 8
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    return header, np.frombuffer(payload, dtype="<f8").reshape(shape)


def write_paths(path: Path, paths) -> Path:
    n, steps, d = paths.increments.shape
    records = [
        np.concatenate([paths.states[i].ravel(), paths.increments[i].ravel()]).astype("<f8")
        for i in range(n)
    ]
    offsets = np.zeros(n + 1, dtype="<u8")
    offsets[1:] = np.cumsum([r.size for r in records])
    header = {
        "schema": SCHEMA_VERSION,
        "d": d,
        "alpha": paths.params.alpha,
        "dt": paths.dt,
        "steps": steps,
        "n_paths": n,
        "seed": paths.seed,
        "method": paths.method,
        "jump_threshold": paths.jump_threshold,
        "failed": np.flatnonzero(paths.failed).tolist(),
        "drift": paths.drift,
    }
    body = offsets.tobytes() + b"".join(r.tobytes() for r in records)
    return _write_container(path, PATHS_MAGIC, header, body)


def read_paths(path: Path) -> Tuple[Dict[str, Any], np.ndarray, np.ndarray]:
    """Header, states (n, K+1, d) and increments (n, K, d)."""

    header, payload = _read_container(path, PATHS_MAGIC)
    n, steps, d = header["n_paths"], header["steps"], header["d"]
    offset_bytes = (n + 1) * 8
    offsets = np.frombuffer(payload[:offset_bytes], dtype="<u8")
    data = np.frombuffer(payload[offset_bytes:], dtype="<f8")
    if offsets.size != n + 1 or data.size != int(offsets[-1]):
        raise FormatError(f"{path}: offsets do not match the payload")
    states = np.empty((n, steps + 1, d))
    increments = np.empty((n, steps, d))
    split = (steps + 1) * d
    for i in range(n):
        record = data[int(offsets[i]):int(offsets[i + 1])]
        states[i] = record[:split].reshape(steps + 1, d)
        increments[i] = record[split:].reshape(steps, d)
    return header, states, increments


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(run_dir: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
    """Content hashes of every file in the run directory except the manifest itself."""

    run_dir = Path(run_dir)
    files = {
        str(p.relative_to(run_dir)): sha256_file(p)
        for p in sorted(run_dir.rglob("*"))
        if p.is_file() and p.name != MANIFEST_NAME
    }
    payload = {"schema": SCHEMA_VERSION, "files": files}
    if extra:
        payload.update(extra)
    return write_json(run_dir / MANIFEST_NAME, payload)


def verify_manifest(run_dir: Path) -> List[str]:
    """Names whose content no longer matches the manifest."""

    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
    return [
        name for name, digest in manifest["files"].items()
        if not (run_dir / name).is_file() or sha256_file(run_dir / name) != digest
    ]
