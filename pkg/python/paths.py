"""
Common filesystem locations for KatoFlow runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

RUNS_DIR_NAME = "runs"
RESOLVED_CONFIG_NAME = "resolved_config.ini"
KERNEL_NAME = "kernel.kfk"
EXTENDED_KERNEL_NAME = "kernel_steps{steps}.kfk"
PATHS_NAME = "paths.kfp"


def default_run_dir(command: str, config_hash: str, base: Optional[Path] = None) -> Path:
    """<base>/<command>-<hash8>; ``base`` defaults to runs/ under the current directory at call time."""

    root = Path(base) if base else Path.cwd() / RUNS_DIR_NAME
    return root / f"{command}-{config_hash[:8]}"


def ensure_run_dir(command: str, config_hash: str, out: Optional[str] = None) -> Path:
    """
    Ensure the run directory exists: ``out`` when given, otherwise runs/<command>-<hash8>.
    """

    run_dir = Path(out).expanduser() if out else default_run_dir(command, config_hash)
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir
