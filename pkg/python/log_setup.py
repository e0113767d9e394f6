"""
Logging configuration for the KatoFlow modules.
"""

from __future__ import annotations

import logging
import sys

ROOT_LOGGER_NAMES = (
    "stable_core",
    "kato",
    "heat_kernel",
    "resolvent",
    "simulate",
    "validate",
    "control",
    "config",
    "gridio",
    "parallel",
)
LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"

_handler: logging.Handler | None = None


def configure_logging(level: int = logging.WARNING) -> logging.Handler:
    """Attach a single stderr handler to every module logger and set its level."""

    global _handler
    if _handler is None:
        _handler = logging.StreamHandler(sys.stderr)
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
        for name in ROOT_LOGGER_NAMES:
            module_logger = logging.getLogger(name)
            module_logger.addHandler(_handler)
            module_logger.propagate = False
    for name in ROOT_LOGGER_NAMES:
        logging.getLogger(name).setLevel(level)
    _handler.setLevel(level)
    return _handler


def level_from_verbosity(verbosity: int) -> int:
    if verbosity >= 2:
        return logging.DEBUG
    if verbosity == 1:
        return logging.INFO
    return logging.WARNING
