"""
Exception hierarchy shared by the numerical modules and the command-line front end.
"""

from __future__ import annotations

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3


class KatoFlowError(Exception):
    """Root of every error raised on purpose by this package."""

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.context: Dict[str, Any] = context


class DomainError(KatoFlowError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(KatoFlowError, ValueError):
    def __init__(
        self,
        message: str,
        section: Optional[str] = None,
        key: Optional[str] = None,
        line: Optional[int] = None,
    ) -> None:
        location = []
        if line is not None:
            location.append(f"line {line}")
        if section is not None:
            location.append(f"[{section}]" + (f" {key}" if key else ""))
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(prefix + message, section=section, key=key, line=line)
        self.section = section
        self.key = key
        self.line = line


class NumericalError(KatoFlowError, RuntimeError):
    """A computation ran but could not certify its result."""


class AccuracyError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class BoundViolationError(NumericalError):
    pass


class ThresholdNotFoundError(NumericalError):
    pass


class ContractionError(NumericalError):
    pass


class KernelQualityError(NumericalError):
    pass


class HorizonError(NumericalError):
    pass


class CompositionDepthError(NumericalError):
    pass


class InsufficientSampleError(KatoFlowError):
    pass


class ValidationFailure(KatoFlowError):
    """A report was produced but at least one of its checks failed."""


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ValidationFailure):
        return EXIT_VALIDATION_FAILED
    if isinstance(exc, (ConfigError, DomainError)):
        return EXIT_CONFIG_ERROR
    if isinstance(exc, (NumericalError, InsufficientSampleError)):
        return EXIT_NUMERICAL_FAILURE
    return EXIT_NUMERICAL_FAILURE
