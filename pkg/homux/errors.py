"""
homux Errors
Exception hierarchy; every error carries the CLI exit code it maps to.
"""

from typing import Any, Dict, List, Optional

import numpy as np


class HomuxError(Exception):
    """Base class for all homux errors."""
    exit_code = 1


class ConfigError(HomuxError):
    """Invalid or incomplete configuration."""
    exit_code = 2


class SpecificationError(HomuxError):
    """A synthetic system specification that cannot be realized."""
    exit_code = 2


class DataError(HomuxError):
    """Problems with input data files or their contents."""
    exit_code = 3


class SchemaError(DataError):
    """Mismatched item sets, malformed files or out-of-range codes."""


class DegenerateVariableError(DataError):
    """An item without variation (constant column or a single category)."""

    def __init__(self, message: str, item: Optional[str] = None):
        super().__init__(message)
        self.item = item


class StructuralError(DataError):
    """Hyperedge or multiplet indices inconsistent with the node set."""


class EstimationError(HomuxError):
    """A numerical estimation step failed."""
    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class SingularCovarianceError(EstimationError):
    """Correlation matrix not positive definite after ridge regularization."""


def as_homux_error(exc: BaseException) -> HomuxError:
    """
    Map a foreign exception onto the hierarchy: numerical failures become
    EstimationError, anything else a DataError.
    """
    if isinstance(exc, HomuxError):
        return exc
    message = f"{type(exc).__name__}: {exc}"
    if isinstance(exc, (np.linalg.LinAlgError, ArithmeticError)):
        wrapped: HomuxError = EstimationError(message)
    else:
        wrapped = DataError(message)
    wrapped.__cause__ = exc
    return wrapped


class StageFailure(HomuxError):
    """A pipeline stage failed for one layer; keeps the cause's exit code."""

    def __init__(self, layer: str, stage: str, cause: Exception):
        cause = as_homux_error(cause)
        super().__init__(f"layer '{layer}' failed at stage '{stage}': {cause}")
        self.layer = layer
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
