"""
Exception hierarchy shared by every layer.

The CLI maps each family to an exit code (see EXIT_CODES / exit_code_for).
"""
from typing import Optional


class CfError(Exception):
    """Base class for all errors raised by the package."""


class ShapeError(CfError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(CfError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class StateError(CfError, RuntimeError):
    """An object is used in a state that does not allow the call."""


class NumericError(CfError, ArithmeticError):
    """Ill-conditioned or non-finite computation."""

    def __init__(self, message: str, condition: Optional[float] = None):
        super().__init__(message)
        self.condition = condition


class DataError(CfError, ValueError):
    """Dataset content cannot support the requested operation."""


class ConstantFeatureError(DataError):
    """A feature column has zero standard deviation."""

    def __init__(self, column: str):
        super().__init__(f"Feature '{column}' is constant (std = 0); cannot standardize")
        self.column = column


class SchemaError(CfError, ValueError):
    """Columns, indices or record lengths do not match the declared schema."""


class ParseError(CfError, ValueError):
    """A cell could not be parsed as a number."""


class ConfigError(CfError, ValueError):
    """Invalid experiment configuration or command-line usage."""


class ArtifactMissingError(CfError, FileNotFoundError):
    """A file produced by an earlier pipeline stage is missing."""

    def __init__(self, path: str, stage: str):
        super().__init__(f"Missing artifact {path}; run '{stage}' first")
        self.path = path
        self.stage = stage


class ConvergenceWarning(UserWarning):
    """Training finished without meeting its convergence criterion."""


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def exit_code_for(exc: BaseException) -> int:
    """Map an exception raised by a command to the CLI exit code."""
    from pydantic import ValidationError

    if isinstance(exc, (ConfigError, ValidationError)):
        return EXIT_USAGE
    if isinstance(exc, (NumericError, DomainError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, SchemaError, ParseError, ArtifactMissingError, ShapeError, OSError)):
        return EXIT_DATA
    return EXIT_USAGE
