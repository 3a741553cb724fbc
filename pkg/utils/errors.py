"""
Exception hierarchy for YieldGAN

Every failure the library raises on purpose derives from YieldGanError.
main.py maps the families to process exit codes.
"""

from typing import Any, Optional


class YieldGanError(Exception):
    """Base class for all YieldGAN errors."""

    exit_code = 1


class ConfigError(YieldGanError, ValueError):
    """Invalid configuration values or contradictory run settings."""

    exit_code = 2


class DataError(YieldGanError, ValueError):
    """Malformed or insufficient input data."""

    exit_code = 3


class ShapeError(DataError):
    """Array or tensor shapes do not line up."""


class CheckpointError(DataError):
    """Checkpoint file is corrupt, truncated, or from another format version."""


class NumericalError(YieldGanError, ArithmeticError):
    """Non-finite values, log of non-positive numbers, diverging losses."""

    exit_code = 4


class TrainingDivergedError(NumericalError):
    """
    A training loop produced a non-finite loss.

    The partial history collected before the failure is attached so callers
    can still write it out.
    """

    def __init__(self, message: str, history: Optional[Any] = None):
        super().__init__(message)
        self.history = history


def exit_code_for(error: BaseException) -> int:
    """Return the CLI exit code for an exception."""
    if isinstance(error, YieldGanError):
        return error.exit_code
    if isinstance(error, (FileNotFoundError, IsADirectoryError)):
        return DataError.exit_code
    return 1
