"""Exception hierarchy. Each error carries the CLI exit code it maps to."""
from __future__ import annotations


class PairsError(Exception):
    exit_code: int = 4


class ConfigError(PairsError, ValueError):
    exit_code = 1


class DataError(PairsError, ValueError):
    exit_code = 2


class PitViolation(PairsError):
    """A parameter window overlaps (or follows) the window it is evaluated on."""

    exit_code = 3


class NumericalError(PairsError, ValueError):
    exit_code = 4


class DegenerateSeriesError(NumericalError):
    """Zero variance, constant spread, singular design matrix."""


class PhaseError(PairsError):
    """Pipeline phase failure; keeps the exit code of the underlying cause."""

    def __init__(self, phase: str, cause: BaseException):
        self.phase = phase
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)
        super().__init__(f"[{phase}] {cause}")
