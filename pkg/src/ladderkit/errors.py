"""Exception types shared across the toolkit."""
from __future__ import annotations


class LadderError(Exception):
    """Base class for all toolkit errors."""


class EmptySweepError(LadderError):
    """Raised when an operation needs at least one rate-quality point."""


class MissingResolutionError(LadderError):
    """Raised when a required resolution has no points in the input."""


class UnderdeterminedFitError(LadderError):
    """Raised when a model fit has too few distinct samples to solve."""


class CalibrationUnavailableError(LadderError):
    """Raised when a calibration map needed for prediction is absent."""


class InsufficientAnchorsError(LadderError):
    """Raised when a curve has fewer than two anchor points."""


class SchemaError(LadderError):
    """Raised when a serialized artifact fails structural validation."""


class ToolError(LadderError):
    """Raised when an external tool invocation fails or emits garbage."""

    def __init__(
        self,
        message: str,
        *,
        command: str | None = None,
        returncode: int | None = None,
        stdout: str | None = None,
        stderr: str | None = None,
    ):
        super().__init__(message)
        self.command = command
        self.returncode = returncode
        self.stdout = stdout
        self.stderr = stderr

    def __str__(self) -> str:
        parts = [super().__str__()]
        if self.command is not None:
            parts.append(f"command: {self.command}")
        if self.returncode is not None:
            parts.append(f"exit code: {self.returncode}")
        if self.stderr:
            parts.append(f"stderr: {self.stderr.strip()}")
        return "\n".join(parts)


class PredictionAborted(LadderError):
    """Raised when ladder construction fails mid-walk.

    Carries the rows built so far so callers can persist a partial result.
    """

    def __init__(self, message: str, *, partial_rungs=(), cause: Exception | None = None):
        super().__init__(message)
        self.partial_rungs = tuple(partial_rungs)
        self.cause = cause
