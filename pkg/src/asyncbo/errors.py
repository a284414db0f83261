"""Shared exception types."""


class NumericalError(RuntimeError):
    """A linear-algebra operation failed even after jitter escalation.

    Carries the last jitter magnitude that was attempted.
    """

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class EvaluationError(RuntimeError):
    """An objective evaluation produced a non-finite value."""


class UnsupportedDimensionError(ValueError):
    """Requested dimension exceeds what a component supports."""


class SchemaError(ValueError):
    """A persisted file does not carry the expected schema version."""
