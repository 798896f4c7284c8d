"""Exception hierarchy shared across the toolkit.

Each class carries the CLI exit code it maps to.
"""


class PisaError(Exception):
    exit_code = 1


class ValidationError(PisaError, ValueError):
    """Input violates a documented invariant."""

    exit_code = 2


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class SamplerError(PisaError):
    exit_code = 2


class FormatError(PisaError):
    """Malformed file. ``offset`` is the byte offset of the problem, when known."""

    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MetricError(PisaError):
    exit_code = 4


class AlignmentError(MetricError):
    pass


class StaticClipError(MetricError):
    """No motion detected in a clip, so no impact frame exists."""


class UnsupportedRayError(ValidationError):
    """Ray slope is non-positive, so the drop-time distribution is improper."""
