"""Exception types shared across the package."""


class SagdpError(Exception):
    """Base class for all package-specific errors."""


class ParseError(SagdpError):
    """Structurally malformed input (bad header, wrong field count, bad literal).

    ``line`` is 1-based and counts the header line.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(SagdpError):
    """Well-formed input that violates a domain invariant.

    ``field`` names the offending field when one can be singled out.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class InfeasibleAllocationError(SagdpError):
    """Slot demand cannot be satisfied by the given per-quarter capacities."""

    def __init__(self, message, quarter=None):
        self.quarter = quarter
        super().__init__(message)


class EpisodeDoneError(SagdpError):
    """step() was called on an environment whose episode already ended."""
