"""Exception hierarchy shared by every csplab module."""

import os


class CSPLabError(Exception):
    """Base class for all library errors."""


class DomainError(CSPLabError, ValueError):
    """An argument lies outside the domain of the operation (theta, index, arity...)."""


class ValidationError(CSPLabError, ValueError):
    """Input data (tables, distributions, files) violates a documented invariant."""


class SizeCapError(CSPLabError):
    """The requested computation exceeds a configured size cap and was refused."""


class ConvergenceError(CSPLabError):
    """Two independent numeric routes disagree beyond the requested tolerance."""

    def __init__(self, message, **values):
        super().__init__(message)
        self.values = values


DEFAULT_MAX_NODES = 10**7


def max_nodes():
    """Node cap for tree sampling; ``CSPLAB_MAX_NODES`` overrides the default."""
    raw = os.environ.get("CSPLAB_MAX_NODES")
    if raw is None:
        return DEFAULT_MAX_NODES
    try:
        value = int(float(raw))
    except ValueError as exc:
        raise ValidationError(f"CSPLAB_MAX_NODES is not a number: {raw!r}") from exc
    if value < 1:
        raise ValidationError("CSPLAB_MAX_NODES must be positive")
    return value
