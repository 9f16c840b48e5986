"""csplab: clause Fourier algebra, threshold bounds and Monte-Carlo checks for random CSPs."""

from .errors import (
    CSPLabError,
    ConvergenceError,
    DomainError,
    SizeCapError,
    ValidationError,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CSPLabError",
    "ConvergenceError",
    "DomainError",
    "SizeCapError",
    "ValidationError",
]
