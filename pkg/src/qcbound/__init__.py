"""Numerical checks for boundary-extension criteria of Sobolev and
Orlicz-Sobolev mappings: inner dilatations, spherical means, integral
criteria, mean oscillation, extremal radial weights and discrete
p-modulus / p-capacity."""

__version__ = "0.1.0"

from .errors import (
    CutEnumerationError,
    DomainError,
    InvalidInputError,
    InvalidParameterError,
    QCBoundError,
    SolverError,
)

__all__ = [
    "__version__",
    "CutEnumerationError",
    "DomainError",
    "InvalidInputError",
    "InvalidParameterError",
    "QCBoundError",
    "SolverError",
]
