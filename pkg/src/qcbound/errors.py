"""Exception types shared across the toolkit."""


class QCBoundError(Exception):
    """Base class for toolkit errors."""


class InvalidInputError(QCBoundError, ValueError):
    """Malformed input object (wrong shape, non-finite entries, bad family)."""


class InvalidParameterError(QCBoundError, ValueError):
    """Numeric parameter outside its admissible range."""


class DomainError(QCBoundError, ValueError):
    """Evaluation requested at a point where the object is undefined."""


class SolverError(QCBoundError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class CutEnumerationError(SolverError):
    """Minimal-cut enumeration exceeded its size limit."""
