"""Linear algebra of mapping differentials.

Singular spectra, Jacobians, stretch bounds and the inner dilatation of
order ``p`` of an ``n x n`` differential matrix (row ``i`` is the gradient
of component ``i``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError

__all__ = [
    "ZERO_TOL",
    "DimensionConstants",
    "DilatationSample",
    "as_differential",
    "dilatation_sample",
    "dimension_constants",
    "inner_dilatation",
    "singular_spectrum",
]

MAX_DIM = 6
# "f'(x) = 0" branch: max |entry| below this; "J = 0" branch: |J| < ZERO_TOL * ||f'||^n
ZERO_TOL = 1e-13


@dataclass(frozen=True)
class DimensionConstants:
    """Unit sphere area ``omega`` and unit ball volume ``Omega`` in R^n."""

    n: int
    omega: float
    Omega: float


def dimension_constants(n: int) -> DimensionConstants:
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"dimension must be a positive integer, got {n!r}")
    n = int(n)
    omega = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    return DimensionConstants(n=n, omega=omega, Omega=omega / n)


@dataclass(frozen=True)
class DilatationSample:
    point: tuple
    p: float
    jacobian: float
    min_stretch: float
    op_norm: float
    K_inner: float  # math.inf for the degenerate branch

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.K_inner)


def as_differential(M) -> np.ndarray:
    """Validate and return ``M`` as a square float array with 2 <= n <= 6."""
    a = np.asarray(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"differential must be a square matrix, got shape {a.shape}")
    if not 2 <= a.shape[0] <= MAX_DIM:
        raise InvalidInputError(f"dimension {a.shape[0]} outside supported range 2..{MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("differential has non-finite entries")
    return a


def singular_spectrum(M) -> np.ndarray:
    """Singular values of ``M`` in ascending order.

    ``values[0]`` is the minimal stretch l(f') and ``values[-1]`` the
    operator norm; their product is |det M|.
    """
    a = as_differential(M)
    return np.sort(np.linalg.svd(a, compute_uv=False))


def inner_dilatation(M, p: float) -> float:
    """Inner dilatation of order ``p`` of a differential.

    Returns ``|J| / l(M)**p`` when the Jacobian is nonzero, ``1.0`` for the
    zero matrix and ``math.inf`` for a nonzero singular matrix.
    """
    if not np.isfinite(p) or p < 1:
        raise InvalidParameterError(f"order p must be >= 1, got {p!r}")
    a = as_differential(M)
    return _inner_dilatation_checked(a, float(p))[0]


def _inner_dilatation_checked(a: np.ndarray, p: float):
    """Return (K, |J|, l, ||M||) for a validated matrix."""
    n = a.shape[0]
    sv = np.sort(np.linalg.svd(a, compute_uv=False))
    op_norm = float(sv[-1])
    lmin = float(sv[0])
    if np.max(np.abs(a)) < ZERO_TOL:
        return 1.0, 0.0, lmin, op_norm
    jac = abs(float(np.linalg.det(a)))
    if jac < ZERO_TOL * op_norm**n or lmin == 0.0:
        return math.inf, jac, lmin, op_norm
    # product form keeps the identity K = prod(sv) / sv[0]**p exact to rounding
    K = float(np.prod(sv[1:]) * lmin ** (1.0 - p))
    return K, jac, lmin, op_norm


def dilatation_sample(point, M, p: float) -> DilatationSample:
    if not np.isfinite(p) or p < 1:
        raise InvalidParameterError(f"order p must be >= 1, got {p!r}")
    a = as_differential(M)
    K, jac, lmin, op = _inner_dilatation_checked(a, float(p))
    return DilatationSample(
        point=tuple(float(v) for v in np.asarray(point, dtype=float)),
        p=float(p),
        jacobian=float(np.linalg.det(a)),
        min_stretch=lmin,
        op_norm=op,
        K_inner=K,
    )
