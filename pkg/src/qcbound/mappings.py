"""Closed-form model mappings with analytic and finite-difference differentials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffcore import dilatation_sample
from .errors import DomainError, InvalidInputError, InvalidParameterError
from .sphquad import QuadratureRule

__all__ = [
    "MappingModel",
    "Identity",
    "Linear",
    "RadialStretch",
    "Translate",
    "Compose",
    "DifferentialMethod",
    "DilatationField",
    "SampledField",
    "mapping_from_spec",
    "evaluate",
    "differential",
    "sample_lattice",
    "dilatation_field",
    "lower_q_majorant",
]


class MappingModel:
    """Base class; subclasses implement ``__call__`` and ``jacobian``."""

    kind = "abstract"
    dim: int
    declared_multiplicity: int = 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_spec(self) -> dict:
        raise NotImplementedError

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidInputError(f"expected a point of shape ({self.dim},), got {x.shape}")
        return x


def _multiplicity(N):
    if int(N) != N or N < 1:
        raise InvalidParameterError(f"declared multiplicity must be a positive integer, got {N!r}")
    return int(N)


class Identity(MappingModel):
    kind = "identity"

    def __init__(self, dim: int, declared_multiplicity: int = 1):
        self.dim = int(dim)
        self.declared_multiplicity = _multiplicity(declared_multiplicity)

    def __call__(self, x):
        return self._check(x).copy()

    def jacobian(self, x):
        self._check(x)
        return np.eye(self.dim)

    def to_spec(self):
        return {"kind": "identity", "dim": self.dim}


class Linear(MappingModel):
    kind = "linear"

    def __init__(self, matrix, declared_multiplicity: int = 1):
        A = np.asarray(matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.all(np.isfinite(A)):
            raise InvalidInputError("linear mapping needs a finite square matrix")
        self.matrix = A
        self.dim = A.shape[0]
        self.declared_multiplicity = _multiplicity(declared_multiplicity)

    def __call__(self, x):
        return self.matrix @ self._check(x)

    def jacobian(self, x):
        self._check(x)
        return self.matrix.copy()

    def to_spec(self):
        return {"kind": "linear", "matrix": self.matrix.tolist()}


class RadialStretch(MappingModel):
    """``x -> |x|**(c-1) * x`` with ``f(0) = 0``."""

    kind = "radial_stretch"

    def __init__(self, dim: int, c: float, declared_multiplicity: int = 1):
        if not (np.isfinite(c) and c > 0):
            raise InvalidParameterError(f"radial stretch exponent must be positive, got {c!r}")
        self.dim = int(dim)
        self.c = float(c)
        self.declared_multiplicity = _multiplicity(declared_multiplicity)

    def __call__(self, x):
        x = self._check(x)
        r = np.linalg.norm(x)
        if r == 0.0:
            return np.zeros(self.dim)
        return r ** (self.c - 1.0) * x

    def jacobian(self, x):
        x = self._check(x)
        r = np.linalg.norm(x)
        if self.c == 1.0:
            return np.eye(self.dim)
        if r == 0.0:
            raise DomainError("radial stretch is not differentiable at the origin for c != 1")
        u = x / r
        return r ** (self.c - 1.0) * (np.eye(self.dim) + (self.c - 1.0) * np.outer(u, u))

    def to_spec(self):
        return {"kind": "radial_stretch", "dim": self.dim, "c": self.c}


class Translate(MappingModel):
    kind = "translate"

    def __init__(self, vector, declared_multiplicity: int = 1):
        self.vector = np.asarray(vector, dtype=float)
        self.dim = len(self.vector)
        self.declared_multiplicity = _multiplicity(declared_multiplicity)

    def __call__(self, x):
        return self._check(x) + self.vector

    def jacobian(self, x):
        self._check(x)
        return np.eye(self.dim)

    def to_spec(self):
        return {"kind": "translate", "vector": self.vector.tolist()}


class Compose(MappingModel):
    """Apply ``models[0]`` first, then ``models[1]``, and so on."""

    kind = "compose"

    def __init__(self, models: Sequence[MappingModel], declared_multiplicity: int = 1):
        if not models:
            raise InvalidInputError("compose needs at least one mapping")
        dims = {m.dim for m in models}
        if len(dims) != 1:
            raise InvalidInputError(f"composed mappings disagree on dimension: {sorted(dims)}")
        self.models = list(models)
        self.dim = dims.pop()
        self.declared_multiplicity = _multiplicity(declared_multiplicity)

    def __call__(self, x):
        y = self._check(x)
        for m in self.models:
            y = m(y)
        return y

    def jacobian(self, x):
        y = self._check(x)
        J = np.eye(self.dim)
        for m in self.models:
            J = m.jacobian(y) @ J
            y = m(y)
        return J

    def to_spec(self):
        return {"kind": "compose", "models": [m.to_spec() for m in self.models]}


def mapping_from_spec(spec: dict, dim: int | None = None) -> MappingModel:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidInputError(f"mapping spec must be a mapping with a 'kind' key, got {spec!r}")
    kind = spec["kind"]
    N = spec.get("declared_multiplicity", 1)
    d = spec.get("dim", dim)
    if kind == "identity":
        return Identity(d, N)
    if kind == "linear":
        return Linear(spec["matrix"], N)
    if kind == "radial_stretch":
        return RadialStretch(d, spec["c"], N)
    if kind == "translate":
        return Translate(spec["vector"], N)
    if kind == "compose":
        return Compose([mapping_from_spec(s, d) for s in spec["models"]], N)
    raise InvalidInputError(f"unknown mapping kind {kind!r}")


@dataclass(frozen=True)
class DifferentialMethod:
    """``analytic`` or ``central_difference`` with step ``h`` (None = default)."""

    kind: str = "analytic"
    h: float | None = None
    richardson: bool = True

    def __post_init__(self):
        if self.kind not in ("analytic", "central_difference"):
            raise InvalidParameterError(f"unknown differential method {self.kind!r}")
        if self.h is not None and not (np.isfinite(self.h) and self.h > 0):
            raise InvalidParameterError(f"finite-difference step must be positive, got {self.h!r}")


ANALYTIC = DifferentialMethod()


def evaluate(f: MappingModel, x) -> np.ndarray:
    return f(np.asarray(x, dtype=float))


def _central(f, x, h):
    n = len(x)
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return J


def differential(f: MappingModel, x, method: DifferentialMethod = ANALYTIC) -> np.ndarray:
    """Jacobian matrix of ``f`` at ``x``.

    The finite-difference path uses central differences with default step
    ``1e-5 * max(1, |x|)``; with ``richardson`` the estimates at ``h`` and
    ``h/2`` are combined to cancel the ``h**2`` term.
    """
    x = np.asarray(x, dtype=float)
    if method.kind == "analytic":
        return f.jacobian(x)
    f.jacobian(x)  # raises DomainError at singular points
    h = method.h if method.h is not None else 1e-5 * max(1.0, float(np.linalg.norm(x)))
    D = _central(f, x, h)
    if method.richardson:
        D = (4.0 * _central(f, x, h / 2.0) - D) / 3.0
    return D


def sample_lattice(n: int, x0, r_in: float, r_out: float, n_radial: int = 8, n_angular: int = 16, seed: int = 7):
    """Points on a log-radial x angular lattice in the annulus around ``x0``.

    Directions: uniform angles (n = 2), Gauss-Legendre polar x uniform
    azimuth (n = 3), seeded random directions (n >= 4).
    """
    if not (0 < r_in <= r_out):
        raise InvalidParameterError(f"need 0 < r_in <= r_out, got ({r_in}, {r_out})")
    if n_radial < 1 or n_angular < 1:
        raise InvalidParameterError("sampling counts must be positive")
    x0 = np.asarray(x0, dtype=float)
    if n == 2:
        rule = QuadratureRule(2, m=n_angular)
    elif n == 3:
        rule = QuadratureRule(3, m_polar=max(1, n_angular // 2), m_azimuth=n_angular)
    else:
        rule = QuadratureRule(n, mc_samples=n_angular, seed=seed)
    dirs, _ = rule.sphere_nodes()
    radii = np.geomspace(r_in, r_out, n_radial) if n_radial > 1 else np.array([r_in])
    return (x0[None, None, :] + radii[:, None, None] * dirs[None, :, :]).reshape(-1, n)


@dataclass
class DilatationField:
    samples: list
    p: float
    K_max: float
    K_mean: float
    any_infinite: bool

    @property
    def points(self) -> np.ndarray:
        return np.array([s.point for s in self.samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([s.K_inner for s in self.samples])


def dilatation_field(
    f: MappingModel,
    x0,
    r_in: float,
    r_out: float,
    p: float,
    n_radial: int = 8,
    n_angular: int = 16,
    method: DifferentialMethod = ANALYTIC,
) -> DilatationField:
    """Inner dilatation of order ``p`` sampled on the annulus lattice.

    ``K_max`` is the sampled essential-sup estimate; ``K_mean`` averages the
    finite samples.
    """
    pts = sample_lattice(f.dim, x0, r_in, r_out, n_radial, n_angular)
    samples = [dilatation_sample(x, differential(f, x, method), p) for x in pts]
    K = np.array([s.K_inner for s in samples])
    finite = K[np.isfinite(K)]
    return DilatationField(
        samples=samples,
        p=float(p),
        K_max=float(K.max()),
        K_mean=float(finite.mean()) if len(finite) else math.inf,
        any_infinite=bool(np.any(np.isinf(K))),
    )


@dataclass
class SampledField:
    """Values of a weight on a point set, with the order used to build it."""

    points: np.ndarray
    values: np.ndarray
    alpha: float
    notes: list = field(default_factory=list)


def lower_q_majorant(
    f: MappingModel,
    x0,
    r_in: float,
    r_out: float,
    p: float,
    n_radial: int = 8,
    n_angular: int = 16,
    method: DifferentialMethod = ANALYTIC,
) -> SampledField:
    """Sampled ``N(f, D) * K_{I,alpha}(x, f)**((p-n+1)/(n-1))``, ``alpha = p/(p-n+1)``.

    Requires ``n - 1 < p <= n``.
    """
    n = f.dim
    if not (n - 1 < p <= n):
        raise InvalidParameterError(f"p must lie in (n-1, n] = ({n - 1}, {n}], got {p!r}")
    alpha = p / (p - n + 1)
    fld = dilatation_field(f, x0, r_in, r_out, alpha, n_radial, n_angular, method)
    expo = (p - n + 1) / (n - 1)
    K = fld.values
    with np.errstate(over="ignore"):
        Q = f.declared_multiplicity * K**expo
    notes = ["multiplicity N(f, D) is declared, not computed"]
    if fld.any_infinite:
        notes.append("infinite dilatation at some samples")
    return SampledField(points=fld.points, values=Q, alpha=alpha, notes=notes)
