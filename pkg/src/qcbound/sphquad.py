"""Quadrature over spheres, balls and annuli in R^n.

Sphere rules: uniform-angle trapezoid (n = 2), Gauss-Legendre in the polar
cosine times uniform azimuth (n = 3), seeded Monte Carlo (n >= 4).  Radial
integrals use Gauss-Legendre panels in ``log r`` on log-spaced subintervals;
the innermost edge is never below ``R_MIN`` so integrands singular at the
center are not evaluated there.
"""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .diffcore import dimension_constants
from .errors import DomainError, InvalidInputError, InvalidParameterError

__all__ = [
    "R_MIN",
    "QuadratureRule",
    "RadialProfile",
    "WeightFunction",
    "Constant",
    "Power",
    "LogPower",
    "LinearCoord",
    "Grid",
    "Product",
    "Sum",
    "RadialFunction",
    "weight_from_spec",
    "radial_rule",
    "sphere_mean",
    "sphere_means",
    "sphere_ls_norm",
    "sphere_ls_norms",
    "radial_profile",
    "ball_mean_oscillation",
    "annulus_integral",
    "shell_integrals",
]

R_MIN = 1e-12
# sphere-node chunk size (points per vectorized evaluation)
_CHUNK = 400_000
# share of the ball integral allowed in the innermost decade before the
# integrand is declared non-integrable at the center
_CORE_FRACTION = 1e-3


# --------------------------------------------------------------------------
# weight functions


class WeightFunction:
    """A scalar field on R^n, evaluated on arrays of points of shape (..., n)."""

    kind = "abstract"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_spec(self) -> dict:
        raise NotImplementedError

    def __mul__(self, other):
        return Product([self, other])

    def __add__(self, other):
        return Sum([self, other])


def _center(center, x):
    if center is None:
        return np.zeros(x.shape[-1])
    c = np.asarray(center, dtype=float)
    if c.shape != (x.shape[-1],):
        raise InvalidInputError(f"center of dimension {c.shape} does not match points {x.shape[-1]}")
    return c


class Constant(WeightFunction):
    kind = "constant"

    def __init__(self, c: float):
        self.c = float(c)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.c)

    def to_spec(self):
        return {"kind": "constant", "c": self.c}


class Power(WeightFunction):
    """``|x - center|**beta``."""

    kind = "power"

    def __init__(self, beta: float, center=None):
        self.beta = float(beta)
        self.center = None if center is None else tuple(float(v) for v in center)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - _center(self.center, x), axis=-1)
        with np.errstate(divide="ignore"):
            return r**self.beta

    def to_spec(self):
        d = {"kind": "power", "beta": self.beta}
        if self.center is not None:
            d["center"] = list(self.center)
        return d


class LogPower(WeightFunction):
    """``log(1/|x - center|)**gamma``, defined for ``|x - center| < 1``."""

    kind = "logpower"

    def __init__(self, gamma: float, center=None):
        self.gamma = float(gamma)
        self.center = None if center is None else tuple(float(v) for v in center)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - _center(self.center, x), axis=-1)
        if np.any(r >= 1.0):
            raise DomainError("logpower weight evaluated at |x - center| >= 1")
        with np.errstate(divide="ignore"):
            return (-np.log(r)) ** self.gamma

    def to_spec(self):
        d = {"kind": "logpower", "gamma": self.gamma}
        if self.center is not None:
            d["center"] = list(self.center)
        return d


class LinearCoord(WeightFunction):
    """``a . x + b``."""

    kind = "linear_coord"

    def __init__(self, a: Sequence[float], b: float = 0.0):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.a + self.b

    def to_spec(self):
        return {"kind": "linear_coord", "a": self.a.tolist(), "b": self.b}


class Grid(WeightFunction):
    """Samples on a rectilinear lattice with multilinear interpolation.

    Points outside the lattice raise :class:`DomainError`.
    """

    kind = "grid"

    def __init__(self, axes: Sequence[Sequence[float]], values):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise InvalidInputError("grid values shape does not match axes")
        self._interp = RegularGridInterpolator(self.axes, self.values, method="linear", bounds_error=True)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        try:
            return self._interp(x.reshape(-1, x.shape[-1])).reshape(x.shape[:-1])
        except ValueError as exc:
            raise DomainError(f"grid weight evaluated outside its lattice: {exc}") from None

    def to_spec(self):
        return {"kind": "grid", "axes": [a.tolist() for a in self.axes], "values": self.values.tolist()}


class Product(WeightFunction):
    kind = "product"

    def __init__(self, factors: Sequence[WeightFunction]):
        if not factors:
            raise InvalidInputError("product weight needs at least one factor")
        self.factors = list(factors)

    def __call__(self, x):
        out = self.factors[0](x)
        for f in self.factors[1:]:
            out = out * f(x)
        return out

    def to_spec(self):
        return {"kind": "product", "factors": [f.to_spec() for f in self.factors]}


class Sum(WeightFunction):
    kind = "sum"

    def __init__(self, terms: Sequence[WeightFunction]):
        if not terms:
            raise InvalidInputError("sum weight needs at least one term")
        self.terms = list(terms)

    def __call__(self, x):
        out = self.terms[0](x)
        for f in self.terms[1:]:
            out = out + f(x)
        return out

    def to_spec(self):
        return {"kind": "sum", "terms": [f.to_spec() for f in self.terms]}


class RadialFunction(WeightFunction):
    """``g(|x - center|)`` for a vectorized callable ``g`` (not serializable)."""

    kind = "radial"

    def __init__(self, g: Callable[[np.ndarray], np.ndarray], center=None):
        self.g = g
        self.center = None if center is None else tuple(float(v) for v in center)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.g(np.linalg.norm(x - _center(self.center, x), axis=-1))

    def to_spec(self):
        raise InvalidInputError("radial callable weights cannot be serialized")


def weight_from_spec(spec: dict) -> WeightFunction:
    """Build a weight function from its dictionary form (see ``to_spec``)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidInputError(f"weight spec must be a mapping with a 'kind' key, got {spec!r}")
    kind = spec["kind"]
    if kind == "constant":
        return Constant(spec["c"])
    if kind == "power":
        return Power(spec["beta"], spec.get("center"))
    if kind == "logpower":
        return LogPower(spec["gamma"], spec.get("center"))
    if kind == "linear_coord":
        return LinearCoord(spec["a"], spec.get("b", 0.0))
    if kind == "grid":
        return Grid(spec["axes"], spec["values"])
    if kind == "product":
        return Product([weight_from_spec(s) for s in spec["factors"]])
    if kind == "sum":
        return Sum([weight_from_spec(s) for s in spec["terms"]])
    raise InvalidInputError(f"unknown weight kind {kind!r}")


# --------------------------------------------------------------------------
# rules


@functools.lru_cache(maxsize=64)
def _gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@functools.lru_cache(maxsize=64)
def _sphere_nodes(n: int, m: int, m_polar: int, m_azimuth: int, mc_samples: int, seed: int):
    omega = dimension_constants(n).omega
    if n == 2:
        theta = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        w = np.full(m, omega / m)
    elif n == 3:
        z, wz = _gauss_legendre(m_polar)
        phi = 2.0 * np.pi * (np.arange(m_azimuth) + 0.5) / m_azimuth
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1.0 - zz**2)
        dirs = np.column_stack([(s * np.cos(pp)).ravel(), (s * np.sin(pp)).ravel(), zz.ravel()])
        w = (wz[:, None] * np.full(m_azimuth, 2.0 * np.pi / m_azimuth)[None, :]).ravel()
    else:
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((mc_samples, n))
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
        w = np.full(mc_samples, omega / mc_samples)
    dirs.setflags(write=False)
    w.setflags(write=False)
    return dirs, w


@dataclass(frozen=True)
class QuadratureRule:
    """Node counts for sphere and radial integration in dimension ``n``.

    ``m`` is used for n = 2, ``m_polar x m_azimuth`` for n = 3 and
    ``mc_samples`` with ``seed`` for n >= 4.  Radial integrals use
    ``gl_order`` Gauss-Legendre nodes (in log r) on each of
    ``max(min_panels, ceil(panels_per_decade * decades))`` panels.
    """

    n: int
    m: int = 64
    m_polar: int = 16
    m_azimuth: int = 32
    mc_samples: int = 20_000
    seed: int = 20240601
    panels_per_decade: int = 3
    gl_order: int = 10
    min_panels: int = 4

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameterError(f"dimension must be >= 2, got {self.n}")
        if min(self.m, self.m_polar, self.m_azimuth, self.mc_samples, self.gl_order, self.min_panels) < 1:
            raise InvalidParameterError("quadrature node counts must be positive")

    @property
    def is_monte_carlo(self) -> bool:
        return self.n >= 4

    def sphere_nodes(self):
        """Unit directions (N, n) and weights (N,) summing to the unit sphere area."""
        return _sphere_nodes(self.n, self.m, self.m_polar, self.m_azimuth, self.mc_samples, self.seed)

    def coarsened(self) -> "QuadratureRule":
        """Rule with half the sphere nodes per direction (used for error estimates)."""
        return replace(
            self,
            m=max(1, self.m // 2),
            m_polar=max(1, self.m_polar // 2),
            m_azimuth=max(1, self.m_azimuth // 2),
        )

    def refined(self, factor: int = 2) -> "QuadratureRule":
        return replace(
            self,
            m=self.m * factor,
            m_polar=self.m_polar * factor,
            m_azimuth=self.m_azimuth * factor,
            mc_samples=self.mc_samples * factor * factor,
            panels_per_decade=self.panels_per_decade * factor,
        )

    def radial_nodes(self, r1: float, r2: float):
        return radial_rule(r1, r2, self.panels_per_decade, self.gl_order, self.min_panels)


def _rule_for(x0, rule):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise InvalidInputError("center must be a 1-D vector")
    if rule is None:
        rule = QuadratureRule(len(x0))
    elif rule.n != len(x0):
        raise InvalidInputError(f"rule dimension {rule.n} does not match center dimension {len(x0)}")
    return x0, rule


def radial_rule(r1: float, r2: float, panels_per_decade: int = 3, order: int = 10, min_panels: int = 4):
    """Nodes and weights for ``int_{r1}^{r2} g(r) dr`` on log-spaced panels.

    Gauss-Legendre is applied in ``u = log r`` (the weights include the
    Jacobian ``r``), so power laws are integrated to near machine precision.
    """
    if not (r2 > r1 >= 0):
        raise InvalidParameterError(f"need 0 <= r1 < r2, got ({r1}, {r2})")
    lo = max(float(r1), R_MIN)
    hi = float(r2)
    if hi <= lo:
        return np.empty(0), np.empty(0)
    decades = math.log10(hi / lo)
    npan = max(int(min_panels), int(math.ceil(panels_per_decade * decades)))
    edges = np.log(lo) + (np.log(hi) - np.log(lo)) * np.arange(npan + 1) / npan
    x, w = _gauss_legendre(int(order))
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wu = (half[:, None] * w[None, :]).ravel()
    r = np.exp(u)
    return r, wu * r


# --------------------------------------------------------------------------
# spheres


def _sphere_values(Q, x0, radii, dirs, power=1.0):
    """Q(x0 + r d)**power for every radius (rows) and direction (columns)."""
    radii = np.asarray(radii, dtype=float)
    out = np.empty((len(radii), len(dirs)))
    step = max(1, _CHUNK // max(1, len(dirs)))
    for i in range(0, len(radii), step):
        rr = radii[i : i + step]
        pts = x0[None, None, :] + rr[:, None, None] * dirs[None, :, :]
        vals = np.asarray(Q(pts), dtype=float)
        out[i : i + step] = vals if power == 1.0 else vals**power
    return out


def _check_radii(radii):
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(~np.isfinite(radii)) or np.any(radii <= 0):
        raise InvalidParameterError("sphere radius must be positive and finite")
    return radii


def sphere_means(Q: WeightFunction, x0, radii, rule: QuadratureRule | None = None, return_error: bool = False):
    """Spherical means ``q_{x0}(r)`` for an array of radii.

    With ``return_error`` also returns an error estimate per radius: the
    Monte Carlo standard error for n >= 4, otherwise the change against the
    coarsened rule.
    """
    x0, rule = _rule_for(x0, rule)
    radii = _check_radii(radii)
    dirs, w = rule.sphere_nodes()
    omega = dimension_constants(rule.n).omega
    vals = _sphere_values(Q, x0, radii, dirs)
    means = vals @ w / omega
    if not return_error:
        return means
    if rule.is_monte_carlo:
        err = vals.std(axis=1, ddof=1) / math.sqrt(vals.shape[1])
    else:
        coarse = sphere_means(Q, x0, radii, rule.coarsened())
        err = np.abs(means - coarse)
    return means, err


def sphere_mean(Q: WeightFunction, x0, r: float, rule: QuadratureRule | None = None, return_error: bool = False):
    """Mean value of ``Q`` over the sphere ``|x - x0| = r``."""
    if not (np.isfinite(r) and r > 0):
        raise InvalidParameterError(f"sphere radius must be positive, got {r!r}")
    res = sphere_means(Q, x0, [r], rule, return_error)
    if return_error:
        return float(res[0][0]), float(res[1][0])
    return float(res[0])


def sphere_ls_norms(Q: WeightFunction, x0, radii, s: float, rule: QuadratureRule | None = None, return_error: bool = False):
    """``(int_{S(x0, r)} Q**s dH^{n-1})**(1/s)`` for an array of radii."""
    if not (np.isfinite(s) and s > 0):
        raise InvalidParameterError(f"exponent s must be positive, got {s!r}")
    x0, rule = _rule_for(x0, rule)
    radii = _check_radii(radii)
    dirs, w = rule.sphere_nodes()
    n = rule.n
    vals = _sphere_values(Q, x0, radii, dirs, power=s)
    integrals = (vals @ w) * radii ** (n - 1)
    norms = integrals ** (1.0 / s)
    if not return_error:
        return norms
    if rule.is_monte_carlo:
        se = vals.std(axis=1, ddof=1) / math.sqrt(vals.shape[1]) * dimension_constants(n).omega * radii ** (n - 1)
        # delta method for the 1/s power
        err = norms / s * se / np.where(integrals > 0, integrals, np.inf)
    else:
        err = np.abs(norms - sphere_ls_norms(Q, x0, radii, s, rule.coarsened()))
    return norms, err


def sphere_ls_norm(Q: WeightFunction, x0, r: float, s: float, rule: QuadratureRule | None = None) -> float:
    if not (np.isfinite(r) and r > 0):
        raise InvalidParameterError(f"sphere radius must be positive, got {r!r}")
    return float(sphere_ls_norms(Q, x0, [r], s, rule)[0])


@dataclass
class RadialProfile:
    """Sampled ``r -> q_{x0}(r)`` (kind ``mean``) or ``||Q||_s(r)`` (kind ``ls_norm``)."""

    x0: tuple
    radii: np.ndarray
    values: np.ndarray
    errors: np.ndarray | None = None
    kind: str = "mean"
    s: float | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.errors is not None:
            self.errors = np.asarray(self.errors, dtype=float)
        if self.radii.ndim != 1 or self.radii.shape != self.values.shape:
            raise InvalidInputError("profile radii and values must be 1-D arrays of equal length")
        if np.any(self.radii <= 0) or np.any(np.diff(self.radii) <= 0):
            raise InvalidInputError("profile radii must be positive and strictly ascending")
        if np.any(self.values < 0):
            raise InvalidInputError("profile values must be nonnegative")

    def __call__(self, t):
        """Log-log linear interpolation; zeros interpolate linearly.

        Radii outside the sampled range raise :class:`DomainError`.
        """
        t = np.asarray(t, dtype=float)
        lo, hi = self.radii[0], self.radii[-1]
        if np.any(t < lo * (1 - 1e-12)) or np.any(t > hi * (1 + 1e-12)):
            raise DomainError(f"profile evaluated outside sampled range [{lo:g}, {hi:g}]")
        tc = np.clip(t, lo, hi)
        if np.all(self.values > 0):
            return np.exp(np.interp(np.log(tc), np.log(self.radii), np.log(self.values)))
        return np.interp(tc, self.radii, self.values)

    def to_csv(self, fh=None) -> str:
        """Write columns ``r, value, error_estimate``; returns the text."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["r", "value", "error_estimate"])
        errs = self.errors if self.errors is not None else np.full(len(self.radii), np.nan)
        for r, v, e in zip(self.radii, self.values, errs):
            wr.writerow([repr(float(r)), repr(float(v)), "" if not np.isfinite(e) else repr(float(e))])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def radial_profile(Q: WeightFunction, x0, radii, rule: QuadratureRule | None = None, kind: str = "mean", s: float | None = None) -> RadialProfile:
    x0a, rule = _rule_for(x0, rule)
    radii = np.sort(_check_radii(radii))
    if kind == "mean":
        vals, errs = sphere_means(Q, x0a, radii, rule, return_error=True)
    elif kind == "ls_norm":
        if s is None:
            raise InvalidParameterError("ls_norm profile needs the exponent s")
        vals, errs = sphere_ls_norms(Q, x0a, radii, s, rule, return_error=True)
    else:
        raise InvalidInputError(f"unknown profile kind {kind!r}")
    notes = ["full spheres only: no truncation by a domain boundary"]
    if rule.is_monte_carlo:
        notes.append(f"monte carlo sphere rule, seed={rule.seed}, samples={rule.mc_samples}")
    return RadialProfile(tuple(float(v) for v in x0a), radii, vals, errs, kind, s, notes)


# --------------------------------------------------------------------------
# balls and annuli


def _shell(Q, x0, r1, r2, rule, radial=None, q_power=1.0):
    """(integral, radial nodes, per-node sphere integrals) over r1 < |x - x0| < r2."""
    dirs, w = rule.sphere_nodes()
    r, wr = rule.radial_nodes(r1, r2)
    if len(r) == 0:
        return 0.0, r, np.empty(0)
    vals = _sphere_values(Q, x0, r, dirs, power=q_power)
    sph = (vals @ w) * r ** (rule.n - 1)
    if radial is not None:
        sph = sph * np.asarray(radial(r), dtype=float)
    return float(np.sum(wr * sph)), r, wr * sph


def annulus_integral(
    Q: WeightFunction,
    x0,
    r1: float,
    r2: float,
    rule: QuadratureRule | None = None,
    radial: Callable[[np.ndarray], np.ndarray] | None = None,
    q_power: float = 1.0,
) -> float:
    """``int_{r1 < |x-x0| < r2} Q(x)**q_power * radial(|x-x0|) dm(x)``.

    Product rule: radial Gauss-Legendre panels times the sphere rule.
    """
    if not (np.isfinite(r1) and np.isfinite(r2) and 0 <= r1 < r2):
        raise InvalidParameterError(f"annulus needs 0 <= r1 < r2, got ({r1}, {r2})")
    x0, rule = _rule_for(x0, rule)
    return _shell(Q, x0, r1, r2, rule, radial, q_power)[0]


def shell_integrals(Q, x0, edges, rule=None, radial=None, q_power=1.0) -> np.ndarray:
    """Annulus integrals over consecutive shells ``(edges[i], edges[i+1])``.

    ``edges`` may be ascending or descending; each shell is integrated
    between its smaller and larger edge.
    """
    x0, rule = _rule_for(x0, rule)
    edges = np.asarray(edges, dtype=float)
    out = np.empty(len(edges) - 1)
    for i in range(len(edges) - 1):
        a, b = sorted((edges[i], edges[i + 1]))
        out[i] = annulus_integral(Q, x0, a, b, rule, radial, q_power) if b > a else 0.0
    return out


def ball_mean_oscillation(Q: WeightFunction, x0, eps: float, rule: QuadratureRule | None = None) -> float:
    """Mean absolute deviation of ``Q`` from its ball average on ``B(x0, eps)``.

    Both passes use the same node set.  Returns ``nan`` (integrability
    failure) when the quadrature produces non-finite values or when the
    innermost decade of radii carries a non-negligible share of the
    integral, which signals a non-integrable singularity at the center.
    """
    if not (np.isfinite(eps) and eps > 0):
        raise InvalidParameterError(f"ball radius must be positive, got {eps!r}")
    x0, rule = _rule_for(x0, rule)
    dirs, w = rule.sphere_nodes()
    r, wr = rule.radial_nodes(0.0, eps)
    vals = _sphere_values(Q, x0, r, dirs)
    if not np.all(np.isfinite(vals)):
        return float("nan")
    W = (wr * r ** (rule.n - 1))[:, None] * w[None, :]
    vol = W.sum()
    # shifted mean: exact for constants
    v0 = vals.flat[0]
    dev = vals - v0
    mean_shift = float(np.sum(W * dev) / vol)
    absint = np.sum(W * np.abs(vals), axis=1)
    total = absint.sum()
    core = absint[r < 10 * R_MIN].sum()
    if total > 0 and core > _CORE_FRACTION * total:
        return float("nan")
    osc = float(np.sum(W * np.abs(dev - mean_shift)) / vol)
    return osc if np.isfinite(osc) else float("nan")
