"""Classifiers and identities for the analytic extension hypotheses.

Improper integrals are split on a dyadic ladder; each rung increment is
integrated by Gauss-Legendre in ``log t``.  Convergence is decided by a
Raabe-type statistic on the increments, boundedness of sequences by a
least-squares slope against ``log log(1/eps)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .diffcore import dimension_constants
from .errors import DomainError, InvalidInputError, InvalidParameterError
from .mappings import MappingModel, dilatation_field
from .sphquad import (
    QuadratureRule,
    RadialProfile,
    WeightFunction,
    annulus_integral,
    ball_mean_oscillation,
    radial_rule,
    shell_integrals,
    sphere_means,
)

__all__ = [
    "CONVERGENT",
    "DIVERGENT",
    "INCONCLUSIVE",
    "NOT_APPLICABLE",
    "BOUNDED",
    "UNBOUNDED",
    "LadderSettings",
    "CriterionVerdict",
    "OrliczFunction",
    "TestWeight",
    "TwinVerdict",
    "ExtremalWeight",
    "IdentityCheck",
    "ExtensionScenario",
    "ExtensionReport",
    "derive_alpha",
    "dyadic_ladder",
    "classify_increments",
    "classify_boundedness",
    "calderon_test",
    "divergence_pair_test",
    "loglog_majorant_check",
    "fmo_diagnostic",
    "fmo_loglog_bound",
    "little_o_test",
    "extremal_weight",
    "lower_bound_identity_check",
    "ring_upper_bound",
    "ring_upper_bound_extremal",
    "extension_report",
]

CONVERGENT = "convergent"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"
NOT_APPLICABLE = "not-applicable"
BOUNDED = "bounded"
UNBOUNDED = "unbounded"

_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class LadderSettings:
    """Thresholds for ladder classification.

    Increment ladders: divergent when the Raabe statistic stays at or below
    ``raabe_div`` over the last ``window`` rungs (or a rung is infinite);
    convergent when it stays at or above ``raabe_conv`` and the estimated
    tail is below ``tail_rtol`` of the partial sum.  Sequences: bounded when
    the slope of ``log(value)`` against ``log log(1/eps)`` is at most
    ``slope_bounded`` (and the fit residual is at most ``max_residual``),
    unbounded when it is at least ``slope_unbounded``.
    """

    depth: int = 24
    window: int = 6
    min_rungs: int = 4
    raabe_div: float = 1.1
    raabe_conv: float = 1.5
    tail_rtol: float = 0.05
    slope_bounded: float = 0.05
    slope_unbounded: float = 0.2
    max_residual: float = 0.25
    gl_order: int = 20


DEFAULT_LADDER = LadderSettings()


@dataclass
class CriterionVerdict:
    """Classification with the numeric evidence behind it."""

    name: str
    classification: str
    value: float | None = None
    ladder: list = field(default_factory=list)
    fit: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "classification": self.classification,
            "value": self.value,
            "fit": dict(self.fit),
            "notes": list(self.notes),
            "ladder": [dict(r) for r in self.ladder],
        }


def derive_alpha(n: int, p: float | None = None, alpha: float | None = None) -> float:
    """``alpha = p / (p - n + 1)``; a directly given alpha must agree with p."""
    if p is None and alpha is None:
        raise InvalidParameterError("need p or alpha")
    if p is not None:
        if not (n - 1 < p <= n):
            raise InvalidParameterError(f"p must lie in (n-1, n] = ({n - 1}, {n}], got {p}")
        a = p / (p - n + 1)
        if alpha is not None and not math.isclose(a, alpha, rel_tol=1e-12):
            raise InvalidParameterError(f"alpha={alpha} inconsistent with p={p}: p/(p-n+1) = {a}")
        return a
    if not alpha > 1:
        raise InvalidParameterError(f"alpha must exceed 1, got {alpha}")
    return float(alpha)


def dyadic_ladder(eps0: float, depth: int, start: int = 1) -> np.ndarray:
    """``eps0 * 2**-k`` for ``k = start..depth``."""
    return eps0 * 2.0 ** -np.arange(start, depth + 1, dtype=float)


# --------------------------------------------------------------------------
# generic classifiers


def _rung_integral(g: Callable, a: float, b: float, order: int) -> float:
    """``int_a^b g(t) dt`` by Gauss-Legendre in ``u = log t``."""
    x, w = np.polynomial.legendre.leggauss(order)
    ua, ub = math.log(a), math.log(b)
    u = 0.5 * (ua + ub) + 0.5 * (ub - ua) * x
    t = np.exp(u)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.asarray(g(t), dtype=float) * t
    if np.any(np.isnan(vals)):
        return math.nan
    if np.any(np.isinf(vals)):
        return math.inf
    return float(0.5 * (ub - ua) * np.dot(w, vals))


def classify_increments(lowers, uppers, increments, settings: LadderSettings = DEFAULT_LADDER, name: str = "ladder") -> CriterionVerdict:
    """Classify ``sum(increments)`` as convergent, divergent or inconclusive.

    Rungs are ordered toward the singular end.  For each pair of consecutive
    rungs the Raabe statistic ``R_k = m_k * (D_k / D_{k+1} - 1)`` is formed
    with ``m_k = |log t_k| / log 2`` at the geometric rung midpoint ``t_k``:
    geometric growth gives ``R <= 0``, ``D ~ 1/m`` gives ``R -> 1`` and
    geometric decay gives ``R`` growing linearly in ``m``.
    """
    lowers = np.asarray(lowers, dtype=float)
    uppers = np.asarray(uppers, dtype=float)
    D = np.asarray(increments, dtype=float)
    K = len(D)
    partial = np.cumsum(np.where(np.isfinite(D), D, np.inf)) if K else np.empty(0)
    mid = np.sqrt(lowers * uppers)
    m = np.abs(np.log(mid)) / _LOG2
    ratio = np.full(K, np.nan)
    raabe = np.full(K, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio[1:] = D[1:] / D[:-1]
        raabe[:-1] = m[:-1] * (D[:-1] / D[1:] - 1.0)
    rows = []
    for k in range(K):
        rows.append({
            "k": k + 1,
            "lower": float(lowers[k]),
            "upper": float(uppers[k]),
            "increment": float(D[k]),
            "partial": float(partial[k]),
            "ratio": float(ratio[k]),
            "raabe": float(raabe[k]),
        })
    v = CriterionVerdict(name, INCONCLUSIVE, ladder=rows)
    if np.any(np.isnan(D)):
        v.notes.append("non-numeric increments on some rungs")
    if np.any(np.isposinf(D)):
        v.classification = DIVERGENT
        v.value = math.inf
        v.notes.append("integrand infinite on a rung: divergent by infinity")
        return v
    resolved = np.isfinite(D) & (D > 0)
    W = settings.window
    if K >= W and np.all(D[-W:] == 0):
        v.classification = CONVERGENT
        v.value = float(partial[-1])
        v.fit = {"raabe_mean": math.inf, "raabe_spread": 0.0, "tail_estimate": 0.0}
        v.notes.append("integrand vanishes on the last rungs")
        return v
    if resolved.sum() < settings.min_rungs or K < W + 1:
        v.notes.append(f"only {int(resolved.sum())} resolved rungs")
        return v
    Rw = raabe[K - 1 - W : K - 1]
    if np.any(~np.isfinite(Rw)):
        v.notes.append("unresolved Raabe statistics in the classification window")
        return v
    Rbar = float(Rw.mean())
    tail = math.inf
    if Rbar > 1.0:
        tail = float(D[-1] * m[-1] / (Rbar - 1.0))
    v.fit = {
        "raabe_mean": Rbar,
        "raabe_spread": float(Rw.max() - Rw.min()),
        "tail_estimate": tail,
        "ratio_mean": float(np.nanmean(ratio[-W:])),
    }
    if np.all(Rw <= settings.raabe_div):
        v.classification = DIVERGENT
        v.value = math.inf
    elif np.all(Rw >= settings.raabe_conv) and tail <= settings.tail_rtol * abs(partial[-1]):
        v.classification = CONVERGENT
        v.value = float(partial[-1] + tail)
    else:
        v.value = float(partial[-1])
        v.notes.append("Raabe statistics between thresholds or tail too large")
    return v


def classify_boundedness(eps, values, settings: LadderSettings = DEFAULT_LADDER) -> dict:
    """Slope of ``log(value)`` against ``log log(1/eps)`` and its verdict.

    Returns a dict with ``classification`` (bounded/unbounded/inconclusive),
    ``slope``, ``residual`` (RMS of the fit) and ``resolved`` rung count.
    Sequences that are identically zero are bounded.
    """
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(values, dtype=float)
    ok = np.isfinite(vals) & (eps > 0) & (eps < 1.0)
    out = {"classification": INCONCLUSIVE, "slope": math.nan, "residual": math.nan, "resolved": int(ok.sum())}
    if ok.sum() < settings.min_rungs:
        return out
    v = vals[ok]
    if np.all(v == 0):
        out.update(classification=BOUNDED, slope=0.0, residual=0.0)
        return out
    if np.any(v < 0):
        v = np.abs(v)
    floor = v.max() * 1e-300
    X = np.log(np.log(1.0 / eps[ok]))
    Y = np.log(np.maximum(v, floor))
    A = np.column_stack([np.ones_like(X), X])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    slope = float(coef[1])
    resid = float(np.sqrt(np.mean((A @ coef - Y) ** 2)))
    out.update(slope=slope, residual=resid)
    if slope >= settings.slope_unbounded:
        out["classification"] = UNBOUNDED
    elif slope <= settings.slope_bounded and resid <= settings.max_residual:
        out["classification"] = BOUNDED
    return out


# --------------------------------------------------------------------------
# Orlicz functions and the Calderon condition


class OrliczFunction:
    """Nondecreasing ``phi: [0, inf) -> [0, inf)``.

    Kinds: ``power`` (``t**q``), ``product`` (``t**q * log(e + t)**a``) and
    ``table`` (piecewise linear through given points; evaluation beyond the
    last point raises :class:`DomainError`).
    """

    def __init__(self, kind: str, q: float = 1.0, a: float = 0.0, t=None, values=None):
        self.kind = kind
        self.q = float(q)
        self.a = float(a)
        if kind == "table":
            self.t = np.asarray(t, dtype=float)
            self.values = np.asarray(values, dtype=float)
            if self.t.ndim != 1 or self.t.shape != self.values.shape or len(self.t) < 2:
                raise InvalidInputError("table phi needs matching 1-D arrays with >= 2 points")
            if np.any(np.diff(self.t) <= 0):
                raise InvalidInputError("table phi abscissae must be strictly increasing")
        elif kind not in ("power", "product"):
            raise InvalidInputError(f"unknown Orlicz function kind {kind!r}")
        if kind != "table" and self.q < 0:
            raise InvalidInputError("negative exponent gives a decreasing phi")

    @classmethod
    def power(cls, q: float) -> "OrliczFunction":
        return cls("power", q=q)

    @classmethod
    def from_spec(cls, spec: dict) -> "OrliczFunction":
        kind = spec.get("kind")
        if kind == "table":
            return cls("table", t=spec["t"], values=spec["values"])
        return cls(kind, q=spec.get("q", 1.0), a=spec.get("a", 0.0))

    def to_spec(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "t": self.t.tolist(), "values": self.values.tolist()}
        if self.kind == "power":
            return {"kind": "power", "q": self.q}
        return {"kind": "product", "q": self.q, "a": self.a}

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return t**self.q
        if self.kind == "product":
            return t**self.q * np.log(math.e + t) ** self.a
        if np.any(t < self.t[0]) or np.any(t > self.t[-1]):
            raise DomainError("table phi evaluated outside its abscissae")
        return np.interp(t, self.t, self.values)

    def validate(self, t_max: float) -> None:
        """Check nonnegativity and monotonicity on a sample grid up to ``t_max``."""
        if self.kind == "table":
            grid = np.concatenate([self.t, np.linspace(self.t[0], self.t[-1], 257)])
            grid.sort()
        else:
            grid = np.concatenate([[0.0], np.geomspace(1e-6, t_max, 2001)])
        v = self(grid)
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise InvalidInputError("phi must be finite and nonnegative")
        if np.any(np.diff(v) < -1e-12 * np.abs(v[1:])):
            raise InvalidInputError("phi is not nondecreasing")


def calderon_test(phi: OrliczFunction, n: int, settings: LadderSettings = DEFAULT_LADDER) -> CriterionVerdict:
    """``int_1^inf (t / phi(t))**(1/(n-2)) dt`` on the ladder ``T = 2**k``.

    For n = 2 the condition is not required and a not-applicable verdict is
    returned.
    """
    if n < 2:
        raise InvalidParameterError(f"dimension must be >= 2, got {n}")
    if n == 2:
        return CriterionVerdict("calderon", NOT_APPLICABLE, notes=["condition not required in the plane"])
    T = 2.0 ** np.arange(0, settings.depth + 1)
    phi.validate(float(T[-1]))
    e = 1.0 / (n - 2)

    def g(t):
        with np.errstate(divide="ignore"):
            return (t / phi(t)) ** e

    D = [_rung_integral(g, T[k], T[k + 1], settings.gl_order) for k in range(settings.depth)]
    v = classify_increments(T[:-1], T[1:], D, settings, name="calderon")
    v.notes.append(f"integrand (t/phi(t))^(1/{n - 2}) on [1, 2^k], k = 1..{settings.depth}")
    return v


# --------------------------------------------------------------------------
# the twin integral criterion and the log-log route


def _as_q(q, n=None):
    if isinstance(q, RadialProfile):
        if q.kind != "mean":
            raise InvalidInputError("twin criterion needs a spherical-mean profile")
        return q
    if callable(q):
        return q
    raise InvalidInputError("q must be a RadialProfile or a vectorized callable")


@dataclass
class TwinVerdict:
    """Finite-part and divergence-part verdicts of the twin integral criterion."""

    finite: CriterionVerdict
    divergence: CriterionVerdict

    @property
    def status(self) -> str:
        if self.finite.classification == DIVERGENT or self.divergence.classification == CONVERGENT:
            return "not satisfied"
        if self.finite.classification == CONVERGENT and self.divergence.classification == DIVERGENT:
            return "satisfied"
        return INCONCLUSIVE

    def __iter__(self):
        return iter((self.finite, self.divergence))

    def to_dict(self) -> dict:
        return {"status": self.status, "finite": self.finite.to_dict(), "divergence": self.divergence.to_dict()}


def divergence_pair_test(q, n: int, alpha: float, eps0: float, settings: LadderSettings = DEFAULT_LADDER) -> TwinVerdict:
    """Twin integral criterion for ``dt / (t**((n-1)/(alpha-1)) q(t)**(1/(alpha-1)))``.

    The finite part holds when every rung increment down to the deepest
    ``eps`` is finite; the divergence part classifies the full integral as
    ``eps -> 0``.  ``q`` is a spherical-mean profile or a vectorized callable.
    """
    if not alpha > 1:
        raise InvalidParameterError(f"alpha must exceed 1, got {alpha}")
    if not eps0 > 0:
        raise InvalidParameterError("eps0 must be positive")
    qf = _as_q(q)
    a = (n - 1) / (alpha - 1)
    b = 1.0 / (alpha - 1)

    def g(t):
        qt = np.asarray(qf(t), dtype=float)
        with np.errstate(divide="ignore"):
            return 1.0 / (t**a * qt**b)

    edges = eps0 * 2.0 ** -np.arange(0, settings.depth + 1, dtype=float)
    D = [_rung_integral(g, edges[k + 1], edges[k], settings.gl_order) for k in range(settings.depth)]
    div = classify_increments(edges[1:], edges[:-1], D, settings, name="twin-divergence")
    D = np.asarray(D)
    partial = np.cumsum(D)
    fin = CriterionVerdict(
        "twin-finite",
        CONVERGENT if np.all(np.isfinite(D)) else DIVERGENT,
        value=float(partial[-1]) if np.all(np.isfinite(D)) else math.inf,
        ladder=[{"eps": float(edges[k + 1]), "integral": float(partial[k])} for k in range(len(D))],
    )
    if np.any(np.isinf(D)):
        fin.notes.append("q vanishes on some rungs: integrand infinite")
        div.notes.append("q vanishes on some rungs")
    return TwinVerdict(fin, div)


def loglog_majorant_check(q, n: int, eps0: float, settings: LadderSettings = DEFAULT_LADDER) -> CriterionVerdict:
    """Ratios ``q(r) / log(1/r)**(n-1)`` on the ladder and their boundedness."""
    if not (0 < eps0 < 1):
        raise InvalidParameterError("log-log check needs radii below 1")
    qf = _as_q(q)
    r = dyadic_ladder(eps0, settings.depth)
    ratios = np.asarray(qf(r), dtype=float) / np.log(1.0 / r) ** (n - 1)
    fit = classify_boundedness(r, ratios, settings)
    return CriterionVerdict(
        "loglog",
        fit["classification"],
        value=float(np.max(ratios)),
        ladder=[{"r": float(a), "ratio": float(b)} for a, b in zip(r, ratios)],
        fit={k: fit[k] for k in ("slope", "residual", "resolved")},
    )


# --------------------------------------------------------------------------
# finite mean oscillation

FMO_POSITIVE = "FMO-positive"
FMO_NEGATIVE = "FMO-negative"


def _default_depth(rule, settings):
    return min(settings.depth, 16) if rule is not None and rule.is_monte_carlo else settings.depth


def fmo_diagnostic(Q: WeightFunction, x0, eps: Sequence[float] | None = None, rule: QuadratureRule | None = None,
                   eps0: float = 0.5, settings: LadderSettings = DEFAULT_LADDER) -> CriterionVerdict:
    """Ball mean oscillation of ``Q`` on a shrinking ladder and an FMO verdict.

    ``eps`` defaults to ``eps0 * 2**-k``, ``k = 1..24`` (16 for Monte Carlo
    spheres).  An integrability failure at any rung gives FMO-negative.
    """
    x0 = np.asarray(x0, dtype=float)
    if rule is None:
        rule = QuadratureRule(len(x0))
    if eps is None:
        eps = dyadic_ladder(eps0, _default_depth(rule, settings))
    eps = np.asarray(eps, dtype=float)
    osc = np.array([ball_mean_oscillation(Q, x0, e, rule) for e in eps])
    ladder = [{"eps": float(e), "oscillation": float(o)} for e, o in zip(eps, osc)]
    if np.any(np.isnan(osc)):
        return CriterionVerdict("fmo", FMO_NEGATIVE, value=math.inf, ladder=ladder,
                                notes=["integrability failure at some rungs"])
    fit = classify_boundedness(eps, osc, settings)
    cls = {BOUNDED: FMO_POSITIVE, UNBOUNDED: FMO_NEGATIVE}.get(fit["classification"], INCONCLUSIVE)
    W = min(settings.window, len(osc))
    return CriterionVerdict("fmo", cls, value=float(np.max(osc[-W:])), ladder=ladder,
                            fit={k: fit[k] for k in ("slope", "residual", "resolved")})


def fmo_loglog_bound(Q: WeightFunction, x0, e0: float, rule: QuadratureRule | None = None,
                     settings: LadderSettings = DEFAULT_LADDER, depth: int | None = None) -> CriterionVerdict:
    """``LHS(eps) / log log(1/eps)`` with
    ``LHS(eps) = int_{eps<|x-x0|<e0} Q(x) / (|x-x0| log(1/|x-x0|))**n dm``.

    Rungs with ``log log(1/eps) <= 0`` are skipped.  ``fit["band"]`` is the
    max/min ratio over the resolved rungs.
    """
    if not (0 < e0 < 1):
        raise InvalidParameterError("e0 must lie in (0, 1)")
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if rule is None:
        rule = QuadratureRule(n)
    depth = depth or _default_depth(rule, settings)
    edges = e0 * 2.0 ** -np.arange(0, depth + 1, dtype=float)
    shells = shell_integrals(Q, x0, edges, rule, radial=lambda r: (r * np.log(1.0 / r)) ** (-float(n)))
    lhs = np.cumsum(shells)
    eps = edges[1:]
    ll = np.log(np.log(1.0 / eps))
    ok = ll > 0
    ratio = np.where(ok, lhs / np.where(ok, ll, 1.0), np.nan)
    notes = []
    if not np.all(ok):
        notes.append(f"{int((~ok).sum())} rungs with log log(1/eps) <= 0 skipped")
    fit = classify_boundedness(eps[ok], ratio[ok], settings)
    rr = ratio[ok]
    band = float(rr.max() / rr.min()) if len(rr) and rr.min() > 0 else math.inf
    return CriterionVerdict(
        "fmo-loglog",
        fit["classification"],
        value=float(np.nanmax(ratio)) if np.any(ok) else None,
        ladder=[{"eps": float(e), "lhs": float(a), "ratio": float(b)} for e, a, b in zip(eps, lhs, ratio)],
        fit={"slope": fit["slope"], "residual": fit["residual"], "resolved": fit["resolved"], "band": band},
        notes=notes,
    )


class TestWeight:
    """Radial test function ``psi`` on ``(0, eps0)``.

    ``default``: ``1 / (t log(1/t))**(n/alpha)``; ``power``: ``t**-a``;
    ``constant``: ``c``.
    """

    __test__ = False  # not a pytest class

    def __init__(self, kind: str = "default", a: float = 1.0, c: float = 1.0):
        if kind not in ("default", "power", "constant"):
            raise InvalidInputError(f"unknown test weight kind {kind!r}")
        self.kind, self.a, self.c = kind, float(a), float(c)

    @classmethod
    def from_spec(cls, spec: dict | None) -> "TestWeight":
        if not spec:
            return cls()
        return cls(spec.get("kind", "default"), spec.get("a", 1.0), spec.get("c", 1.0))

    def to_spec(self) -> dict:
        return {"kind": self.kind, "a": self.a, "c": self.c}

    def bind(self, n: int, alpha: float) -> Callable[[np.ndarray], np.ndarray]:
        if self.kind == "default":
            e = n / alpha
            return lambda t: (t * np.log(1.0 / t)) ** (-e)
        if self.kind == "power":
            return lambda t: t ** (-self.a)
        return lambda t: np.full_like(np.asarray(t, dtype=float), self.c)


def little_o_test(Q: WeightFunction, x0, alpha: float, s: float, eps0: float, psi: TestWeight | None = None,
                  rule: QuadratureRule | None = None, settings: LadderSettings = DEFAULT_LADDER,
                  depth: int | None = None) -> CriterionVerdict:
    """``R(eps) = int_{eps<|x-x0|<eps0} Q**s psi**alpha dm / I(eps, eps0)**alpha``.

    ``I(eps, eps0) = int_eps^eps0 psi``.  Not applicable when ``I`` stays
    bounded as ``eps -> 0``.  The verdict is ``convergent`` (R -> 0) when the
    slope of ``log R`` against ``log I`` is at most ``-0.2``; that slope is
    reported as ``rate_exponent`` (``1 - alpha`` for an FMO majorant with the
    default ``psi``).  Pass ``s = 1`` when ``Q`` is a dilatation majorant
    rather than a lower-Q weight.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if rule is None:
        rule = QuadratureRule(n)
    if not (0 < eps0 < 1):
        raise InvalidParameterError("eps0 must lie in (0, 1)")
    psi = psi or TestWeight()
    pf = psi.bind(n, alpha)
    depth = depth or _default_depth(rule, settings)
    edges = eps0 * 2.0 ** -np.arange(0, depth + 1, dtype=float)
    dI = np.array([_rung_integral(pf, edges[k + 1], edges[k], settings.gl_order) for k in range(depth)])
    Iv = classify_increments(edges[1:], edges[:-1], dI, settings, name="psi-integral")
    I = np.cumsum(dI)
    notes = []
    if Iv.classification != DIVERGENT:
        return CriterionVerdict("little-o", NOT_APPLICABLE, fit=dict(Iv.fit),
                                ladder=[{"eps": float(e), "I": float(i)} for e, i in zip(edges[1:], I)],
                                notes=[f"I(eps, eps0) does not diverge ({Iv.classification})"])
    shells = shell_integrals(Q, x0, edges, rule, radial=lambda r: pf(r) ** alpha, q_power=s)
    num = np.cumsum(shells)
    good = np.isfinite(I) & (I > 0) & np.isfinite(num)
    if not np.all(good):
        notes.append(f"{int((~good).sum())} rungs skipped (I zero or non-finite)")
    R = np.where(good, num / np.where(good, I, 1.0) ** alpha, np.nan)
    ladder = [{"eps": float(e), "I": float(i), "numerator": float(a), "ratio": float(r)}
              for e, i, a, r in zip(edges[1:], I, num, R)]
    x = np.log(I[good])
    y = np.log(R[good])
    cls = INCONCLUSIVE
    slope = resid = math.nan
    if good.sum() >= settings.min_rungs and np.all(R[good] > 0):
        A = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        slope = float(coef[1])
        resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
        if slope <= -4 * settings.slope_bounded:
            cls = CONVERGENT
        elif slope >= -settings.slope_bounded:
            cls = DIVERGENT
    Rg = R[good]
    return CriterionVerdict(
        "little-o", cls, value=float(Rg[-1]) if len(Rg) else None, ladder=ladder,
        fit={"rate_exponent": slope, "residual": resid, "expected_fmo_rate": 1.0 - alpha,
             "monotone_decreasing": bool(len(Rg) > 1 and np.all(np.diff(Rg) < 0))},
        notes=notes,
    )


# --------------------------------------------------------------------------
# extremal weight and the ring bound


@dataclass
class ExtremalWeight:
    """``eta0(r) = 1 / (I r**((n-1)/(p-1)) q(r)**(1/(p-1)))`` on ``(r1, r2)``."""

    I: float
    n: int
    p: float
    r1: float
    r2: float
    radii: np.ndarray
    values: np.ndarray
    q: Callable = field(repr=False)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        qr = np.asarray(self.q(r), dtype=float)
        return 1.0 / (self.I * r ** ((self.n - 1) / (self.p - 1)) * qr ** (1.0 / (self.p - 1)))

    def normalization(self) -> float:
        """``int_{r1}^{r2} eta0`` by adaptive quadrature (independent of the nodes used for I)."""
        val, _ = integrate.quad(lambda r: float(self(np.array([r]))[0]), self.r1, self.r2,
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        return float(val)


def extremal_weight(q, n: int, p: float, r1: float, r2: float, rule: QuadratureRule | None = None) -> ExtremalWeight:
    """Extremal radial weight for the spherical-mean profile ``q``."""
    if not p > 1:
        raise InvalidParameterError(f"p must exceed 1, got {p}")
    if not (0 < r1 < r2):
        raise InvalidParameterError(f"need 0 < r1 < r2, got ({r1}, {r2})")
    qf = _as_q(q)
    rule = rule or QuadratureRule(n)
    r, w = radial_rule(r1, r2, max(rule.panels_per_decade, 8), rule.gl_order, max(rule.min_panels, 8))
    qr = np.asarray(qf(r), dtype=float)
    if np.any(~np.isfinite(qr)) or np.any(qr <= 0):
        raise InvalidInputError("spherical mean must be positive and finite on [r1, r2]")
    g = 1.0 / (r ** ((n - 1) / (p - 1)) * qr ** (1.0 / (p - 1)))
    I = float(np.dot(w, g))
    return ExtremalWeight(I=I, n=n, p=float(p), r1=float(r1), r2=float(r2), radii=r, values=g / I, q=qf)


def _check_normalized(eta, r1, r2, tol=1e-6, label="eta"):
    val, _ = integrate.quad(lambda r: float(np.asarray(eta(np.array([r])), dtype=float)[0]), r1, r2,
                            epsabs=1e-13, epsrel=1e-11, limit=400)
    if not abs(val - 1.0) <= tol:
        raise InvalidInputError(f"{label} is not normalized on ({r1}, {r2}): integral = {val!r}, defect = {val - 1.0:+.3e}")
    return val


@dataclass
class IdentityCheck:
    lhs: float
    rhs0: float
    rel_error: float
    rhs_alternatives: list
    min_excess: float | None
    I: float
    normalization: float

    @property
    def inequality_holds(self) -> bool:
        return all(r >= self.rhs0 - 1e-8 * max(1.0, abs(self.rhs0)) for r in self.rhs_alternatives)

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs, "rhs0": self.rhs0, "rel_error": self.rel_error,
            "rhs_alternatives": list(self.rhs_alternatives), "min_excess": self.min_excess,
            "I": self.I, "normalization": self.normalization, "inequality_holds": self.inequality_holds,
        }


def _sphere_profile(Q, x0, rule, power=1.0):
    if power == 1.0:
        return lambda r: sphere_means(Q, x0, np.atleast_1d(r), rule)
    Qs = _PowerOf(Q, power)
    return lambda r: sphere_means(Qs, x0, np.atleast_1d(r), rule)


class _PowerOf(WeightFunction):
    def __init__(self, Q, s):
        self.Q, self.s = Q, s

    def __call__(self, x):
        return np.asarray(self.Q(x), dtype=float) ** self.s


def lower_bound_identity_check(Q: WeightFunction, x0, p: float, r1: float, r2: float,
                               etas: Sequence[Callable] = (), rule: QuadratureRule | None = None) -> IdentityCheck:
    """``omega / I**(p-1)`` against ``int_A Q eta0**p dm`` and alternative weights.

    Each alternative must integrate to 1 over ``(r1, r2)``, otherwise
    :class:`InvalidInputError` is raised naming the defect.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    rule = rule or QuadratureRule(n)
    for i, eta in enumerate(etas):
        _check_normalized(eta, r1, r2, label=f"alternative weight #{i}")
    ew = extremal_weight(_sphere_profile(Q, x0, rule), n, p, r1, r2, rule)
    omega = dimension_constants(n).omega
    lhs = omega / ew.I ** (p - 1)
    rhs0 = annulus_integral(Q, x0, r1, r2, rule, radial=lambda r: ew(r) ** p)
    rhs = [annulus_integral(Q, x0, r1, r2, rule, radial=lambda r, e=eta: np.asarray(e(r), dtype=float) ** p)
           for eta in etas]
    return IdentityCheck(
        lhs=lhs, rhs0=rhs0, rel_error=abs(lhs - rhs0) / abs(lhs), rhs_alternatives=rhs,
        min_excess=(min(rhs) - rhs0) if rhs else None, I=ew.I, normalization=ew.normalization(),
    )


def ring_upper_bound(Q: WeightFunction, x0, p: float, eps: float, eps1: float, eta: Callable,
                     rule: QuadratureRule | None = None) -> float:
    """``int_{A(x0, eps, eps1)} Q**((n-1)/(p-n+1)) eta(|x-x0|)**alpha dm``, ``alpha = p/(p-n+1)``.

    ``eta`` must integrate to 1 over ``(eps, eps1)``.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    alpha = derive_alpha(n, p=p)
    s = (n - 1) / (p - n + 1)
    _check_normalized(eta, eps, eps1)
    return annulus_integral(Q, x0, eps, eps1, rule, radial=lambda r: np.asarray(eta(r), dtype=float) ** alpha, q_power=s)


def ring_upper_bound_extremal(Q: WeightFunction, x0, p: float, eps: float, eps1: float,
                              rule: QuadratureRule | None = None):
    """Ring bound with the extremal weight built from the ``Q**s`` profile.

    Returns ``(bound, omega / I**(alpha-1), eta0)``; the first two agree.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    rule = rule or QuadratureRule(n)
    alpha = derive_alpha(n, p=p)
    s = (n - 1) / (p - n + 1)
    ew = extremal_weight(_sphere_profile(Q, x0, rule, power=s), n, alpha, eps, eps1, rule)
    bound = ring_upper_bound(Q, x0, p, eps, eps1, ew, rule)
    return bound, dimension_constants(n).omega / ew.I ** (alpha - 1), ew


# --------------------------------------------------------------------------
# composite report


@dataclass
class ExtensionScenario:
    """Inputs of the composite extension report."""

    n: int
    weight: WeightFunction
    alpha: float
    x0: Sequence[float] | None = None
    mapping: MappingModel | None = None
    phi: OrliczFunction | None = None
    eps0: float = 0.5
    routes: Sequence[str] = ("twin", "fmo", "loglog")
    sample_r_in: float | None = None
    sample_r_out: float | None = None
    n_radial: int = 8
    n_angular: int = 16
    rule: QuadratureRule | None = None
    settings: LadderSettings = DEFAULT_LADDER


DECLARED_HYPOTHESES = [
    "mapping is open, discrete and closed",
    "mapping is bounded",
    "domain is locally connected at every boundary point",
    "image boundary is strongly accessible with respect to the alpha-modulus (constant delta)",
    "multiplicity N(f, D) is finite",
]


@dataclass
class ExtensionReport:
    items: dict
    overall: str
    declared_by_user: list

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "items": {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in self.items.items()},
            "declared_by_user": list(self.declared_by_user),
        }


def extension_report(sc: ExtensionScenario) -> ExtensionReport:
    """Hypothesis checklist for continuous extension at ``x0``.

    Calderon condition (n >= 3), sampled domination ``K_{I,alpha} <= Q``
    and at least one of: twin integral criterion, FMO, log-log growth of
    the spherical mean.  Topological and accessibility hypotheses are
    listed as declared by the user.
    """
    n = sc.n
    if sc.weight is None or sc.alpha is None:
        raise InvalidInputError("scenario needs a weight and alpha")
    x0 = np.zeros(n) if sc.x0 is None else np.asarray(sc.x0, dtype=float)
    rule = sc.rule or QuadratureRule(n)
    st = sc.settings
    items: dict = {}
    blockers, unknown = [], []

    if n >= 3:
        if sc.phi is None:
            raise InvalidInputError("n >= 3 needs an Orlicz function phi")
        cal = calderon_test(sc.phi, n, st)
    else:
        cal = CriterionVerdict("calderon", NOT_APPLICABLE, notes=["omitted in the plane"])
    items["calderon"] = cal
    if cal.classification == DIVERGENT:
        blockers.append("calderon")
    elif cal.classification == INCONCLUSIVE:
        unknown.append("calderon")

    if sc.mapping is not None:
        r_out = sc.sample_r_out or sc.eps0
        r_in = sc.sample_r_in or r_out * 2.0 ** -10
        fld = dilatation_field(sc.mapping, x0, r_in, r_out, sc.alpha, sc.n_radial, sc.n_angular)
        Qv = np.asarray(sc.weight(fld.points), dtype=float)
        K = fld.values
        ok = K <= Qv * (1 + 1e-9) + 1e-12
        dom = CriterionVerdict(
            "sampled-domination", "holds" if np.all(ok) else "fails",
            value=float(np.max(K - Qv)),
            fit={"samples": int(len(K)), "violations": int((~ok).sum()), "K_max": fld.K_max,
                 "K_mean": fld.K_mean, "any_infinite": fld.any_infinite},
            notes=["checked on the sampling lattice only"],
        )
        if not np.all(ok):
            blockers.append("domination")
    else:
        dom = CriterionVerdict("sampled-domination", "declared", notes=["no mapping given: Q is a declared majorant"])
    items["domination"] = dom

    q = _sphere_profile(sc.weight, x0, rule)
    route_status = {}
    for route in sc.routes:
        try:
            if route == "twin":
                tv = divergence_pair_test(q, n, sc.alpha, sc.eps0, st)
                items["twin"] = tv
                route_status["twin"] = tv.status
            elif route == "fmo":
                fv = fmo_diagnostic(sc.weight, x0, rule=rule, eps0=sc.eps0, settings=st)
                items["fmo"] = fv
                route_status["fmo"] = {FMO_POSITIVE: "satisfied", FMO_NEGATIVE: "not satisfied"}.get(fv.classification, INCONCLUSIVE)
            elif route == "loglog":
                lv = loglog_majorant_check(q, n, min(sc.eps0, 0.5), st)
                items["loglog"] = lv
                route_status["loglog"] = {BOUNDED: "satisfied", UNBOUNDED: "not satisfied"}.get(lv.classification, INCONCLUSIVE)
            else:
                raise InvalidInputError(f"unknown route {route!r}")
        except DomainError as exc:
            items[route] = CriterionVerdict(route, INCONCLUSIVE, notes=[f"domain error: {exc}"])
            route_status[route] = INCONCLUSIVE
    items["routes"] = dict(route_status)

    if blockers:
        overall = "criteria not satisfied"
    elif "satisfied" in route_status.values():
        overall = "criteria inconclusive" if unknown else "criteria satisfied"
    elif route_status and all(v == "not satisfied" for v in route_status.values()):
        overall = "criteria not satisfied"
    else:
        overall = "criteria inconclusive"
    return ExtensionReport(items=items, overall=overall, declared_by_user=list(DECLARED_HYPOTHESES))
