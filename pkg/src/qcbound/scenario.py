"""Scenario documents: schema, normalization and execution.

A scenario is a YAML document naming a dimension, a center, a weight
(or a mapping plus weight), parameters and a ``criteria`` mapping that
selects which checks to run.  Execution returns a JSON-ready report.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from . import criteria as cr
from . import dismod
from .errors import InvalidInputError, QCBoundError
from .mappings import mapping_from_spec
from .sphquad import Constant, QuadratureRule, radial_profile, sphere_ls_norms, sphere_means, weight_from_spec

__all__ = [
    "SCHEMA",
    "ScenarioError",
    "Scenario",
    "bundled_scenarios",
    "load_scenario",
    "run_scenario",
    "run_profile",
    "to_jsonable",
]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_unit = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_obj = {"type": "object"}


def _opts(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_GRAPH = _opts(
    {
        "nodes": {"type": "integer", "minimum": 2},
        "edges": {"type": "array", "minItems": 1,
                  "items": {"type": "array", "minItems": 2, "maxItems": 5, "items": _num}},
        "file": {"type": "string"},
        "E": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "F": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
    }
)

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "n", "criteria"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "n": {"type": "integer", "minimum": 2, "maximum": 6},
        "x0": {"type": "array", "items": _num},
        "p": _pos,
        "alpha": _pos,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "weight": _obj,
        "mapping": _obj,
        "phi": _obj,
        "quadrature": _opts({k: {"type": "integer", "minimum": 1} for k in
                             ("m", "m_polar", "m_azimuth", "mc_samples", "panels_per_decade", "gl_order", "min_panels")}),
        "ladder": _opts({"depth": {"type": "integer", "minimum": 4, "maximum": 60},
                         "window": {"type": "integer", "minimum": 2}}),
        "criteria": _opts(
            {
                "extension": _opts({"eps0": _unit, "routes": {"type": "array", "items": {"enum": ["twin", "fmo", "loglog"]}},
                                    "n_radial": {"type": "integer", "minimum": 1},
                                    "n_angular": {"type": "integer", "minimum": 1}}),
                "calderon": _opts({}),
                "twin": _opts({"eps0": _unit}),
                "loglog": _opts({"eps0": _unit}),
                "fmo": _opts({"eps0": _unit}),
                "fmo_loglog": _opts({"e0": _unit}),
                "little_o": _opts({"eps0": _unit, "s": _pos, "psi": _obj}),
                "extremal_identity": _opts({"r1": _pos, "r2": _pos}, ["r1", "r2"]),
                "ring_bound": _opts({"eps": _pos, "eps1": _pos}, ["eps", "eps1"]),
                "duality": _opts({"graph": _GRAPH, "p_values": {"type": "array", "items": _pos, "minItems": 1}},
                                 ["graph"]),
                "ring_condenser": _opts({"r1": _pos, "r2": {"type": "array", "items": _pos, "minItems": 1},
                                         "p": _pos, "resolutions": {"type": "array", "minItems": 1, "items": {
                                             "type": "array", "items": {"type": "integer", "minimum": 2},
                                             "minItems": 2, "maxItems": 2}}}, ["r1", "r2"]),
                "lemma4": _opts({"eps": _pos, "r0": _pos, "n_radial": {"type": "integer", "minimum": 2},
                                 "n_angular": {"type": "integer", "minimum": 2},
                                 "grid_tolerance": _unit}, ["eps", "r0"]),
                "profile": _opts({"r_min": _pos, "r_max": _pos, "count": {"type": "integer", "minimum": 2},
                                  "s": _pos}, ["r_min", "r_max"]),
            }
        ),
    },
}

DUALITY_TOL = 1e-6
RING_TOL = 0.05  # relative gap to the continuum ring capacity

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)
NEEDS_WEIGHT = ("extension", "twin", "loglog", "fmo", "fmo_loglog", "little_o", "extremal_identity", "ring_bound", "profile")


class ScenarioError(InvalidInputError):
    """Schema or parameter-link violations; ``problems`` lists ``path: message`` strings."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


@dataclass
class Scenario:
    """Validated scenario document (``data`` is the normalized dictionary)."""

    data: dict
    source: str | None = None

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def n(self) -> int:
        return self.data["n"]

    @classmethod
    def from_dict(cls, raw: dict, source: str | None = None, seed: int | None = None,
                  ladder_depth: int | None = None) -> "Scenario":
        if not isinstance(raw, dict):
            raise ScenarioError(["<root>: scenario must be a mapping"])
        data = copy.deepcopy(raw)
        if seed is not None:
            data["seed"] = int(seed)
        if ladder_depth is not None:
            data.setdefault("ladder", {})["depth"] = int(ladder_depth)
        problems = [f"{_path(e)}: {e.message}" for e in sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(e.absolute_path))]
        if problems:
            raise ScenarioError(problems)
        n = data["n"]
        data.setdefault("x0", [0.0] * n)
        data["x0"] = [float(v) for v in data["x0"]]
        if len(data["x0"]) != n:
            problems.append(f"x0: expected {n} coordinates, got {len(data['x0'])}")
        if "p" in data:
            if not (n - 1 < data["p"] <= n):
                problems.append(f"p: must lie in ({n - 1}, {n}], got {data['p']}")
            else:
                derived = data["p"] / (data["p"] - n + 1)
                if "alpha" in data and not math.isclose(data["alpha"], derived, rel_tol=1e-12):
                    problems.append(f"alpha: {data['alpha']} disagrees with p/(p-n+1) = {derived}")
                data["alpha"] = derived
        if "alpha" in data and data["alpha"] < n:
            problems.append(f"alpha: must be at least n = {n}")
        if n >= 4 and "seed" not in data:
            problems.append("seed: required for Monte Carlo spheres (n >= 4)")
        crit = data["criteria"]
        if not crit:
            problems.append("criteria: select at least one criterion")
        if any(k in crit for k in NEEDS_WEIGHT) and "weight" not in data:
            problems.append("weight: required by the selected criteria")
        if ("extension" in crit or "calderon" in crit) and n >= 3 and "phi" not in data:
            problems.append("phi: required for the Calderon condition when n >= 3")
        if any(k in crit for k in ("extension", "twin", "little_o")) and "alpha" not in data:
            problems.append("alpha: required (give alpha or p)")
        if any(k in crit for k in ("extremal_identity", "ring_bound")) and "p" not in data:
            problems.append("p: required by the extremal identity and ring bound")
        if "lemma4" in crit and n != 2:
            problems.append("criteria/lemma4: only defined for n = 2")
        if "lemma4" in crit and "p" not in data:
            problems.append("p: required by criteria/lemma4")
        for key, lo, hi in (("extremal_identity", "r1", "r2"), ("ring_bound", "eps", "eps1"),
                            ("lemma4", "eps", "r0"), ("profile", "r_min", "r_max")):
            c = crit.get(key)
            if c and not c[lo] < c[hi] and key != "lemma4":
                problems.append(f"criteria/{key}: {lo} must be below {hi}")
            if c and key == "lemma4" and c[lo] > c[hi]:
                problems.append(f"criteria/{key}: {lo} must not exceed {hi}")
        for key in ("weight", "mapping", "phi"):
            if key in data:
                try:
                    _build(key, data[key], n)
                except (QCBoundError, KeyError, TypeError, ValueError) as exc:
                    problems.append(f"{key}: {exc}")
        if problems:
            raise ScenarioError(problems)
        return cls(data, source)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def rule(self, strict: bool = False) -> QuadratureRule:
        kw = dict(self.data.get("quadrature", {}))
        if "seed" in self.data:
            kw["seed"] = self.data["seed"]
        r = QuadratureRule(self.n, **kw)
        return r.refined(2) if strict else r

    def settings(self, strict: bool = False) -> cr.LadderSettings:
        kw = dict(self.data.get("ladder", {}))
        if strict:
            kw["gl_order"] = 30
        return cr.LadderSettings(**kw)


def _build(kind, spec, n):
    if kind == "weight":
        return weight_from_spec(spec)
    if kind == "mapping":
        m = mapping_from_spec(spec, n)
        if m.dim != n:
            raise InvalidInputError(f"mapping dimension {m.dim} differs from n = {n}")
        return m
    return cr.OrliczFunction.from_spec(spec)


def bundled_scenarios() -> dict:
    """Name -> path of the scenario files shipped with the package."""
    root = resources.files("qcbound") / "scenarios"
    return {Path(p.name).stem: Path(str(p)) for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".yaml")}


def load_scenario(path_or_name, seed: int | None = None, ladder_depth: int | None = None) -> Scenario:
    """Parse and validate a scenario file; bundled names are accepted too."""
    p = Path(path_or_name)
    if not p.exists():
        gallery = bundled_scenarios()
        if str(path_or_name) not in gallery:
            raise ScenarioError([f"<file>: no such file or bundled scenario: {path_or_name}"])
        p = gallery[str(path_or_name)]
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError([f"<file>: YAML parse error: {exc}"]) from None
    return Scenario.from_dict(raw, str(p), seed, ladder_depth)


# --------------------------------------------------------------------------
# serialization


def to_jsonable(obj):
    """Plain JSON types; ``nan -> None``, ``+-inf -> {"infinite": true, ...}``."""
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return {"infinite": True, "sign": 1 if v > 0 else -1, "value": None}
        return v
    return obj


# --------------------------------------------------------------------------
# execution


def _ring_continuum(r1, r2, p):
    if p == 2:
        J = math.log(r2 / r1)
    else:
        e = (p - 2) / (p - 1)
        J = (r2**e - r1**e) / e
    return 2 * math.pi * J ** (1 - p)


def _graph(spec):
    if "file" in spec:
        g = dismod.WeightedGraph.from_text(Path(spec["file"]).read_text())
    else:
        if "edges" not in spec or "nodes" not in spec:
            raise InvalidInputError("graph needs 'nodes' and 'edges' or a 'file'")
        g = dismod.WeightedGraph.from_edges(spec["nodes"], spec["edges"])
    E = spec.get("E", list(g.sources))
    F = spec.get("F", list(g.targets))
    if not E or not F:
        raise InvalidInputError("graph needs source set E and target set F")
    return g, E, F


def _run_one(key, opts, sc: Scenario, strict: bool):
    d = sc.data
    n = sc.n
    x0 = np.asarray(d["x0"])
    rule = sc.rule(strict)
    st = sc.settings(strict)
    Q = weight_from_spec(d["weight"]) if "weight" in d else None
    q = lambda r: sphere_means(Q, x0, np.atleast_1d(r), rule)  # noqa: E731
    tables = {}
    if key == "calderon":
        if n < 3:
            return cr.CriterionVerdict("calderon", cr.NOT_APPLICABLE, notes=["omitted in the plane"]), tables
        return cr.calderon_test(cr.OrliczFunction.from_spec(d["phi"]), n, st), tables
    if key == "twin":
        return cr.divergence_pair_test(q, n, d["alpha"], opts.get("eps0", 0.5), st), tables
    if key == "loglog":
        return cr.loglog_majorant_check(q, n, opts.get("eps0", 0.5), st), tables
    if key == "fmo":
        return cr.fmo_diagnostic(Q, x0, rule=rule, eps0=opts.get("eps0", 0.5), settings=st), tables
    if key == "fmo_loglog":
        return cr.fmo_loglog_bound(Q, x0, opts.get("e0", math.exp(-1)), rule, st), tables
    if key == "little_o":
        return cr.little_o_test(Q, x0, d["alpha"], opts.get("s", 1.0), opts.get("eps0", math.exp(-1)),
                                cr.TestWeight.from_spec(opts.get("psi")), rule, st), tables
    if key == "extremal_identity":
        r1, r2 = opts["r1"], opts["r2"]
        uniform = lambda r: np.full_like(np.asarray(r, dtype=float), 1.0 / (r2 - r1))  # noqa: E731
        chk = cr.lower_bound_identity_check(Q, x0, d["p"], r1, r2, [uniform], rule)
        out = chk.to_dict()
        out["alternatives"] = ["uniform"]
        out["classification"] = "holds" if chk.rel_error <= 1e-6 and chk.inequality_holds else "fails"
        return out, tables
    if key == "ring_bound":
        bound, closed, ew = cr.ring_upper_bound_extremal(Q, x0, d["p"], opts["eps"], opts["eps1"], rule)
        return {"bound": bound, "omega_over_I": closed, "I": ew.I,
                "rel_error": abs(bound - closed) / abs(closed),
                "classification": "holds" if abs(bound - closed) <= 1e-6 * abs(closed) else "fails"}, tables
    if key == "extension":
        es = cr.ExtensionScenario(
            n=n, weight=Q, alpha=d["alpha"], x0=x0,
            mapping=mapping_from_spec(d["mapping"], n) if "mapping" in d else None,
            phi=cr.OrliczFunction.from_spec(d["phi"]) if "phi" in d else None,
            eps0=opts.get("eps0", 0.5), routes=tuple(opts.get("routes", ("twin", "fmo", "loglog"))),
            n_radial=opts.get("n_radial", 8), n_angular=opts.get("n_angular", 16), rule=rule, settings=st,
        )
        return cr.extension_report(es), tables
    if key == "duality":
        g, E, F = _graph(opts["graph"])
        rows = []
        for p in opts.get("p_values", [2.0]):
            rows.append(dismod.duality_check(g, E, F, p))
        tables["duality"] = [{k: r[k] for k in ("p", "p_prime", "cap", "conn_mod", "sep_mod", "residual_eq4", "residual_eq3")}
                             for r in rows]
        worst = max((max(r["residual_eq4"] or 0, r["residual_eq3"] or 0) for r in rows), default=0.0)
        return {"rows": rows, "max_residual": worst,
                "classification": "consistent" if worst <= DUALITY_TOL else "inconsistent"}, tables
    if key == "ring_condenser":
        p = opts.get("p", 2.0)
        rows = []
        for r2 in opts["r2"]:
            for nr, na in opts.get("resolutions", [[32, 128]]):
                grid = dismod.annulus_grid(opts["r1"], r2, nr, na)
                cap = dismod.discrete_capacity_p(grid, grid.sources, grid.targets, p).value
                cont = _ring_continuum(opts["r1"], r2, p)
                rows.append({"r1": opts["r1"], "r2": r2, "n_radial": nr, "n_angular": na, "p": p,
                             "capacity": cap, "continuum": cont, "rel_error": abs(cap - cont) / cont})
        tables["ring_capacity"] = rows
        worst = max(r["rel_error"] for r in rows)
        return {"rows": rows, "max_rel_error": worst,
                "classification": "agrees" if worst <= RING_TOL else "disagrees"}, tables
    if key == "lemma4":
        Q4 = Q if Q is not None else Constant(1.0)
        chk = dismod.lemma4_lower_bound_check(Q4, d["p"], opts["eps"], opts["r0"], opts.get("n_radial", 64),
                                              opts.get("n_angular", 256), opts.get("grid_tolerance", 0.05),
                                              x0=x0, rule=rule)
        return chk, tables
    if key == "profile":
        rows = _profile_rows(sc, opts, rule)
        tables["profile"] = rows
        return {"count": len(rows), "classification": "computed"}, tables
    raise InvalidInputError(f"unknown criterion {key!r}")


def _profile_rows(sc: Scenario, opts: dict, rule: QuadratureRule):
    d = sc.data
    n = sc.n
    x0 = np.asarray(d["x0"])
    Q = weight_from_spec(d["weight"])
    r = np.geomspace(opts["r_min"], opts["r_max"], opts.get("count", 16))
    if "s" in opts:
        s = opts["s"]
    elif "p" in d:
        s = (n - 1) / (d["p"] - n + 1)
    else:
        s = 1.0
    prof = radial_profile(Q, x0, r, rule)
    norms, nerr = sphere_ls_norms(Q, x0, r, s, rule, return_error=True)
    return [{"r": float(a), "q": float(b), "q_error": float(c), "ls_norm": float(e), "ls_norm_error": float(f), "s": s}
            for a, b, c, e, f in zip(r, prof.values, prof.errors, norms, nerr)]


_ERRORS = (QCBoundError, ValueError, ArithmeticError, np.linalg.LinAlgError, KeyError)


def _classification(res):
    if isinstance(res, cr.TwinVerdict):
        return res.status
    if isinstance(res, cr.ExtensionReport):
        return res.overall
    if hasattr(res, "classification"):
        return res.classification
    if isinstance(res, dict):
        return res.get("classification")
    return None


def run_scenario(sc: Scenario, strict: bool = False):
    """Execute every selected criterion.

    Returns ``(report, tables)``; ``report["errors"]`` maps criterion names
    to error messages for criteria that raised.
    """
    results, errors, summary, tables = {}, {}, {}, {}
    for key in sorted(sc.data["criteria"]):
        opts = sc.data["criteria"][key] or {}
        try:
            res, tabs = _run_one(key, opts, sc, strict)
        except _ERRORS as exc:
            errors[key] = f"{type(exc).__name__}: {exc}"
            continue
        results[key] = to_jsonable(res)
        summary[key] = _classification(res)
        tables.update(tabs)
        for name, v in _ladders(key, res).items():
            tables[name] = v
    report = {
        "toolkit": "qcbound",
        "toolkit_version": __version__,
        "scenario": to_jsonable(sc.to_dict()),
        "tolerance_profile": "strict" if strict else "default",
        "summary": summary,
        "results": results,
        "errors": errors,
        "notes": ["spheres are full spheres around x0", "wall-clock timing is written to timing.json"],
    }
    return report, tables


def _ladders(key, res):
    out = {}
    if isinstance(res, cr.TwinVerdict):
        out[f"{key}_finite_ladder"] = res.finite.ladder
        out[f"{key}_divergence_ladder"] = res.divergence.ladder
    elif isinstance(res, cr.CriterionVerdict) and res.ladder:
        out[f"{key}_ladder"] = res.ladder
    elif isinstance(res, cr.ExtensionReport):
        for name, item in res.items.items():
            out.update(_ladders(f"{key}_{name}", item))
    return out


def run_profile(sc: Scenario, strict: bool = False):
    """Profile rows for the ``profile`` section (defaults when absent)."""
    if "weight" not in sc.data:
        raise ScenarioError(["weight: required for a profile"])
    opts = sc.data["criteria"].get("profile") or {"r_min": 1e-4, "r_max": 0.5, "count": 16}
    return _profile_rows(sc, opts, sc.rule(strict))
