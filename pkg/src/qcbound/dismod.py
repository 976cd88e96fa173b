"""Discrete p-modulus, separating-set modulus and p-capacity on weighted graphs.

Every edge carries three weights: ``length`` (line measure, used in path
admissibility), ``area`` (cross-section, used in cut admissibility) and
``mass`` (volume, used in the objective).  Treating an edge as a tube,
``mass = area * length``; under that relation the capacity/modulus
dualities hold exactly on series-parallel graphs.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .errors import CutEnumerationError, InvalidInputError, InvalidParameterError, SolverError
from .sphquad import Constant, QuadratureRule, WeightFunction, radial_rule, sphere_ls_norms

__all__ = [
    "WeightedGraph",
    "CurveFamily",
    "CutFamily",
    "ModulusSolution",
    "CapacitySolution",
    "enumerate_paths",
    "enumerate_cuts",
    "discrete_modulus_p",
    "discrete_capacity_p",
    "separating_modulus",
    "duality_check",
    "annulus_grid",
    "lemma4_lower_bound_check",
    "solve_admissible_modulus",
]

KKT_TOL = 1e-10
FEAS_TOL = 1e-10


@dataclass
class WeightedGraph:
    """Undirected multigraph with per-edge length, area and mass."""

    n_nodes: int
    u: np.ndarray
    v: np.ndarray
    length: np.ndarray
    area: np.ndarray
    mass: np.ndarray
    positions: np.ndarray | None = None
    sources: tuple = ()
    targets: tuple = ()

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=int)
        self.v = np.asarray(self.v, dtype=int)
        for name in ("length", "area", "mass"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != self.u.shape:
                raise InvalidInputError(f"edge {name} array has wrong length")
            if np.any(~np.isfinite(a)) or np.any(a <= 0):
                raise InvalidInputError(f"edge {name} must be positive and finite")
            setattr(self, name, a)
        if self.u.shape != self.v.shape:
            raise InvalidInputError("edge endpoint arrays differ in length")
        if len(self.u) and (self.u.min() < 0 or self.v.min() < 0 or max(self.u.max(), self.v.max()) >= self.n_nodes):
            raise InvalidInputError("edge endpoint out of range")
        if np.any(self.u == self.v):
            raise InvalidInputError("self-loops are not allowed")
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=float)
            if len(self.positions) != self.n_nodes:
                raise InvalidInputError("positions must have one row per node")

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Sequence], positions=None, sources=(), targets=()):
        """Build from ``(u, v[, length[, area[, mass]]])`` tuples.

        Defaults: ``length = 1``, ``area = 1``, ``mass = area * length``.
        """
        rows = []
        for e in edges:
            u, v = int(e[0]), int(e[1])
            ln = float(e[2]) if len(e) > 2 else 1.0
            ar = float(e[3]) if len(e) > 3 else 1.0
            ms = float(e[4]) if len(e) > 4 else ar * ln
            rows.append((u, v, ln, ar, ms))
        a = np.array(rows, dtype=float).reshape(-1, 5)
        return cls(n_nodes, a[:, 0].astype(int), a[:, 1].astype(int), a[:, 2], a[:, 3], a[:, 4],
                   positions, tuple(sources), tuple(targets))

    @property
    def n_edges(self) -> int:
        return len(self.u)

    def adjacency(self):
        """``adj[node] -> list of (neighbor, edge id)``."""
        adj = [[] for _ in range(self.n_nodes)]
        for e, (a, b) in enumerate(zip(self.u.tolist(), self.v.tolist())):
            adj[a].append((b, e))
            adj[b].append((a, e))
        return adj

    def incidence(self) -> sparse.csr_matrix:
        """Signed edge-node incidence ``B`` with ``(B x)_e = x[u_e] - x[v_e]``."""
        E = self.n_edges
        rows = np.repeat(np.arange(E), 2)
        cols = np.column_stack([self.u, self.v]).ravel()
        vals = np.tile([1.0, -1.0], E)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(E, self.n_nodes))

    def subgraph_edges(self, keep: Sequence[int]) -> "WeightedGraph":
        k = np.asarray(keep, dtype=int)
        return WeightedGraph(self.n_nodes, self.u[k], self.v[k], self.length[k], self.area[k], self.mass[k],
                             self.positions, self.sources, self.targets)

    def to_text(self) -> str:
        """Edge-list text: ``node id [coords]``, ``edge u v length area mass``,
        ``source ids``, ``target ids``; ``#`` starts a comment."""
        out = io.StringIO()
        out.write("# qcbound edge list v1\n")
        for i in range(self.n_nodes):
            coords = "" if self.positions is None else " " + " ".join(repr(float(c)) for c in self.positions[i])
            out.write(f"node {i}{coords}\n")
        for e in range(self.n_edges):
            w = " ".join(repr(float(a[e])) for a in (self.length, self.area, self.mass))
            out.write(f"edge {int(self.u[e])} {int(self.v[e])} {w}\n")
        if self.sources:
            out.write("source " + " ".join(str(s) for s in self.sources) + "\n")
        if self.targets:
            out.write("target " + " ".join(str(s) for s in self.targets) + "\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "WeightedGraph":
        ids: dict = {}
        pos = []
        edges = []
        src: list = []
        tgt: list = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] == "node":
                    ids[tok[1]] = len(ids)
                    pos.append([float(c) for c in tok[2:]])
                elif tok[0] == "edge":
                    edges.append((tok[1], tok[2], *[float(c) for c in tok[3:6]]))
                elif tok[0] == "source":
                    src.extend(tok[1:])
                elif tok[0] == "target":
                    tgt.extend(tok[1:])
                else:
                    raise InvalidInputError(f"line {lineno}: unknown record {tok[0]!r}")
            except (IndexError, ValueError) as exc:
                raise InvalidInputError(f"line {lineno}: malformed record ({exc})") from None
        try:
            rows = [(ids[a], ids[b], *rest) for a, b, *rest in edges]
            s = tuple(ids[i] for i in src)
            t = tuple(ids[i] for i in tgt)
        except KeyError as exc:
            raise InvalidInputError(f"reference to undeclared node {exc}") from None
        positions = None
        if pos and all(len(p) == len(pos[0]) and len(p) > 0 for p in pos):
            positions = np.array(pos)
        return cls.from_edges(len(ids), rows, positions, s, t)


def _node_sets(g: WeightedGraph, E, F):
    E = sorted({int(i) for i in E})
    F = sorted({int(i) for i in F})
    if not E or not F:
        raise InvalidInputError("E and F must be nonempty")
    if set(E) & set(F):
        raise InvalidInputError("E and F must be disjoint")
    if min(E + F) < 0 or max(E + F) >= g.n_nodes:
        raise InvalidInputError("E or F refers to a missing node")
    return E, F


def _connected(g: WeightedGraph, E, F) -> bool:
    A = sparse.coo_matrix((np.ones(g.n_edges), (g.u, g.v)), shape=(g.n_nodes, g.n_nodes))
    _, lab = csgraph.connected_components(A, directed=False)
    return bool(set(lab[E]) & set(lab[F]))


# --------------------------------------------------------------------------
# families


@dataclass
class CurveFamily:
    """Edge paths joining ``E`` to ``F`` (each a tuple of edge ids)."""

    E: tuple
    F: tuple
    paths: list
    truncated: bool = False
    notes: list = field(default_factory=list)

    def __len__(self):
        return len(self.paths)


@dataclass
class CutFamily:
    """Edge sets separating ``E`` from ``F`` (each a tuple of edge ids)."""

    E: tuple
    F: tuple
    cuts: list
    notes: list = field(default_factory=list)

    def __len__(self):
        return len(self.cuts)

    def validate(self, g: WeightedGraph) -> None:
        for c in self.cuts:
            keep = np.setdiff1d(np.arange(g.n_edges), np.asarray(c, dtype=int))
            if _connected(g.subgraph_edges(keep), list(self.E), list(self.F)):
                raise InvalidInputError(f"edge set {c} does not separate E from F")


def enumerate_paths(g: WeightedGraph, E, F, max_paths: int = 1000, max_length: int | None = None) -> CurveFamily:
    """Simple paths from ``E`` to ``F``, shortest (by length) first.

    Intermediate nodes avoid ``E`` and ``F``.  ``max_length`` bounds the
    number of edges.  ``truncated`` is set when ``max_paths`` cut the
    enumeration short.
    """
    E, F = _node_sets(g, E, F)
    Fs, Es = set(F), set(E)
    adj = g.adjacency()
    heap = [(0.0, 0, (), s, (s,)) for s in E]
    heapq.heapify(heap)
    paths: list = []
    truncated = False
    while heap:
        L, hops, epath, node, nodes = heapq.heappop(heap)
        if node in Fs:
            if len(paths) >= max_paths:
                truncated = True
                break
            paths.append(epath)
            continue
        if max_length is not None and hops >= max_length:
            continue
        for nb, e in adj[node]:
            if nb in nodes or (nb in Es):
                continue
            heapq.heappush(heap, (L + g.length[e], hops + 1, epath + (e,), nb, nodes + (nb,)))
    fam = CurveFamily(tuple(E), tuple(F), paths, truncated)
    if not paths:
        fam.notes.append("E and F are not joined by any path within limits: modulus is +inf by convention")
    if truncated:
        fam.notes.append(f"enumeration truncated at {max_paths} paths")
    return fam


def enumerate_cuts(g: WeightedGraph, E, F, max_free_nodes: int = 16) -> CutFamily:
    """All inclusion-minimal edge cuts separating ``E`` from ``F``.

    Enumerates node bipartitions, so the number of nodes outside ``E`` and
    ``F`` is limited to ``max_free_nodes``.
    """
    E, F = _node_sets(g, E, F)
    free = [i for i in range(g.n_nodes) if i not in set(E) | set(F)]
    if len(free) > max_free_nodes:
        raise CutEnumerationError(
            f"{len(free)} free nodes exceed the cut-enumeration limit {max_free_nodes}; "
            "use duality_check (capacity route) instead"
        )
    k = len(free)
    masks = np.arange(2**k, dtype=np.int64)
    side = np.zeros((2**k, g.n_nodes), dtype=bool)
    side[:, E] = True
    for j, node in enumerate(free):
        side[:, node] = (masks >> j) & 1
    cross = side[:, g.u] != side[:, g.v]
    weights = 1 << np.arange(g.n_edges, dtype=object)
    seen = set()
    for row in np.unique(cross, axis=0):
        seen.add(int(sum(w for w, b in zip(weights, row) if b)))
    minimal: list[int] = []
    for c in sorted(seen, key=lambda c: (bin(c).count("1"), c)):
        if c == 0:
            continue
        if any(c & mc == mc for mc in minimal):
            continue
        minimal.append(c)
    cuts = [tuple(e for e in range(g.n_edges) if (c >> e) & 1) for c in minimal]
    cuts.sort()
    return CutFamily(tuple(E), tuple(F), cuts)


# --------------------------------------------------------------------------
# convex solver


@dataclass
class ModulusSolution:
    value: float
    rho: np.ndarray
    p: float
    max_violation: float
    iterations: int
    duality_gap: float
    dual_value: float
    n_constraints: int
    constraints: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value, "p": self.p, "max_violation": self.max_violation,
            "iterations": self.iterations, "duality_gap": self.duality_gap,
            "n_constraints": self.n_constraints, "notes": list(self.notes),
        }

    def to_csv(self, g: WeightedGraph) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["edge", "u", "v", "length", "area", "mass", "rho"])
        for e in range(g.n_edges):
            wr.writerow([e, int(g.u[e]), int(g.v[e]), repr(float(g.length[e])), repr(float(g.area[e])),
                         repr(float(g.mass[e])), repr(float(self.rho[e]))])
        return buf.getvalue()


def _rho_of(y, mass, q):
    with np.errstate(invalid="ignore"):
        return np.where(y > 0, (np.maximum(y, 0) / (q * mass)) ** (1.0 / (q - 1.0)), 0.0)


def _dual_value(lam, A, mass, q):
    y = A.T @ lam
    rho = _rho_of(y, mass, q)
    return float(lam.sum() - (q - 1.0) * np.sum(mass * rho**q)), rho


def _kkt_residual(lam, A, mass, q):
    grad = A @ _rho_of(A.T @ lam, mass, q) - 1.0
    return float(np.max(np.abs(np.where(lam > 0, grad, np.minimum(grad, 0.0))))) if len(lam) else 0.0


def solve_admissible_modulus(A: np.ndarray, mass: np.ndarray, q: float, lam0: np.ndarray | None = None,
                             tol: float = KKT_TOL, max_iter: int = 100_000):
    """Minimize ``sum(mass * rho**q)`` subject to ``A @ rho >= 1``, ``rho >= 0``.

    Projected Newton ascent on the concave Lagrangian dual in the
    multipliers ``lam >= 0``; the primal density is ``rho(lam)``.  Returns
    ``(rho, lam, iterations, kkt_residual)``.
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    lam = np.ones(k) if lam0 is None else np.maximum(np.asarray(lam0, dtype=float), 0.0)
    if lam0 is not None and not np.any(lam > 0):
        lam = np.ones(k)
    fval = -_dual_value(lam, A, mass, q)[0]
    kkt = math.inf
    for it in range(1, max_iter + 1):
        y = A.T @ lam
        rho = _rho_of(y, mass, q)
        grad = A @ rho - 1.0  # gradient of the negated dual
        pg = np.where(lam > 0, grad, np.minimum(grad, 0.0))
        kkt = float(np.max(np.abs(pg))) if k else 0.0
        if kkt <= tol:
            return rho, lam, it, kkt
        active = (lam <= 1e-15) & (grad > 0)
        free = ~active
        ypos = y[y > 0]
        yfloor = (ypos.max() if len(ypos) else 1.0) * 1e-12
        yc = np.maximum(y, yfloor)
        d = _rho_of(yc, mass, q) / ((q - 1.0) * yc)
        H = (A[free] * d) @ A[free].T
        H[np.diag_indices_from(H)] += 1e-14 * max(1.0, float(np.trace(H)) / max(1, H.shape[0]))
        step = np.zeros(k)
        try:
            step[free] = -np.linalg.solve(H, grad[free])
        except np.linalg.LinAlgError:
            step[free] = -grad[free]
        if not np.all(np.isfinite(step)) or np.dot(step[free], grad[free]) >= 0:
            step[free] = -grad[free]
        t = 1.0
        while True:
            trial = np.maximum(lam + t * step, 0.0)
            ft = -_dual_value(trial, A, mass, q)[0]
            # slack: near the optimum the decrease is below the rounding of fval
            if ft <= fval + 1e-4 * np.dot(grad, trial - lam) + 1e-15 * abs(fval) or t < 1e-20:
                break
            # once fval is flat to rounding, accept a step that shrinks the KKT residual instead
            if abs(ft - fval) <= 1e-12 * abs(fval) and _kkt_residual(trial, A, mass, q) <= 0.9 * kkt:
                break
            t *= 0.5
        if t < 1e-20:
            # stalled at rounding level; accept the current point
            return rho, lam, it, kkt
        lam, fval = trial, ft
    raise SolverError(f"modulus solver did not converge: KKT residual {kkt:.3e} after {max_iter} iterations")


def _dijkstra(g: WeightedGraph, adj, weights, E, F):
    """Shortest path from E to F under edge ``weights``; returns (length, edge tuple)."""
    dist = np.full(g.n_nodes, np.inf)
    prev = [None] * g.n_nodes
    heap = []
    for s in E:
        dist[s] = 0.0
        heap.append((0.0, s))
    heapq.heapify(heap)
    Fs = set(F)
    done = np.zeros(g.n_nodes, dtype=bool)
    while heap:
        d, node = heapq.heappop(heap)
        if done[node]:
            continue
        done[node] = True
        if node in Fs:
            path = []
            while prev[node] is not None:
                node, e = prev[node]
                path.append(e)
            return d, tuple(reversed(path))
        for nb, e in adj[node]:
            nd = d + weights[e]
            if nd < dist[nb]:
                dist[nb] = nd
                prev[nb] = (node, e)
                heapq.heappush(heap, (nd, nb))
    return math.inf, ()


def _check_p(p, label="p"):
    if not (np.isfinite(p) and p > 1):
        raise InvalidParameterError(f"{label} must exceed 1 (the p = 1 case is a linear program, not supported), got {p!r}")


def discrete_modulus_p(g: WeightedGraph, family, p: float, E=None, F=None, tol: float = KKT_TOL,
                       max_rounds: int = 10_000) -> ModulusSolution:
    """p-modulus ``min sum(mass * rho**p)`` over densities with
    ``sum_{e in path} length_e * rho_e >= 1`` for every path.

    ``family`` is a :class:`CurveFamily` (explicit constraints) or ``None``
    to use all ``E``-``F`` paths via constraint generation with a shortest
    ``length * rho`` path oracle.  The returned density is rescaled to be
    exactly admissible, so ``value`` is an upper bound and ``dual_value`` a
    lower bound.
    """
    _check_p(p)
    if family is not None:
        if not len(family):
            raise InvalidInputError("curve family is empty")
        A = np.zeros((len(family), g.n_edges))
        for i, path in enumerate(family.paths):
            A[i, list(path)] = g.length[list(path)]
        rho, lam, it, kkt = solve_admissible_modulus(A, g.mass, p, tol=tol)
        minlen = float((A @ rho).min())
        rho = rho / minlen if minlen > 0 else rho
        dual, _ = _dual_value(lam, A, g.mass, p)
        val = float(np.sum(g.mass * rho**p))
        return ModulusSolution(val, rho, p, max(0.0, 1.0 - float((A @ rho).min())), it, val - dual, dual,
                               len(family), list(family.paths), list(family.notes))
    E, F = _node_sets(g, E, F)
    if not _connected(g, E, F):
        return ModulusSolution(math.inf, np.zeros(g.n_edges), p, 0.0, 0, 0.0, math.inf, 0, [],
                               ["E and F are disconnected: empty family, modulus +inf by convention"])
    adj = g.adjacency()
    _, first = _dijkstra(g, adj, g.length, E, F)
    paths = [first]
    rows = [np.zeros(g.n_edges)]
    rows[0][list(first)] = g.length[list(first)]
    lam = None
    total_it = 0
    for _ in range(max_rounds):
        A = np.array(rows)
        rho, lam, it, kkt = solve_admissible_modulus(A, g.mass, p, lam0=lam, tol=tol)
        total_it += it
        L, path = _dijkstra(g, adj, g.length * rho, E, F)
        if L >= 1.0 - FEAS_TOL or path in paths:
            break
        paths.append(path)
        row = np.zeros(g.n_edges)
        row[list(path)] = g.length[list(path)]
        rows.append(row)
        lam = np.append(lam, 0.0)
    else:
        raise SolverError(f"constraint generation did not close after {max_rounds} rounds")
    L, _ = _dijkstra(g, adj, g.length * rho, E, F)
    rho = rho / L
    dual, _ = _dual_value(lam, np.array(rows), g.mass, p)
    val = float(np.sum(g.mass * rho**p))
    return ModulusSolution(val, rho, p, 0.0, total_it, val - dual, dual, len(paths), paths,
                           ["all E-F paths via shortest-path constraint generation"])


def separating_modulus(g: WeightedGraph, E, F, p_prime: float, family: CutFamily | None = None,
                       max_free_nodes: int = 16, tol: float = KKT_TOL) -> ModulusSolution:
    """Separating-set modulus ``min sum(mass * rho**p')`` over densities with
    ``sum_{e in cut} area_e * rho_e >= 1`` for every minimal ``E``-``F`` cut."""
    _check_p(p_prime, "p'")
    E, F = _node_sets(g, E, F)
    if family is None:
        family = enumerate_cuts(g, E, F, max_free_nodes)
    if not len(family):
        raise InvalidInputError("cut family is empty")
    A = np.zeros((len(family), g.n_edges))
    for i, c in enumerate(family.cuts):
        A[i, list(c)] = g.area[list(c)]
    rho, lam, it, kkt = solve_admissible_modulus(A, g.mass, p_prime, tol=tol)
    scale = float((A @ rho).min())
    rho = rho / scale
    dual, _ = _dual_value(lam, A, g.mass, p_prime)
    val = float(np.sum(g.mass * rho**p_prime))
    return ModulusSolution(val, rho, p_prime, 0.0, it, val - dual, dual, len(family), list(family.cuts),
                           [f"{len(family)} minimal cuts"])


# --------------------------------------------------------------------------
# capacity


@dataclass
class CapacitySolution:
    value: float
    u: np.ndarray
    p: float
    iterations: int
    grad_norm: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"value": self.value, "p": self.p, "iterations": self.iterations,
                "grad_norm": self.grad_norm, "notes": list(self.notes)}


def _energy(g, B, u, p):
    grad = (B @ u) / g.length
    return float(np.sum(g.mass * np.abs(grad) ** p))


def discrete_capacity_p(g: WeightedGraph, E, F, p: float, tol: float = 1e-12, max_iter: int = 500) -> CapacitySolution:
    """``min sum(mass * (|u_a - u_b| / length)**p)`` with ``u = 0`` on ``E``, ``1`` on ``F``.

    Damped Newton on the free node potentials, started from the p = 2
    (linear) solution; stops when the free-node gradient is below
    ``tol`` relative to the initial one.
    """
    _check_p(p)
    E, F = _node_sets(g, E, F)
    u = np.zeros(g.n_nodes)
    u[F] = 1.0
    if not _connected(g, E, F):
        return CapacitySolution(0.0, u, p, 0, 0.0, ["E and F are disconnected: capacity 0"])
    A = sparse.coo_matrix((np.ones(g.n_edges), (g.u, g.v)), shape=(g.n_nodes, g.n_nodes))
    _, lab = csgraph.connected_components(A, directed=False)
    live = set(lab[E]) | set(lab[F])
    fixed = np.zeros(g.n_nodes, dtype=bool)
    fixed[E] = True
    fixed[F] = True
    fixed |= ~np.isin(lab, list(live))
    free = np.flatnonzero(~fixed)
    B = g.incidence()
    Bf = B[:, free].tocsc()
    notes = []
    if len(free) == 0:
        return CapacitySolution(_energy(g, B, u, p), u, p, 0, 0.0, notes)

    def grad_hess(u, pp, exact=True):
        gr = (B @ u) / g.length
        ag = np.abs(gr)
        gvec = Bf.T @ (g.mass * pp * ag ** (pp - 1) * np.sign(gr) / g.length)
        floor = max(float(ag.max()), 1.0) * 1e-8
        w = g.mass * pp * (pp - 1) * np.maximum(ag, floor) ** (pp - 2) / g.length**2
        H = (Bf.T @ sparse.diags(w) @ Bf).tocsc()
        return gvec, H

    # linear (p = 2) start
    g2, H2 = grad_hess(u, 2.0)
    u[free] -= spsolve(H2, g2)
    it = 0
    gvec, H = grad_hess(u, p)
    g0 = max(float(np.max(np.abs(gvec))), 1e-300)
    gn = float(np.max(np.abs(gvec)))
    J = _energy(g, B, u, p)
    scale = max(J, 1e-300)
    while gn > tol * max(scale, 1.0) and it < max_iter:
        it += 1
        step = spsolve(H, -gvec)
        t = 1.0
        slope = float(np.dot(gvec, step))
        while True:
            trial = u.copy()
            trial[free] += t * step
            Jt = _energy(g, B, trial, p)
            if Jt <= J + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if Jt > J:
            notes.append("line search stalled at rounding level")
            break
        stationary = J - Jt <= 1e-15 * J
        u, J = trial, Jt
        gvec, H = grad_hess(u, p)
        gn = float(np.max(np.abs(gvec)))
        if stationary:
            # |g|**(p-1) is not smooth at g = 0 for p < 2; the gradient plateaus there
            notes.append(f"energy stationary to rounding; gradient norm {gn:.2e}")
            break
    if gn > tol * max(scale, 1.0) and not notes:
        raise SolverError(f"capacity solver stopped with gradient norm {gn:.3e} (initial {g0:.3e})")
    return CapacitySolution(J, u, p, it, gn, notes)


# --------------------------------------------------------------------------
# duality


def duality_check(g: WeightedGraph, E, F, p: float, max_free_nodes: int = 16) -> dict:
    """Capacity, path modulus and separating modulus with their residuals.

    ``residual_eq4 = |M_p(paths) - C_p|`` and
    ``residual_eq3 = |M_{p'}(cuts) - C_p**(-1/(p-1))|`` with ``p' = p/(p-1)``.
    A failing solver leaves its entry as ``None`` with a note.
    """
    _check_p(p)
    pp = p / (p - 1.0)
    out = {"p": p, "p_prime": pp, "cap": None, "conn_mod": None, "sep_mod": None,
           "residual_eq4": None, "residual_eq3": None, "notes": []}
    try:
        out["cap"] = discrete_capacity_p(g, E, F, p).value
    except (SolverError, InvalidInputError) as exc:
        out["notes"].append(f"capacity: {exc}")
    try:
        out["conn_mod"] = discrete_modulus_p(g, None, p, E, F).value
    except (SolverError, InvalidInputError) as exc:
        out["notes"].append(f"path modulus: {exc}")
    try:
        out["sep_mod"] = separating_modulus(g, E, F, pp, max_free_nodes=max_free_nodes).value
    except (SolverError, InvalidInputError) as exc:
        out["notes"].append(f"separating modulus: {exc}")
    if out["cap"] is not None and out["conn_mod"] is not None:
        out["residual_eq4"] = abs(out["conn_mod"] - out["cap"])
    if out["cap"] is not None and out["sep_mod"] is not None and out["cap"] > 0:
        out["residual_eq3"] = abs(out["sep_mod"] - out["cap"] ** (-1.0 / (p - 1.0)))
    return out


# --------------------------------------------------------------------------
# ring condensers


def annulus_grid(r1: float, r2: float, n_radial: int, n_angular: int, x0=(0.0, 0.0)) -> WeightedGraph:
    """Polar grid on the planar annulus ``r1 < |x - x0| < r2``.

    ``n_radial`` log-spaced rings of ``n_angular`` nodes.  Radial edges
    have length ``r_{i+1} - r_i`` and cross-section ``r_mid * dtheta``;
    angular edges have length ``r_i * dtheta`` and cross-section equal to
    the radial extent of the ring's dual cell.  ``mass = area * length``.
    Sources are the inner ring, targets the outer ring.
    """
    if not (0 < r1 < r2):
        raise InvalidParameterError(f"need 0 < r1 < r2, got ({r1}, {r2})")
    if n_radial < 2 or n_angular < 2:
        raise InvalidParameterError("grid resolution must be at least 2 in each direction")
    radii = np.geomspace(r1, r2, n_radial)
    dth = 2.0 * np.pi / n_angular
    theta = dth * np.arange(n_angular)
    node = lambda i, j: i * n_angular + (j % n_angular)  # noqa: E731
    u, v, ln, ar = [], [], [], []
    for i in range(n_radial - 1):
        L = radii[i + 1] - radii[i]
        a = 0.5 * (radii[i] + radii[i + 1]) * dth
        for j in range(n_angular):
            u.append(node(i, j)), v.append(node(i + 1, j)), ln.append(L), ar.append(a)
    ext = np.empty(n_radial)
    ext[1:-1] = 0.5 * (radii[2:] - radii[:-2])
    ext[0] = 0.5 * (radii[1] - radii[0])
    ext[-1] = 0.5 * (radii[-1] - radii[-2])
    for i in range(n_radial):
        for j in range(n_angular):
            u.append(node(i, j)), v.append(node(i, j + 1)), ln.append(radii[i] * dth), ar.append(ext[i])
    ln, ar = np.array(ln), np.array(ar)
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    pos = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()]) + np.asarray(x0, dtype=float)
    inner = tuple(range(n_angular))
    outer = tuple(range((n_radial - 1) * n_angular, n_radial * n_angular))
    return WeightedGraph(n_radial * n_angular, np.array(u), np.array(v), ln, ar, ar * ln, pos, inner, outer)


@dataclass
class Lemma4Check:
    classification: str
    rhs: float | None
    lhs: float | None
    margin: float | None
    grid_tolerance: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"classification": self.classification, "rhs": self.rhs, "lhs": self.lhs,
                "margin": self.margin, "grid_tolerance": self.grid_tolerance, "notes": list(self.notes)}


def lemma4_lower_bound_check(Q: WeightFunction, p: float, eps: float, r0: float, n_radial: int = 64,
                             n_angular: int = 256, grid_tolerance: float = 0.05, x0=(0.0, 0.0),
                             ring_solution: CapacitySolution | None = None,
                             rule: QuadratureRule | None = None) -> Lemma4Check:
    """Sphere-family lower bound ``M_p >= int_eps^r0 dr / ||Q||_s(r)`` in the plane.

    ``rhs`` is integrated radially from sphere ``L_s`` norms,
    ``s = 1/(p-1)``.  ``lhs`` is the separating-set modulus of the annulus
    grid for the identity mapping, obtained from the grid capacity of order
    ``p/(p-1)`` as ``C**(-(p-1))``.  Only constant ``Q`` has this surrogate;
    other weights give a not-applicable verdict.
    """
    n = 2
    if not (n - 1 < p <= n):
        raise InvalidParameterError(f"p must lie in (1, 2], got {p}")
    if not isinstance(Q, Constant):
        return Lemma4Check(NOT_APPLICABLE_L4, None, None, None, grid_tolerance,
                           ["only constant weights with the identity mapping have a discrete surrogate"])
    notes = ["surrogate: separating-set modulus on the annulus grid via the capacity duality",
             "full circles only"]
    if r0 <= eps:
        return Lemma4Check("satisfied", 0.0, None, None, grid_tolerance, notes + ["empty interval: rhs = 0"])
    s = (n - 1) / (p - n + 1)
    rule = rule or QuadratureRule(2)
    r, w = radial_rule(eps, r0, 8, rule.gl_order, 8)
    norms = sphere_ls_norms(Q, np.asarray(x0, dtype=float), r, s, rule)
    rhs = float(np.dot(w, 1.0 / norms))
    pc = p / (p - 1.0)
    if ring_solution is None:
        grid = annulus_grid(eps, r0, n_radial, n_angular, x0)
        ring_solution = discrete_capacity_p(grid, grid.sources, grid.targets, pc)
    lhs = ring_solution.value ** (-1.0 / (pc - 1.0))
    ok = lhs >= rhs * (1.0 - grid_tolerance)
    return Lemma4Check("satisfied" if ok else "violated", rhs, lhs, lhs / rhs - 1.0, grid_tolerance, notes)


NOT_APPLICABLE_L4 = "not-applicable"
