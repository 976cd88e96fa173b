"""Independent oracles shared by the graph tests and the acceptance suite."""

import numpy as np
from scipy import optimize

from qcbound.dismod import WeightedGraph


def grid_graph(k):
    edges = []
    for i in range(k):
        for j in range(k):
            v = k * i + j
            if j < k - 1:
                edges.append((v, v + 1))
            if i < k - 1:
                edges.append((v, v + k))
    return WeightedGraph.from_edges(k * k, edges)


def sp_graph(rng, n_edges):
    """Random series-parallel two-terminal graph; returns (graph, s, t, closed-form capacity fn)."""

    def build(m):
        if m == 1:
            ln, ar = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
            return {"edges": [(0, 1, ln, ar)], "nodes": 2, "s": 0, "t": 1,
                    "cap": lambda p, ln=ln, ar=ar: ar * ln ** (1 - p)}
        k = int(rng.integers(1, m))
        a, b = build(k), build(m - k)
        shift = a["nodes"]
        remap = {}
        if rng.random() < 0.5:  # series: b.s glued to a.t
            for v in range(b["nodes"]):
                remap[v] = a["t"] if v == b["s"] else shift + v - (v > b["s"])
            nodes = a["nodes"] + b["nodes"] - 1
            t = remap[b["t"]]

            def cap(p, ca=a["cap"], cb=b["cap"]):
                e = -1.0 / (p - 1)
                return (ca(p) ** e + cb(p) ** e) ** (-(p - 1))
        else:  # parallel: glue both terminals
            for v in range(b["nodes"]):
                if v == b["s"]:
                    remap[v] = a["s"]
                elif v == b["t"]:
                    remap[v] = a["t"]
                else:
                    remap[v] = shift + sum(1 for w in range(v) if w not in (b["s"], b["t"]))
            nodes = a["nodes"] + b["nodes"] - 2
            t = a["t"]

            def cap(p, ca=a["cap"], cb=b["cap"]):
                return ca(p) + cb(p)
        edges = a["edges"] + [(remap[u], remap[v], ln, ar) for u, v, ln, ar in b["edges"]]
        return {"edges": edges, "nodes": nodes, "s": a["s"], "t": t, "cap": cap}

    d = build(n_edges)
    return WeightedGraph.from_edges(d["nodes"], d["edges"]), d["s"], d["t"], d["cap"]


def brute_capacity(g, E, F, p):
    free = [v for v in range(g.n_nodes) if v not in set(E) | set(F)]

    def energy(x):
        u = np.zeros(g.n_nodes)
        u[list(F)] = 1.0
        u[free] = x
        return np.sum(g.mass * np.abs((u[g.u] - u[g.v]) / g.length) ** p)

    if not free:
        return energy(np.empty(0))
    res = optimize.minimize(energy, np.full(len(free), 0.5), method="Nelder-Mead" if len(free) == 1 else "BFGS",
                            options={"xatol": 1e-12, "fatol": 1e-15} if len(free) == 1 else {"gtol": 1e-12})
    return res.fun


def brute_modulus(g, rows, weight, p):
    """SLSQP on an explicit constraint list (each row a tuple of edge ids)."""
    A = np.zeros((len(rows), g.n_edges))
    for i, r in enumerate(rows):
        A[i, list(r)] = weight[list(r)]
    return brute_modulus_matrix(A, g.mass, p)


def brute_modulus_matrix(A, mass, p):
    """SLSQP for ``min sum(mass * x**p)`` subject to ``A @ x >= 1``, ``x >= 0``."""
    cons = {"type": "ineq", "fun": lambda x: A @ x - 1.0, "jac": lambda x: A}
    res = optimize.minimize(lambda x: np.sum(mass * x**p), np.full(A.shape[1], 1.0),
                            jac=lambda x: p * mass * np.abs(x) ** (p - 1), constraints=[cons],
                            bounds=[(0, None)] * A.shape[1], method="SLSQP",
                            options={"ftol": 1e-15, "maxiter": 1000})
    return res.fun


def conductance_oracle(g, s, t):
    """Effective conductance between s and t from the Laplacian pseudo-inverse."""
    w = g.mass / g.length**2
    L = np.zeros((g.n_nodes, g.n_nodes))
    for e in range(g.n_edges):
        a, b = g.u[e], g.v[e]
        L[a, a] += w[e]
        L[b, b] += w[e]
        L[a, b] -= w[e]
        L[b, a] -= w[e]
    P = np.linalg.pinv(L)
    return 1.0 / (P[s, s] + P[t, t] - 2 * P[s, t])
