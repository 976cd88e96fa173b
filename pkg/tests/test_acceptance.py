"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line with its runtime.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the summary lines.
"""

import contextlib
import math
import time

import numpy as np
import pytest
from scipy import integrate

from qcbound import criteria as cr
from qcbound.cli import main
from qcbound.diffcore import inner_dilatation
from qcbound.dismod import (
    annulus_grid,
    discrete_capacity_p,
    duality_check,
    enumerate_cuts,
    enumerate_paths,
    lemma4_lower_bound_check,
)
from qcbound.mappings import DifferentialMethod, Identity, RadialStretch, dilatation_field
from qcbound.scenario import bundled_scenarios
from qcbound.sphquad import Constant, LogPower, Power, QuadratureRule, sphere_means

from oracles import brute_capacity, brute_modulus, conductance_oracle, sp_graph

pytestmark = pytest.mark.acceptance

E = math.e


@contextlib.contextmanager
def criterion(capsys, number, name, limit=None):
    """Time the body, print one PASS/FAIL line, then enforce the runtime limit."""
    t0 = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        dt = time.perf_counter() - t0
        in_time = limit is None or dt < limit
        bound = f" < {limit} s" if limit is not None else ""
        with capsys.disabled():
            print(f"\n[{'PASS' if ok and in_time else 'FAIL'}] {number} {name} ({dt:.2f} s{bound})")
    assert in_time, f"criterion {number} took {dt:.2f} s, limit {limit} s"


def test_1_extremal_identity(capsys):
    with criterion(capsys, 1, "extremal identity", 5):
        n, p = 3, 3.0
        chk = cr.lower_bound_identity_check(Constant(1.0), np.zeros(n), p, 1.0, E)
        assert chk.lhs == pytest.approx(4 * math.pi, rel=1e-6)
        assert chk.rhs0 == pytest.approx(4 * math.pi, rel=1e-6)
        assert chk.rel_error <= 1e-6
        for beta in (-1.0, 1.0, 2.0):
            chk = cr.lower_bound_identity_check(Power(beta), np.zeros(n), p, 1.0, E)
            # radial oracle: I = int dr / (r^((n-1)/(p-1)) q^(1/(p-1))) with q = r^beta
            I = integrate.quad(lambda r: r ** (-(n - 1 + beta) / (p - 1)), 1.0, E, epsabs=0, epsrel=1e-13)[0]
            expected = 4 * math.pi / I ** (p - 1)
            assert chk.lhs == pytest.approx(expected, rel=1e-5)
            assert chk.rhs0 == pytest.approx(expected, rel=1e-5)


def _perturbations(ew, r1, r2, count, rng):
    """Random admissible competitors: ``ew + delta`` with zero-mean ``delta`` keeping the sum positive."""
    grid = np.linspace(r1, r2, 401)
    floor = float(np.min(ew(grid)))
    out = []
    for _ in range(count):
        k = rng.integers(1, 6, size=3)
        a = rng.uniform(-1, 1, size=3)

        def delta(r, k=k, a=a):
            s = (np.asarray(r, dtype=float) - r1) / (r2 - r1)
            return sum(ai * np.cos(math.pi * ki * s) for ai, ki in zip(a, k))

        scale = rng.uniform(0.05, 0.95) * floor / float(np.max(np.abs(delta(grid))))
        out.append(lambda r, d=delta, c=scale: ew(r) + c * d(r))
    return out


def test_2_extremal_optimality(capsys):
    with criterion(capsys, 2, "extremal optimality", 10):
        rng = np.random.default_rng(20)
        n, p, r1, r2 = 3, 3.0, 1.0, E
        for Q, q in ((Constant(1.0), lambda r: np.ones_like(np.asarray(r, dtype=float))),
                     (Power(0.5), lambda r: np.asarray(r, dtype=float) ** 0.5)):
            ew = cr.extremal_weight(q, n, p, r1, r2)
            etas = _perturbations(ew, r1, r2, 20, rng)
            chk = cr.lower_bound_identity_check(Q, np.zeros(n), p, r1, r2, etas)
            assert len(chk.rhs_alternatives) == 20
            assert all(r >= chk.rhs0 - 1e-8 for r in chk.rhs_alternatives)


def test_3_dilatation_engine(capsys):
    with criterion(capsys, 3, "dilatation engine", 5):
        f = RadialStretch(3, 0.5)
        fld = dilatation_field(f, np.zeros(3), 1e-3, 0.5, 3)
        assert np.max(np.abs(fld.values - 4.0)) <= 1e-12
        fd = dilatation_field(f, np.zeros(3), 1e-2, 0.5, 3, method=DifferentialMethod("central_difference"))
        assert np.max(np.abs(fd.values - 4.0)) <= 1e-6
        for p in (1.0, 1.5, 2.0, 3.0, 4.5):
            assert np.all(dilatation_field(Identity(3), np.zeros(3), 0.1, 1.0, p).values == 1.0)
        assert inner_dilatation(np.zeros((3, 3)), 3) == 1.0
        assert inner_dilatation(np.array([[1.0, 2.0], [2.0, 4.0]]), 2) == math.inf
        assert inner_dilatation(np.diag([1.0, 1.0, 0.0]), 3) == math.inf


def test_4_calderon_classifier(capsys):
    with criterion(capsys, 4, "Calderon classifier", 5):
        for n in (3, 4):
            for q in (1.5, 2.0, 2.5, 3.0, 3.5):
                v = cr.calderon_test(cr.OrliczFunction.power(q), n)
                assert v.classification != cr.INCONCLUSIVE
                assert v.classification == (cr.CONVERGENT if q > n - 1 else cr.DIVERGENT)


def test_5_twin_criterion(capsys):
    with criterion(capsys, 5, "twin criterion", 10):
        n, alpha, eps0 = 3, 3.0, 0.5
        rule = QuadratureRule(n)

        def means(Q):
            return lambda r: sphere_means(Q, np.zeros(n), np.atleast_1d(r), rule)

        assert cr.divergence_pair_test(means(Constant(1.0)), n, alpha, eps0).status == "satisfied"
        assert cr.divergence_pair_test(means(LogPower(2.0)), n, alpha, eps0).status == "satisfied"
        assert cr.divergence_pair_test(means(Power(-1.0)), n, alpha, eps0).status == "not satisfied"
        v = cr.loglog_majorant_check(lambda t: np.log(1.0 / np.asarray(t, dtype=float)) ** 2, n, eps0)
        assert v.classification == cr.BOUNDED
        assert all(abs(row["ratio"] - 1.0) <= 1e-12 for row in v.ladder)


def test_6_fmo_suite(capsys):
    with criterion(capsys, 6, "FMO suite", 60):
        for n in (2, 3):
            v = cr.fmo_diagnostic(Constant(2.5), np.zeros(n))
            assert all(row["oscillation"] == 0.0 for row in v.ladder)
            assert v.classification == cr.FMO_POSITIVE
            v = cr.fmo_diagnostic(LogPower(1.0), np.zeros(n), eps=2.0 ** -np.arange(4, 21))
            assert v.classification == cr.FMO_POSITIVE
            assert abs(v.fit["slope"]) <= 0.05
        assert cr.fmo_diagnostic(Power(-1.0), np.zeros(2)).classification == cr.FMO_NEGATIVE

        v = cr.fmo_loglog_bound(LogPower(2.0), np.zeros(3), math.exp(-1))
        rows = [r for r in v.ladder if r["ratio"] == r["ratio"]]
        ratios = [r["ratio"] for r in rows]
        assert math.log10(rows[0]["eps"] / rows[-1]["eps"]) >= 4
        assert max(ratios) / min(ratios) <= 2.0

        for Q in (Constant(1.0), LogPower(1.0)):
            v = cr.little_o_test(Q, np.zeros(3), 3.0, 1.0, math.exp(-1))
            R = [r["ratio"] for r in v.ladder]
            assert all(b < a for a, b in zip(R, R[1:]))
            assert R[-1] < 0.1 * R[0]


def test_7_discrete_duality(capsys):
    with criterion(capsys, 7, "discrete duality", 30):
        rng = np.random.default_rng(7)
        for n_edges in range(1, 9):
            g, s, t, cap = sp_graph(rng, n_edges)
            paths = enumerate_paths(g, [s], [t]).paths
            cuts = enumerate_cuts(g, [s], [t]).cuts
            for p in (1.5, 2.0, 3.0):
                d = duality_check(g, [s], [t], p)
                assert d["residual_eq4"] <= 1e-6 and d["residual_eq3"] <= 1e-6
                # closed-form series/parallel law, then generic convex solvers
                assert d["cap"] == pytest.approx(cap(p), rel=1e-9)
                assert d["cap"] == pytest.approx(brute_capacity(g, [s], [t], p), rel=1e-5)
                assert d["conn_mod"] == pytest.approx(brute_modulus(g, paths, g.length, p), rel=1e-5)
                assert d["sep_mod"] == pytest.approx(brute_modulus(g, cuts, g.area, p / (p - 1)), rel=1e-5)
            c2 = discrete_capacity_p(g, [s], [t], 2.0).value
            assert c2 == pytest.approx(conductance_oracle(g, s, t), rel=1e-8)


def test_8_ring_condenser(capsys):
    with criterion(capsys, 8, "ring condenser", 60):
        g = annulus_grid(1.0, E, 64, 256)
        c = discrete_capacity_p(g, g.sources, g.targets, 2.0).value
        assert abs(c - 2 * math.pi) <= 0.05 * 2 * math.pi
        chk = lemma4_lower_bound_check(Constant(1.0), 2.0, 1.0, E, n_radial=64, n_angular=256)
        assert chk.lhs >= 0.95 * chk.rhs


def test_9_determinism(capsys, tmp_path):
    with criterion(capsys, 9, "determinism"):
        names = sorted(bundled_scenarios())
        for sub in ("a", "b"):
            assert main(["run", "--all", "--seed", "3", "--out", str(tmp_path / sub)]) == 0
        for name in names:
            first = sorted((tmp_path / "a" / name).iterdir())
            assert any(f.name == "report.json" for f in first)
            for f in first:
                if f.name == "timing.json":
                    continue
                assert f.read_bytes() == (tmp_path / "b" / name / f.name).read_bytes(), f"{name}/{f.name}"
