import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qcbound.diffcore import (
    ZERO_TOL,
    as_differential,
    dilatation_sample,
    dimension_constants,
    inner_dilatation,
    singular_spectrum,
)
from qcbound.errors import InvalidInputError, InvalidParameterError


def oracle_inner_dilatation(M, p):
    """|det| / l**p with l from the eigenvalues of M^T M (no SVD)."""
    lam = np.linalg.eigvalsh(M.T @ M)
    return abs(np.linalg.det(M)) / math.sqrt(max(lam[0], 0.0)) ** p


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def test_dimension_constants():
    c2, c3 = dimension_constants(2), dimension_constants(3)
    assert c2.omega == pytest.approx(2 * math.pi, rel=1e-15)
    assert c3.omega == pytest.approx(4 * math.pi, rel=1e-15)
    assert c3.Omega == pytest.approx(4 * math.pi / 3, rel=1e-15)
    assert dimension_constants(4).omega == pytest.approx(2 * math.pi**2, rel=1e-15)


def test_spectrum_ascending_and_product():
    M = np.array([[3.0, 1.0, 0.0], [0.0, 2.0, 0.0], [1.0, 0.0, 0.5]])
    sv = singular_spectrum(M)
    assert np.all(np.diff(sv) >= 0)
    assert np.prod(sv) == pytest.approx(abs(np.linalg.det(M)), rel=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, 6.0])
def test_identity_has_unit_dilatation(n, p):
    assert inner_dilatation(np.eye(n), p) == 1.0


def test_radial_stretch_differential():
    # differential of |x|^(c-1) x at |x| = r: r^(c-1) (I + (c-1) u u^T)
    c, r = 0.5, 0.3
    u = np.array([1.0, 2.0, 2.0]) / 3.0
    M = r ** (c - 1) * (np.eye(3) + (c - 1) * np.outer(u, u))
    sv = singular_spectrum(M)
    assert np.allclose(sv, r ** (c - 1) * np.array([c, 1.0, 1.0]), rtol=1e-14)
    assert abs(inner_dilatation(M, 3) - 4.0) <= 1e-12


def test_branches():
    assert inner_dilatation(np.zeros((3, 3)), 3) == 1.0
    assert inner_dilatation(np.full((2, 2), 1e-15), 2) == 1.0
    assert math.isinf(inner_dilatation(np.array([[1.0, 0.0], [0.0, 0.0]]), 2))
    assert math.isinf(inner_dilatation(np.array([[1.0, 2.0], [2.0, 4.0]]), 2))
    s = dilatation_sample((0.0, 0.0), np.diag([1.0, 0.0]), 2)
    assert s.is_infinite and s.jacobian == 0.0


def test_near_singular_threshold():
    eps = ZERO_TOL * 0.1
    assert math.isinf(inner_dilatation(np.diag([1.0, eps]), 2))
    assert math.isfinite(inner_dilatation(np.diag([1.0, 1e-6]), 2))


def test_conformal_scaled_rotation():
    rng = np.random.default_rng(3)
    for n in (2, 3, 4):
        M = 2.5 * random_orthogonal(rng, n)
        assert inner_dilatation(M, n) == pytest.approx(1.0, rel=1e-13)


def test_validation_errors():
    with pytest.raises(InvalidInputError):
        as_differential(np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        as_differential(np.eye(7))
    with pytest.raises(InvalidInputError):
        as_differential(np.eye(1))
    with pytest.raises(InvalidInputError):
        as_differential(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(InvalidParameterError):
        inner_dilatation(np.eye(2), 0.5)


mats = st.integers(2, 5).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-3, 3, allow_nan=False, allow_subnormal=False))
)


@settings(max_examples=200, deadline=None)
@given(M=mats, p=st.floats(1.0, 6.0))
def test_matches_eigen_oracle(M, p):
    sv = np.linalg.svd(M, compute_uv=False)
    # keep away from the degenerate branch and from ill-conditioned minima
    if np.max(np.abs(M)) < 1e-6 or sv.min() < 1e-3 * sv.max():
        return
    assert inner_dilatation(M, p) == pytest.approx(oracle_inner_dilatation(M, p), rel=1e-7)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 6), p=st.floats(1.0, 6.0))
def test_orthogonal_invariance(seed, n, p):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    U, V = random_orthogonal(rng, n), random_orthogonal(rng, n)
    assert inner_dilatation(U @ M @ V, p) == pytest.approx(inner_dilatation(M, p), rel=1e-8)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 6), lam=st.floats(0.1, 10.0))
def test_homogeneity(seed, n, lam):
    # K_{I,p}(lam M) = lam**(n-p) K_{I,p}(M)
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n)) + 3 * np.eye(n)
    p = 2.5
    assert inner_dilatation(lam * M, p) == pytest.approx(lam ** (n - p) * inner_dilatation(M, p), rel=1e-9)
