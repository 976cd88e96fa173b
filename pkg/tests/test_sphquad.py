import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from qcbound.errors import DomainError, InvalidInputError, InvalidParameterError
from qcbound.sphquad import (
    Constant,
    Grid,
    LinearCoord,
    LogPower,
    Power,
    Product,
    QuadratureRule,
    RadialFunction,
    RadialProfile,
    Sum,
    annulus_integral,
    ball_mean_oscillation,
    radial_profile,
    shell_integrals,
    sphere_ls_norm,
    sphere_mean,
    sphere_means,
    weight_from_spec,
)


def omega(n):
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def sphere_moment(n, k):
    """Mean of x_1**k over the unit sphere S^{n-1} (k even): Gamma-function closed form."""
    return special.gamma((k + 1) / 2) * special.gamma(n / 2) / (math.sqrt(math.pi) * special.gamma((n + k) / 2))


class Monomial:
    def __init__(self, k):
        self.k = k

    def __call__(self, x):
        return np.asarray(x)[..., 0] ** self.k


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("k", [0, 2, 4, 6, 8])
def test_deterministic_rules_exact_on_monomials(n, k):
    r = 0.7
    got = sphere_mean(Monomial(k), np.zeros(n), r)
    assert got == pytest.approx(sphere_moment(n, k) * r**k, rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("n", [4, 5])
def test_monte_carlo_within_error(n):
    rule = QuadratureRule(n, mc_samples=40000, seed=11)
    val, err = sphere_mean(Monomial(2), np.zeros(n), 1.0, rule, return_error=True)
    assert abs(val - 1.0 / n) <= 5 * err
    assert err < 5e-3


def test_monte_carlo_agrees_with_product_rule_in_3d_slice():
    # |x|^2 restricted to coordinates: mean of x1^2 + x2^2 + x3^2 on S^4 is 3/5
    class Head:
        def __call__(self, x):
            return np.sum(np.asarray(x)[..., :3] ** 2, axis=-1)

    val, err = sphere_mean(Head(), np.zeros(5), 1.0, QuadratureRule(5, mc_samples=20000, seed=2), return_error=True)
    assert abs(val - 0.6) <= 5 * err


def test_mc_reproducible_by_seed():
    a = sphere_means(Monomial(2), np.zeros(4), [0.5, 1.0], QuadratureRule(4, seed=9))
    b = sphere_means(Monomial(2), np.zeros(4), [0.5, 1.0], QuadratureRule(4, seed=9))
    c = sphere_means(Monomial(2), np.zeros(4), [0.5, 1.0], QuadratureRule(4, seed=10))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_constant_and_linear_means():
    assert sphere_mean(Constant(3.5), np.zeros(3), 0.2) == pytest.approx(3.5, rel=1e-15)
    x0 = np.array([10.0, -2.0])
    assert sphere_mean(LinearCoord([1.0, 0.0]), x0, 0.5) == pytest.approx(10.0, rel=1e-14)


@pytest.mark.parametrize("n,s", [(2, 1.0), (3, 2.0), (3, 0.5)])
def test_ls_norm_constant(n, s):
    c, r = 2.0, 0.3
    expected = (c**s * omega(n) * r ** (n - 1)) ** (1 / s)
    assert sphere_ls_norm(Constant(c), np.zeros(n), r, s) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("n", [2, 3])
def test_annulus_volume(n):
    vol = annulus_integral(Constant(1.0), np.zeros(n), 1.0, 3.0)
    assert vol == pytest.approx(omega(n) / n * (3.0**n - 1.0), rel=1e-12)


def test_annulus_radial_oracle():
    # int_{A(0, 1e-6, 0.5)} |x|^-2 log(1/|x|) dm in R^3 against a 1-D quad
    Q = Product([Power(-2.0), LogPower(1.0)])
    got = annulus_integral(Q, np.zeros(3), 1e-6, 0.5)
    ref = 4 * math.pi * integrate.quad(lambda r: math.log(1 / r), 1e-6, 0.5, epsabs=0, epsrel=1e-13)[0]
    assert got == pytest.approx(ref, rel=1e-10)


def test_shell_integrals_additive():
    edges = 0.5 * 2.0 ** -np.arange(0, 8)
    sh = shell_integrals(Power(-1.0), np.zeros(2), edges)
    whole = annulus_integral(Power(-1.0), np.zeros(2), edges[-1], edges[0])
    assert sh.sum() == pytest.approx(whole, rel=1e-12)


def test_annulus_errors():
    with pytest.raises(InvalidParameterError):
        annulus_integral(Constant(1.0), np.zeros(2), 2.0, 1.0)


def test_oscillation_constant_exactly_zero():
    for n in (2, 3, 4):
        assert ball_mean_oscillation(Constant(7.25), np.zeros(n), 0.1) == 0.0


def test_oscillation_linear_coordinate():
    # mean |x_1| over the disc of radius eps is 4 eps / (3 pi)
    eps = 0.5
    got = ball_mean_oscillation(LinearCoord([1.0, 0.0]), np.zeros(2), eps)
    assert got == pytest.approx(4 * eps / (3 * math.pi), rel=2e-3)


def test_oscillation_non_integrable_is_nan():
    assert math.isnan(ball_mean_oscillation(Power(-3.0), np.zeros(3), 0.1))


def test_profile_and_csv():
    prof = radial_profile(LogPower(2.0), np.zeros(3), [1e-3, 1e-2, 1e-1])
    assert np.allclose(prof.values, np.log(1 / prof.radii) ** 2, rtol=1e-13)
    assert prof(0.05) > 0
    with pytest.raises(DomainError):
        prof(0.5)
    rows = list(csv.reader(io.StringIO(prof.to_csv())))
    assert rows[0] == ["r", "value", "error_estimate"]
    assert len(rows) == 4
    with pytest.raises(InvalidInputError):
        RadialProfile((0.0,), [0.2, 0.1], [1.0, 1.0])


def test_profile_interpolation_exact_on_powers():
    prof = radial_profile(Power(1.5), np.zeros(2), np.geomspace(1e-3, 1.0, 7))
    t = np.geomspace(2e-3, 0.9, 11)
    assert np.allclose(prof(t), t**1.5, rtol=1e-12)


def test_grid_weight_bilinear_exact():
    ax = np.linspace(-1, 1, 5)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    g = Grid([ax, ax], 1 + X + 2 * Y + 3 * X * Y)
    pts = np.array([[0.13, -0.4], [0.9, 0.77]])
    assert np.allclose(g(pts), 1 + pts[:, 0] + 2 * pts[:, 1] + 3 * pts[:, 0] * pts[:, 1], rtol=1e-14)
    assert sphere_mean(g, np.zeros(2), 0.6) == pytest.approx(1.0, rel=1e-13)
    with pytest.raises(DomainError):
        g(np.array([[2.0, 0.0]]))


def test_logpower_domain():
    with pytest.raises(DomainError):
        LogPower(1.0)(np.array([[1.5, 0.0]]))


def test_weight_serialization_round_trip():
    w = Sum([Constant(1.0), Product([Power(-0.5, [0.1, 0.2]), LogPower(2.0)]), LinearCoord([1.0, 2.0], 3.0)])
    w2 = weight_from_spec(w.to_spec())
    x = np.array([[0.3, 0.4], [0.05, 0.01]])
    assert np.array_equal(w(x), w2(x))
    with pytest.raises(InvalidInputError):
        weight_from_spec({"kind": "nope"})
    with pytest.raises(InvalidInputError):
        RadialFunction(np.exp).to_spec()


@settings(max_examples=30, deadline=None)
@given(cx=st.floats(-5, 5), cy=st.floats(-5, 5), cz=st.floats(-5, 5), eps=st.floats(0.01, 0.5))
def test_oscillation_translation_invariant(cx, cy, cz, eps):
    x0 = np.array([cx, cy, cz])
    a = ball_mean_oscillation(LogPower(1.0), np.zeros(3), eps)
    b = ball_mean_oscillation(LogPower(1.0, center=x0), x0, eps)
    assert b == pytest.approx(a, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.01, 100.0), r=st.floats(1e-4, 0.9))
def test_mean_scales_linearly(c, r):
    base = sphere_mean(LogPower(1.5), np.zeros(3), r)
    assert sphere_mean(Product([Constant(c), LogPower(1.5)]), np.zeros(3), r) == pytest.approx(c * base, rel=1e-13)
