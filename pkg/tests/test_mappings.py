import numpy as np
import pytest

from qcbound.errors import DomainError, InvalidInputError, InvalidParameterError
from qcbound.mappings import (
    Compose,
    DifferentialMethod,
    Identity,
    Linear,
    RadialStretch,
    Translate,
    differential,
    dilatation_field,
    lower_q_majorant,
    mapping_from_spec,
    sample_lattice,
)


def central(f, x, h):
    n = len(x)
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def test_radial_stretch_values():
    f = RadialStretch(3, 0.5)
    x = np.array([0.0, 3.0, 4.0])
    assert np.allclose(f(x), x / np.sqrt(5.0), rtol=1e-15)
    assert np.all(f(np.zeros(3)) == 0.0)
    with pytest.raises(DomainError):
        f.jacobian(np.zeros(3))
    assert np.array_equal(RadialStretch(3, 1.0).jacobian(np.zeros(3)), np.eye(3))


@pytest.mark.parametrize("richardson,order", [(False, 2), (True, 4)])
def test_fd_convergence_order(richardson, order):
    f = RadialStretch(3, 0.5)
    x = np.array([0.3, -0.2, 0.5])
    J = f.jacobian(x)
    hs = np.array([4e-2, 2e-2, 1e-2])
    errs = [np.max(np.abs(differential(f, x, DifferentialMethod("central_difference", h, richardson)) - J)) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(order, abs=0.3)


def test_fd_default_step_accuracy():
    f = RadialStretch(3, 0.5)
    x = np.array([0.3, -0.2, 0.5])
    D = differential(f, x, DifferentialMethod("central_difference"))
    assert np.max(np.abs(D - f.jacobian(x))) < 1e-8


def test_compose_chain_rule():
    A = np.array([[2.0, 1.0], [0.0, 1.0]])
    f = Compose([Translate([0.5, -0.25]), RadialStretch(2, 1.7), Linear(A)])
    x = np.array([0.4, 0.9])
    assert np.allclose(f.jacobian(x), central(f, x, 1e-6), atol=1e-8)
    y = A @ RadialStretch(2, 1.7)(x + [0.5, -0.25])
    assert np.allclose(f(x), y, rtol=1e-15)


def test_mapping_serialization_round_trip():
    f = Compose([Identity(3), RadialStretch(3, 0.5), Linear(np.diag([1.0, 2.0, 3.0])), Translate([1.0, 0, 0])])
    g = mapping_from_spec(f.to_spec())
    x = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(f(x), g(x))
    with pytest.raises(InvalidInputError):
        mapping_from_spec({"kind": "mobius"})
    with pytest.raises(InvalidInputError):
        Compose([Identity(2), Identity(3)])
    with pytest.raises(InvalidParameterError):
        RadialStretch(2, -1.0)
    with pytest.raises(InvalidParameterError):
        Identity(2, declared_multiplicity=0)


def test_lattice_geometry():
    pts = sample_lattice(3, [1.0, 0.0, 0.0], 0.1, 0.2, 4, 8)
    r = np.linalg.norm(pts - [1.0, 0.0, 0.0], axis=1)
    assert r.min() == pytest.approx(0.1) and r.max() == pytest.approx(0.2)
    a = sample_lattice(5, np.zeros(5), 0.1, 0.2, 3, 10, seed=5)
    b = sample_lattice(5, np.zeros(5), 0.1, 0.2, 3, 10, seed=5)
    assert np.array_equal(a, b)


def test_radial_stretch_field_constant():
    fld = dilatation_field(RadialStretch(3, 0.5), np.zeros(3), 1e-3, 0.5, 3)
    assert np.max(np.abs(fld.values - 4.0)) <= 1e-12
    assert not fld.any_infinite
    fd = dilatation_field(RadialStretch(3, 0.5), np.zeros(3), 1e-2, 0.5, 3,
                          method=DifferentialMethod("central_difference"))
    assert np.max(np.abs(fd.values - 4.0)) <= 1e-6


def test_identity_field_any_p():
    for p in (1.0, 2.0, 3.0, 4.5):
        assert np.all(dilatation_field(Identity(3), np.zeros(3), 0.1, 1.0, p).values == 1.0)


def test_lower_q_majorant():
    # alpha = 3 and exponent (p-n+1)/(n-1) = 1/2 for n = p = 3: Q = N * 4**0.5
    fld = lower_q_majorant(RadialStretch(3, 0.5, declared_multiplicity=2), np.zeros(3), 0.01, 0.5, 3.0)
    assert fld.alpha == 3.0
    assert np.allclose(fld.values, 4.0, rtol=1e-12)
    with pytest.raises(InvalidParameterError):
        lower_q_majorant(Identity(3), np.zeros(3), 0.1, 0.5, 1.5)


def test_singular_mapping_infinite():
    f = Linear(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert dilatation_field(f, np.zeros(2), 0.1, 0.2, 2, 2, 4).any_infinite
