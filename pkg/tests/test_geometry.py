import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefan_inverse.basis import BasisKind, EigenBasis
from stefan_inverse.errors import BoundaryPositivityError, DomainError, MissingDataError
from stefan_inverse.geometry import (
    MovingBoundary,
    PhysicalConstants,
    PhysicalData,
    TransformChain,
    Variant,
    boundary_eval,
    make_coefficients,
)

C = PhysicalConstants(a2=1.0, k=1.0, L_latent=1.0, u_star=0.5, T_horizon=1.0)


def test_constants_validation():
    with pytest.raises(ValueError):
        PhysicalConstants(a2=-1.0, k=1.0, L_latent=1.0)
    with pytest.raises(ValueError):
        PhysicalConstants(a2=1.0, k=0.0, L_latent=1.0)


def test_boundary_eval_examples():
    st_ = boundary_eval(MovingBoundary.affine(1.0, 0.0, 1.0), 0.5)
    assert tuple(map(float, st_)) == (1.0, 0.0, 0.0, 0.0, 0.0)
    st_ = boundary_eval(MovingBoundary.affine(1.0, 0.1, 2.0), 2.0)
    assert np.allclose(tuple(map(float, st_)), (1.2, 0.1, 0.0, 0.12, 0.01), atol=1e-15)
    st_ = boundary_eval(MovingBoundary.polynomial([1.0, 0.0, 1.0], 1.0), 1.0)
    assert tuple(map(float, st_)) == (2.0, 2.0, 2.0, 4.0, 8.0)


def test_boundary_eval_outside_horizon():
    with pytest.raises(DomainError):
        boundary_eval(MovingBoundary.affine(1.0, 0.1, 1.0), 1.5)


def test_positivity_failure_reports_time():
    b = MovingBoundary.affine(1.0, -2.0, 1.0)
    with pytest.raises(BoundaryPositivityError) as exc:
        b.bounds()
    assert exc.value.t_star == pytest.approx(0.5, abs=1e-3)


def test_sampled_boundary_matches_smooth_function():
    t = np.linspace(0, 1, 201)
    b = MovingBoundary.sampled(t, 1 + 0.1 * t + 0.05 * t**2)
    tt = np.linspace(0.05, 0.95, 7)
    assert np.max(np.abs(b.ds(tt) - (0.1 + 0.1 * tt))) < 1e-6
    assert np.max(np.abs(b.d2s(tt) - 0.1)) < 1e-3


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(-0.2, 0.5), st.floats(-0.2, 0.2))
def test_dc_matches_numerical_derivative(a0, a1, a2):
    b = MovingBoundary.polynomial([a0, a1, a2], 1.0)
    t = np.linspace(0.1, 0.9, 9)
    h = 1e-5
    num = (b.c(t + h) - b.c(t - h)) / (2 * h)
    assert np.max(np.abs(b.dc(t) - num)) < 1e-6


@pytest.mark.parametrize("kind", [BasisKind.DIRICHLET_DIRICHLET, BasisKind.NEUMANN_DIRICHLET])
def test_b_diag_quadrature_value(kind):
    co = make_coefficients(MovingBoundary.affine(1.0, 0.1, 1.0), C, EigenBasis(kind, 32))
    assert float(co.b_diag(0.0)) == pytest.approx(-0.05, abs=1e-12)
    assert co.diag_spread < 1e-10
    static = make_coefficients(MovingBoundary.affine(1.0, 0.0, 1.0), C, EigenBasis(kind, 8))
    assert float(static.a(0.3)) == 1.0
    assert float(static.b_diag(0.3)) == 0.0


def _check_round_trip(variant, data, b, consts):
    chain = TransformChain(variant, b, consts)
    u = lambda x, t: np.sin(x + t) + x**2 * t
    R = data.R
    q = data.q
    U = chain.field_to_fixed(u, R, q)
    back = chain.field_from_fixed(U, R, q)
    x = np.linspace(0.0, 1.0, 7)
    for t in (0.0, 0.4, 1.0):
        xs = x * b.s(t)
        assert np.max(np.abs(back(xs, t) - u(xs, t))) < 1e-9


@pytest.mark.parametrize("variant", list(Variant))
def test_field_round_trip(variant):
    b = MovingBoundary.affine(1.0, 0.1, 1.0)
    data = PhysicalData(R=lambda t: np.exp(-0.5 * t), dR=lambda t: -0.5 * np.exp(-0.5 * t),
                        q=lambda t: 1 + 0.2 * np.sin(t), dq=lambda t: 0.2 * np.cos(t))
    _check_round_trip(variant, data, b, C)


def test_transform_examples():
    b = MovingBoundary.affine(1.0, 0.0, 1.0)
    xi = np.linspace(0, 1, 11)
    phi = lambda x: C.u_star * x / b.s0
    fd = TransformChain(Variant.P1, b, C).data_to_fixed(PhysicalData(phi=phi, f=lambda x, t: 0 * x))
    assert np.max(np.abs(fd.initial(xi))) < 1e-15
    fd = TransformChain(Variant.P3, b, C).data_to_fixed(
        PhysicalData(phi=phi, f=lambda x, t: 0 * x, R=lambda t: 1 + 0 * t, dR=lambda t: 0 * t)
    )
    assert np.max(np.abs(fd.initial(xi))) < 1e-15
    q0 = 1.3
    phi2 = lambda x: C.u_star + q0 * (b.s0 - x) / C.k
    fd = TransformChain(Variant.P2, b, C).data_to_fixed(
        PhysicalData(phi=phi2, f=lambda x, t: 0 * x, q=lambda t: q0 + 0 * t, dq=lambda t: 0 * t)
    )
    assert np.max(np.abs(fd.initial(xi))) < 1e-14


def test_inverse_map_examples():
    b = MovingBoundary.affine(1.0, 0.0, 1.0)
    zero = lambda xi, t: 0 * xi
    x = np.linspace(0, 1, 5)
    u = TransformChain(Variant.P1, b, C).field_from_fixed(zero)
    assert np.allclose(u(x, 0.3), C.u_star * x)
    u = TransformChain(Variant.P3, b, C).field_from_fixed(zero, R=lambda t: np.exp(-t))
    assert np.allclose(u(x, 0.3), C.u_star * x)
    u = TransformChain(Variant.P2, b, C).field_from_fixed(zero, q=lambda t: 2.0 + 0 * t)
    assert np.allclose(u(x, 0.3), C.u_star - 2.0 * (x - 1) / C.k)


def test_missing_data_raises():
    b = MovingBoundary.affine(1.0, 0.1, 1.0)
    with pytest.raises(MissingDataError):
        TransformChain(Variant.P2, b, C).data_to_fixed(PhysicalData(phi=lambda x: x, f=lambda x, t: x))


def test_horizon_mismatch_rejected():
    with pytest.raises(ValueError):
        make_coefficients(MovingBoundary.affine(1.0, 0.1, 2.0), C, EigenBasis(BasisKind.DIRICHLET_DIRICHLET, 4))
