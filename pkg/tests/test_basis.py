import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefan_inverse.basis import (
    BasisKind,
    EigenBasis,
    QuadratureWarning,
    SmoothFunction,
    check_compatibility,
    ck_norm,
    eigenfunction,
    eigenfunction_derivative,
    eigenvalue,
    tail_bound_constant,
    project,
    synthesize,
    trace_weight,
    weighted_tail_sum,
)
from stefan_inverse.errors import DomainError

DD = BasisKind.DIRICHLET_DIRICHLET
ND = BasisKind.NEUMANN_DIRICHLET


def test_eigenvalues_closed_form():
    assert eigenvalue(DD, 1) == pytest.approx(9.8696044, abs=1e-7)
    assert eigenvalue(ND, 1) == pytest.approx(2.4674011, abs=1e-7)
    assert eigenvalue(DD, 3) == pytest.approx(9 * math.pi**2, rel=1e-15)
    n = np.arange(1, 33)
    assert np.array_equal(EigenBasis(ND, 32).eigenvalues, (2 * n - 1) ** 2 * math.pi**2 / 4)


def test_eigenfunction_values():
    assert eigenfunction(DD, 1, 0.0) == 0.0
    assert eigenfunction(DD, 1, 0.5) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert eigenfunction(ND, 1, 0.0) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert eigenfunction_derivative(DD, 1, 1.0) == pytest.approx(-math.sqrt(2) * math.pi, rel=1e-14)


def test_eigenfunction_rejects_outside_interval():
    with pytest.raises(DomainError):
        eigenfunction(DD, 1, 1.5)


@pytest.mark.parametrize("kind", [DD, ND])
def test_trace_weight_matches_derivative(kind):
    for n in range(1, 10):
        d = eigenfunction_derivative(kind, n, 1.0)
        assert trace_weight(kind, n) == pytest.approx(d, rel=1e-12)
        assert trace_weight(kind, n) == pytest.approx(math.sqrt(2) * (-1) ** n * math.sqrt(eigenvalue(kind, n)))


@pytest.mark.parametrize("kind", [DD, ND])
@pytest.mark.parametrize("N", [8, 32, 100])
def test_orthonormality(kind, N):
    b = EigenBasis(kind, N)
    G = (b.phi_nodes * b.weights) @ b.phi_nodes.T
    assert np.max(np.abs(G - np.eye(N))) < 1e-12


def test_low_quadrature_warns():
    with pytest.warns(QuadratureWarning):
        EigenBasis(DD, 40, quadrature_order=60)


def test_projection_of_parabola():
    b = EigenBasis(DD, 64)
    c = project(lambda x: x * (1 - x), b)
    n = np.arange(1, 65)
    oracle = math.sqrt(2) * 2 * (1 - (-1.0) ** n) / (n * math.pi) ** 3
    assert c[0] == pytest.approx(4 * math.sqrt(2) / math.pi**3, abs=1e-12)
    assert abs(c[1]) < 1e-14
    assert np.max(np.abs(c - oracle)) < 1e-13
    assert synthesize(c, b, 0.5) == pytest.approx(0.25, abs=1e-6)


def test_projection_of_eigenfunction_is_unit_vector():
    b = EigenBasis(ND, 20)
    for m in (1, 7, 20):
        c = b.project(lambda x, m=m: eigenfunction(ND, m, x))
        e = np.zeros(20)
        e[m - 1] = 1.0
        assert np.max(np.abs(c - e)) < 1e-12


def test_synthesize_basics():
    b = EigenBasis(DD, 8)
    e1 = np.eye(8)[0]
    assert synthesize(e1, b, 0.5) == pytest.approx(math.sqrt(2))
    assert synthesize(np.zeros(8), b, 0.3) == 0.0
    assert synthesize(e1, EigenBasis(ND, 8), 1.0) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=4))
def test_bessel_inequality_monotone(cs):
    """||f||^2 - sum_{n<=N} f_n^2 is non-negative and non-increasing in N."""
    def f(x):
        return sum(c * x ** (k + 1) * (1 - x) for k, c in enumerate(cs))
    b = EigenBasis(DD, 40)
    norm2 = float(b.weights @ f(b.nodes) ** 2)
    coeffs = b.project(f)
    gaps = norm2 - np.cumsum(coeffs**2)
    assert np.all(gaps >= -1e-10)
    assert np.all(np.diff(gaps) <= 1e-14)


def test_weighted_tail_sum_examples():
    b = EigenBasis(DD, 16)
    assert float(weighted_tail_sum(np.zeros(16), b, 1.0)) == 0.0
    assert float(weighted_tail_sum(np.eye(16)[0], b, 0.5)) == pytest.approx(math.pi)


def test_tail_bound_constant_values():
    assert tail_bound_constant(DD) == pytest.approx(math.sqrt(1 / 3), rel=1e-15)
    assert tail_bound_constant(ND) == pytest.approx(1.0, rel=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3.0), st.integers(3, 6))
def test_tail_bound_property(amp, p):
    """Compatible data of order 2 satisfy the weighted-sum bound."""
    f = SmoothFunction(lambda x: amp * x**p * (1 - x) ** p)
    assert check_compatibility(f, DD, 2)
    b = EigenBasis(DD, 64)
    lhs = float(weighted_tail_sum(b.project(f), b, 1.0))
    assert lhs <= tail_bound_constant(DD) * ck_norm(f, 4) + 1e-9


def test_compatibility_examples():
    cube = SmoothFunction(lambda x: x**3 * (1 - x) ** 3)
    assert check_compatibility(cube, DD, 2).passed
    rep = check_compatibility(cube, DD, 3)
    assert not rep.passed
    j, end, value = rep.failures[0]
    assert (j, end) == (3, 0.0)
    assert value == pytest.approx(6.0, rel=1e-6)
    assert check_compatibility(lambda x: x**4 * (1 - x) ** 4, DD, 3).passed


def test_fd_derivatives_match_analytic():
    f = SmoothFunction(lambda x: np.sin(2 * x))
    x = np.array([0.0, 0.3, 1.0])
    for k, exact in enumerate([np.sin(2 * x), 2 * np.cos(2 * x), -4 * np.sin(2 * x),
                               -8 * np.cos(2 * x), 16 * np.sin(2 * x)]):
        assert np.max(np.abs(f.derivative(k, x) - exact)) < 1e-5 * 2**k
