import numpy as np
import pytest

from stefan_inverse.basis import BasisKind, EigenBasis
from stefan_inverse.forward import ModalSeries, TimeGrid
from stefan_inverse.geometry import MovingBoundary, PhysicalConstants, make_coefficients
from stefan_inverse.harness.manufacture import (
    invert,
    manufacture_flux_consistent,
    manufacture_forward_trace,
    manufacture_modal_trace,
)

DD = BasisKind.DIRICHLET_DIRICHLET
ND = BasisKind.NEUMANN_DIRICHLET


def _coeffs(kind, N, u_star=0.0, rate=0.1):
    consts = PhysicalConstants(a2=0.05, k=1.0, L_latent=1.0, u_star=u_star)
    return make_coefficients(MovingBoundary.affine(1.0, rate, 1.0), consts, EigenBasis(kind, N))


PROFILE = lambda x, t: (1 + t) * (np.sin(np.pi * x) + 0.3 * np.sin(2 * np.pi * x))
PROFILE_DT = lambda x, t: np.sin(np.pi * x) + 0.3 * np.sin(2 * np.pi * x)


def test_modal_trace_without_reaction_has_unit_amplitude():
    """P_true = 0 gives R = 1; the error falls by about 4 per halving of dt."""
    co = _coeffs(DD, 16, u_star=1.0)
    errs = []
    for M in (100, 200):
        pb = manufacture_modal_trace("P3", co, TimeGrid(1.0, M), PROFILE, PROFILE_DT, 1.0, 0.0, target="P")
        assert pb.info["forward_vs_exact"] < 1e-12
        assert np.all(pb.truth["P"] == 0)
        out = invert(pb)
        errs.append(np.max(np.abs(out.R - 1.0)))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_modal_trace_p1_measurement_is_exact():
    co = _coeffs(DD, 16)
    g = TimeGrid(1.0, 400)
    R = lambda t: 1 + t / 2
    pb = manufacture_modal_trace("P1", co, g, PROFILE, PROFILE_DT, R, lambda t: 0.5 + 0 * t)
    assert pb.info["forward_vs_exact"] < 1e-12
    assert invert(pb).error < 2e-5


def test_flux_consistent_measurements_match_forward():
    co = _coeffs(ND, 16)
    g = TimeGrid(1.0, 100)
    b = co.basis
    psi = b.project(lambda x: np.cos(np.pi * x / 2) ** 3)
    h = ModalSeries.from_field(lambda x, t: (1 + t) * np.cos(np.pi * x / 2), b)
    pb = manufacture_flux_consistent("P2", psi, h, co, g, 1.0, 0.0)
    assert np.array_equal(pb.measurement["q"], pb.truth["q"])
    assert invert(pb.__class__(**{**pb.__dict__, "target": "q"})).error == 0.0
    with pytest.raises(ValueError):
        manufacture_flux_consistent("P1", psi, h, co, g, 1.0, 0.0)


def test_forward_trace_round_trip():
    co = _coeffs(DD, 16)
    g = TimeGrid(1.0, 200)
    b = co.basis
    psi = b.project(lambda x: x**4 * (1 - x) ** 4)
    h = ModalSeries.from_field(lambda x, t: (1 + t) * np.sin(np.pi * x), b)
    pb = manufacture_forward_trace(psi, h, co, g, lambda t: np.exp(-t), lambda t: -np.exp(-t))
    assert pb.strategy == "forward-trace"
    assert invert(pb).error < 1e-4
