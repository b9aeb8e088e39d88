"""Boundary heat flux q(t) from the modal trace.

The Stefan condition at ``xi = 1`` reads ``k U_xi(1, t) = (q s - L c) R``
(``R = 1`` for the problem without reaction), so ``q`` follows directly
from the trace ``U_xi(1, t) = sum_n phi_n'(1) U_n(t)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import ModalSolution, TimeGrid, as_time_function
from .geometry import MovingBoundary, PhysicalConstants
from .inverse import EPS_DEN, guard_denominator

__all__ = ["FluxResult", "recover_q_p2", "recover_q_p4", "trace_identity_residual"]


@dataclass
class FluxResult:
    """Recovered flux samples.

    Attributes
    ----------
    q : ndarray
        Flux at the grid nodes.
    trace : ndarray
        ``U_xi(1, t_j)`` used to compute ``q``.
    dq : ndarray or None
        ``q'(t_j)`` from the modal equation, when available.
    R : ndarray
        Amplitude samples used (ones for the problem without reaction).
    """

    grid: TimeGrid
    q: np.ndarray
    trace: np.ndarray
    R: np.ndarray
    dq: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes


def _q_from_trace(uxi, R, s, c, k, L):
    # shared by both variants so that R == 1 reproduces the P2 result bitwise
    return (k * (uxi / R) + L * c) / s


def _flux(sol: ModalSolution, boundary: MovingBoundary, consts: PhysicalConstants, R, dR, variant):
    t = sol.grid.nodes
    s = boundary.s(t)
    if np.any(s <= 0):
        boundary.bounds()
    c = boundary.c(t)
    k, L = consts.k, consts.L_latent
    uxi = sol.trace_xi()
    q = _q_from_trace(uxi, R, s, c, k, L)
    dq = None
    if dR is not None:
        duxi = sol.trace_xi_derivative()
        d_ratio = duxi / R - uxi * dR / R**2
        dq = (k * d_ratio + L * boundary.dc(t)) / s - q * boundary.ds(t) / s
    prov = {
        "variant": variant,
        "formula": "q = (k U_xi(1) / R + L c) / s",
        "trace_weight": "phi_n'(1) = sqrt(2) (-1)^n sqrt(lambda_n)",
        "N": sol.basis.n_modes,
        "kind": sol.basis.kind.value,
    }
    return FluxResult(sol.grid, q, uxi, np.asarray(R, dtype=float) + np.zeros_like(t), dq, prov)


def recover_q_p2(sol: ModalSolution, boundary: MovingBoundary, consts: PhysicalConstants) -> FluxResult:
    """``q = (k U_xi(1) + L c) / s`` for the Neumann problem without reaction.

    Examples
    --------
    A zero field on ``s = 1 + 0.1 t`` leaves only the interface term,
    ``q = L s'``.
    """
    t = sol.grid.nodes
    one = np.ones_like(t)
    return _flux(sol, boundary, consts, one, np.zeros_like(t), "P2")


def recover_q_p4(sol: ModalSolution, boundary: MovingBoundary, consts: PhysicalConstants, R, dR=None,
                 eps_rel: float = EPS_DEN) -> FluxResult:
    """``q = (k U_xi(1) / R + L c) / s`` for the Neumann reaction problem.

    Parameters
    ----------
    R : callable, scalar or array of grid samples
    dR : callable, scalar or array, optional
        Enables ``q'`` in the result.
    """
    t = sol.grid.nodes
    Rv = _grid_values(R, t)
    guard_denominator("R", Rv, t, eps_rel)
    dRv = _grid_values(dR, t) if dR is not None else None
    return _flux(sol, boundary, consts, Rv, dRv, "P4")


def _grid_values(value, t):
    if callable(value) or value is None or np.ndim(value) == 0:
        return as_time_function(value)(t)
    arr = np.asarray(value, dtype=float)
    if arr.shape != t.shape:
        raise ValueError(f"expected {t.size} samples, got {arr.shape}")
    return arr


def trace_identity_residual(result: FluxResult, boundary: MovingBoundary, consts: PhysicalConstants) -> float:
    """``max_j |k U_xi(1) - (q s - L c) R|`` relative to the largest term."""
    t = result.grid.nodes
    s, c = boundary.s(t), boundary.c(t)
    lhs = consts.k * result.trace
    rhs = (result.q * s - consts.L_latent * c) * result.R
    scale = max(1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    return float(np.max(np.abs(lhs - rhs))) / scale
