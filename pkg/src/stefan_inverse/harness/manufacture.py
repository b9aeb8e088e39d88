"""Manufactured data sets with known truth, and the matching inversions.

Three strategies are provided.

``forward-trace``
    Run the forward solver with the true amplitude and record the trace
    derivative ``nu'`` it produces (problem 1).
``flux-consistent``
    Run the forward solver with the true amplitude and read the flux
    ``q`` (and ``q'``) off the trace identity (Neumann problems).
``modal-trace``
    Start from a smooth profile ``V(xi, t)``, add a multiple of the first
    eigenfunction so the boundary trace equals the physical target, and
    derive initial data and source from the modal equation. The truth is
    then exact by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..flux import FluxResult, recover_q_p2, recover_q_p4
from ..forward import ModalSeries, ModalSolution, TimeGrid, as_time_function, solve_modal
from ..geometry import FixedDomainCoefficients, Variant
from ..inverse import (
    RecoveryResult,
    VolterraSystem,
    assemble_p1,
    assemble_p2_r,
    assemble_p3,
    assemble_p4_r,
    differentiate_r,
    recover_p,
    solve_volterra,
)

__all__ = [
    "ManufacturedProblem",
    "InversionOutcome",
    "manufacture_forward_trace",
    "manufacture_flux_consistent",
    "manufacture_modal_trace",
    "trace_targets",
    "invert",
]

SQRT2 = math.sqrt(2.0)


@dataclass
class ManufacturedProblem:
    """Fixed-domain data, measurements and truth for one round trip.

    ``truth`` and ``measurement`` hold grid samples keyed by name
    (``R``, ``dR``, ``P``, ``q``, ``dq``, ``nu_prime``).
    """

    variant: Variant
    target: str
    strategy: str
    coeffs: FixedDomainCoefficients
    grid: TimeGrid
    psi: np.ndarray
    source: ModalSeries
    extra: ModalSeries | None
    truth: dict
    measurement: dict
    forward: ModalSolution
    amplitude: Callable | None = None
    amplitude_dt: Callable | None = None
    info: dict = field(default_factory=dict)

    def with_measurement(self, **updates) -> "ManufacturedProblem":
        meas = dict(self.measurement)
        meas.update(updates)
        return ManufacturedProblem(
            self.variant, self.target, self.strategy, self.coeffs, self.grid, self.psi, self.source,
            self.extra, self.truth, meas, self.forward, self.amplitude, self.amplitude_dt, dict(self.info),
        )


def _truth_samples(grid, R, dR):
    t = grid.nodes
    Rv = as_time_function(R)(t)
    dRv = as_time_function(dR)(t)
    return {"R": Rv, "dR": dRv, "P": -dRv / Rv}


def manufacture_forward_trace(psi, source, coeffs: FixedDomainCoefficients, grid: TimeGrid, R, dR=None,
                              extra=None) -> ManufacturedProblem:
    """Problem-1 data: ``nu'`` measured from a forward run with the true ``R``."""
    sol = solve_modal(psi, source, R, coeffs, grid, extra=extra)
    truth = _truth_samples(grid, R, dR) if dR is not None else {"R": sol.R.copy()}
    meas = {"nu_prime": sol.trace_derivative()}
    src = source if isinstance(source, ModalSeries) else ModalSeries.constant(source)
    return ManufacturedProblem(Variant.P1, "R", "forward-trace", coeffs, grid, np.asarray(psi, float), src,
                               extra, truth, meas, sol, R, dR)


def manufacture_flux_consistent(variant, psi, source, coeffs: FixedDomainCoefficients, grid: TimeGrid, R, dR,
                                extra=None, target: str = "R") -> ManufacturedProblem:
    """Neumann-problem data: ``q`` and ``q'`` from the trace of a forward run."""
    variant = Variant.parse(variant)
    if variant not in (Variant.P2, Variant.P4):
        raise ValueError("flux-consistent manufacture applies to P2 and P4")
    sol = solve_modal(psi, source, R, coeffs, grid, extra=extra)
    if variant is Variant.P2:
        flux = recover_q_p2(sol, coeffs.boundary, coeffs.consts)
    else:
        flux = recover_q_p4(sol, coeffs.boundary, coeffs.consts, R, dR)
    truth = _truth_samples(grid, R, dR)
    truth.update(q=flux.q.copy(), dq=flux.dq.copy())
    meas = {"q": flux.q.copy(), "dq": flux.dq.copy()}
    src = source if isinstance(source, ModalSeries) else ModalSeries.constant(source)
    return ManufacturedProblem(variant, target, "flux-consistent", coeffs, grid, np.asarray(psi, float), src,
                               extra, truth, meas, sol, R, dR)


def trace_targets(variant, coeffs: FixedDomainCoefficients, R=None, dR=None, q=None, dq=None):
    """``U_xi(1, t)`` prescribed by the Stefan condition and its derivative.

    Returns two callables of ``t``.
    """
    variant = Variant.parse(variant)
    consts = coeffs.consts
    b = coeffs.boundary
    k, L, us = consts.k, consts.L_latent, consts.u_star
    Rf, dRf = as_time_function(R), as_time_function(dR)
    qf, dqf = as_time_function(q), as_time_function(dq)
    if variant is Variant.P1:
        return (lambda t: -(L / k) * b.c(t) - us), (lambda t: -(L / k) * b.dc(t))
    if variant is Variant.P2:
        return (
            lambda t: (qf(t) * b.s(t) - L * b.c(t)) / k,
            lambda t: (dqf(t) * b.s(t) + qf(t) * b.ds(t) - L * b.dc(t)) / k,
        )
    if variant is Variant.P3:
        return (
            lambda t: -(L * b.c(t) + us * k) * Rf(t) / k,
            lambda t: -(L * b.dc(t) * Rf(t) + (L * b.c(t) + us * k) * dRf(t)) / k,
        )
    return (
        lambda t: (qf(t) * b.s(t) - L * b.c(t)) * Rf(t) / k,
        lambda t: (
            (dqf(t) * b.s(t) + qf(t) * b.ds(t) - L * b.dc(t)) * Rf(t)
            + (qf(t) * b.s(t) - L * b.c(t)) * dRf(t)
        ) / k,
    )


def manufacture_modal_trace(variant, coeffs: FixedDomainCoefficients, grid: TimeGrid, profile: Callable,
                            profile_dt: Callable, R, dR, q=None, dq=None, extra=None,
                            target: str | None = None) -> ManufacturedProblem:
    """Exact data from a profile whose boundary trace is corrected to the target.

    The modal coefficients are ``U_n = sigma V_n + alpha delta_n1`` with
    ``sigma = R`` for the reaction problems and 1 otherwise; ``alpha`` makes
    ``sum phi_n'(1) U_n`` equal the Stefan trace. Sources follow from
    ``h_n = (U_n' + (a lambda_n - b) U_n - e_n) / R``.
    """
    variant = Variant.parse(variant)
    basis = coeffs.basis
    N = basis.n_modes
    lam = basis.eigenvalues
    wts = basis.trace_weights
    Rf, dRf = as_time_function(R), as_time_function(dR)
    V = ModalSeries.from_field(profile, basis)
    dV = ModalSeries.from_field(profile_dt, basis)
    tau, dtau = trace_targets(variant, coeffs, R, dR, q, dq)
    ext = extra if extra is not None else None
    if variant.scaled:
        sig, dsig = Rf, dRf
    else:
        sig = lambda t: np.ones_like(np.asarray(t, float))
        dsig = lambda t: np.zeros_like(np.asarray(t, float))

    def modes(t):
        t = np.atleast_1d(np.asarray(t, float))
        Vn, dVn = V(t), dV(t)
        sv = sig(t)[None, :] * Vn
        dsv = dsig(t)[None, :] * Vn + sig(t)[None, :] * dVn
        alpha = (tau(t) - wts @ sv) / wts[0]
        dalpha = (dtau(t) - wts @ dsv) / wts[0]
        sv[0] += alpha
        dsv[0] += dalpha
        return sv, dsv

    def source_fn(t):
        Un, dUn = modes(t)
        rate = coeffs.a(t)[None, :] * lam[:, None] - coeffs.b_diag(t)[None, :]
        rhs = dUn + rate * Un
        if ext is not None:
            rhs = rhs - ext(t)
        return rhs / Rf(t)[None, :]

    source = ModalSeries(source_fn, N, "manufactured")
    psi = modes(np.array([0.0]))[0][:, 0]
    sol = solve_modal(psi, source, R, coeffs, grid, extra=ext)
    t = grid.nodes
    exact_U = modes(t)[0]
    truth = _truth_samples(grid, R, dR)
    if q is not None:
        truth["q"] = as_time_function(q)(t)
        truth["dq"] = as_time_function(dq)(t)
    meas = {}
    if variant is Variant.P1:
        meas["nu_prime"] = dtau(t) / SQRT2
    if variant in (Variant.P2, Variant.P4) and q is not None:
        meas["q"] = truth["q"].copy()
        meas["dq"] = truth["dq"].copy()
    if target is None:
        target = {"P1": "R", "P2": "q", "P3": "P", "P4": "q"}[variant.value]
    info = {"forward_vs_exact": float(np.max(np.abs(sol.U - exact_U)))}
    return ManufacturedProblem(variant, target, "modal-trace", coeffs, grid, psi, source, ext, truth, meas,
                               sol, R, dR, info)


@dataclass
class InversionOutcome:
    """Recovered target with the objects that produced it."""

    target: str
    values: np.ndarray
    reference: np.ndarray | None
    system: VolterraSystem | None = None
    recovery: RecoveryResult | None = None
    flux: FluxResult | None = None
    dR: np.ndarray | None = None
    R: np.ndarray | None = None

    @property
    def error(self) -> float | None:
        if self.reference is None:
            return None
        return float(np.max(np.abs(self.values - self.reference)))


def invert(problem: ManufacturedProblem, solver: str = "trapezoid", eps_rel: float = 1e-10) -> InversionOutcome:
    """Run the inverse pipeline matching ``problem.variant`` and ``problem.target``."""
    v, target = problem.variant, problem.target
    c, g = problem.coeffs, problem.grid
    meas, truth = problem.measurement, problem.truth
    ref = truth.get(target)
    if target == "q":
        sol = solve_modal(problem.psi, problem.source, problem.amplitude, c, g, extra=problem.extra)
        if v is Variant.P2:
            flux = recover_q_p2(sol, c.boundary, c.consts)
        elif v is Variant.P4:
            flux = recover_q_p4(sol, c.boundary, c.consts, problem.amplitude, problem.amplitude_dt, eps_rel)
        else:
            raise ValueError(f"flux recovery is not defined for {v.value}")
        return InversionOutcome("q", flux.q, ref, flux=flux)
    if v is Variant.P1:
        sys = assemble_p1(problem.psi, problem.source, c, g, nu_prime=meas.get("nu_prime"),
                          extra=problem.extra, eps_rel=eps_rel)
    elif v is Variant.P2:
        sys = assemble_p2_r(problem.psi, problem.source, c, g, meas["q"], meas["dq"],
                            extra=problem.extra, eps_rel=eps_rel)
    elif v is Variant.P3:
        sys = assemble_p3(problem.psi, problem.source, c, g, extra=problem.extra, eps_rel=eps_rel)
    else:
        sys = assemble_p4_r(problem.psi, problem.source, c, g, meas["q"], meas["dq"],
                            extra=problem.extra, eps_rel=eps_rel)
    rec = solve_volterra(sys, solver)
    if target == "R":
        return InversionOutcome("R", rec.values, ref, system=sys, recovery=rec, R=rec.values)
    if target == "P":
        dR = differentiate_r(sys, rec)
        P = recover_p(rec, dR, eps_rel=eps_rel)
        return InversionOutcome("P", P, ref, system=sys, recovery=rec, dR=dR, R=rec.values)
    raise ValueError(f"unknown target {target!r}")
