"""Volterra equations of the second kind for the source amplitude R(t).

Two assembly shapes occur.

*Derivative form* (P1, and P2 with given flux). Differentiating the trace
``nu = sum s_n U_n`` with ``s_n = (-1)^n sqrt(lambda_n)`` and inserting the
modal equation gives

    R(t) w(t) = nu'(t) - sum s_n e_n + sum alpha_n (U0_n + int_0^t R h_n E_n),

with ``w = sum s_n h_n``, ``alpha_n = s_n (a lambda_n - b)``, ``U0_n`` the
R-independent part of the modal solution and
``E_n(tau, t) = exp(-int_tau^t (a lambda_n - b))``.

*Trace form* (P3, and P4 with given flux). The boundary condition is itself
linear in R: ``beta(t) R(t) = sqrt(2) sum s_n U_n(t)``.

Both are written as ``R = F + int_0^t K(tau, t) R(tau) dtau`` and sampled
on the time grid; ``kernel[j, i]`` holds ``K(t_i, t_j)`` for ``i <= j``.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DenominatorTooSmall, PicardDivergence
from .forward import ModalSeries, TimeGrid, _as_series, as_time_function, solve_modal
from .geometry import FixedDomainCoefficients, PhysicalConstants

__all__ = [
    "SolverMethod",
    "VolterraSystem",
    "RecoveryResult",
    "EPS_DEN",
    "assemble_p1",
    "assemble_p2_r",
    "assemble_p3",
    "assemble_p4_r",
    "assemble_derivative_form",
    "assemble_trace_form",
    "system_from_functions",
    "solve_volterra",
    "differentiate_r",
    "recover_p",
    "guard_denominator",
    "gronwall_bound",
    "trapezoid_weights",
]

log = logging.getLogger(__name__)

EPS_DEN = 1e-10
TAIL_WARN = 1e-6
SQRT2 = math.sqrt(2.0)


class SolverMethod(enum.Enum):
    PRODUCT_TRAPEZOID = "trapezoid"
    PICARD = "picard"

    @classmethod
    def parse(cls, value) -> "SolverMethod":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        if key in ("trapezoid", "product_trapezoid", "producttrapezoid"):
            return cls.PRODUCT_TRAPEZOID
        if key == "picard":
            return cls.PICARD
        raise ValueError(f"unknown solver {value!r}")


def guard_denominator(name: str, values, t, eps_rel: float = EPS_DEN) -> float:
    """Check ``|values| >= eps_rel * sup|values|`` and return the margin.

    Raises
    ------
    DenominatorTooSmall
        At the first node violating the guard (or at ``t_0`` if the
        denominator vanishes identically).
    """
    v = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    sup = float(np.max(np.abs(v))) if v.size else 0.0
    eps = eps_rel * sup
    if not sup > 0.0 or not np.all(np.isfinite(v)):
        bad = np.flatnonzero(~np.isfinite(v))
        j = int(bad[0]) if bad.size else 0
        raise DenominatorTooSmall(name, t[j], v[j] if v.size else 0.0, eps)
    bad = np.flatnonzero(np.abs(v) < eps)
    if bad.size:
        j = int(bad[0])
        raise DenominatorTooSmall(name, t[j], v[j], eps)
    return float(np.min(np.abs(v)))


def trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    """Lower-triangular weights ``W[j, i]`` of the trapezoid rule on ``[0, t_j]``."""
    M = grid.M
    W = np.tril(np.ones((M + 1, M + 1)))
    W[:, 0] = 0.5
    np.fill_diagonal(W, 0.5)
    W[0, 0] = 0.0
    return W * grid.dt


@dataclass
class VolterraSystem:
    """Sampled second-kind equation ``R = F + int_0^t K R``.

    Attributes
    ----------
    free_term : ndarray, shape (M + 1,)
    kernel : ndarray, shape (M + 1, M + 1)
        ``kernel[j, i] = K(t_i, t_j)``; zero above the diagonal.
    denominator : ndarray
        Assembled denominator samples (``w``, ``m`` or ``q s - L c``).
    free_term_dt, kernel_dt : ndarray or None
        ``F'(t_j)`` and ``K_t(t_i, t_j)`` when the assembly supports
        differentiating ``R``.
    """

    grid: TimeGrid
    free_term: np.ndarray
    kernel: np.ndarray
    denominator: np.ndarray
    denominator_name: str
    denominator_margin: float
    free_term_dt: np.ndarray | None = None
    kernel_dt: np.ndarray | None = None
    variant: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        M = self.grid.M
        if self.free_term.shape != (M + 1,) or self.kernel.shape != (M + 1, M + 1):
            raise ValueError("free term / kernel shapes do not match the grid")
        self.kernel = np.tril(self.kernel)
        if self.kernel_dt is not None:
            self.kernel_dt = np.tril(self.kernel_dt)

    @property
    def kernel_diagonal(self) -> np.ndarray:
        return np.diag(self.kernel).copy()

    def apply(self, R) -> np.ndarray:
        """Discrete right-hand side ``F + W o K R``."""
        return self.free_term + (trapezoid_weights(self.grid) * self.kernel) @ np.asarray(R, dtype=float)

    def residual(self, R) -> float:
        R = np.asarray(R, dtype=float)
        return float(np.max(np.abs(R - self.apply(R))))


@dataclass
class RecoveryResult:
    """Recovered samples on the time grid with solver diagnostics."""

    grid: TimeGrid
    values: np.ndarray
    residual: float
    solver: str
    target: str = "R"
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes


def _samples(value, grid: TimeGrid, name: str) -> np.ndarray:
    """Grid samples of a callable, scalar or array."""
    t = grid.nodes
    if value is None:
        raise ValueError(f"{name} is required")
    if callable(value):
        return as_time_function(value)(t)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(t.shape, float(arr))
    if arr.shape != t.shape:
        raise ValueError(f"{name} must have {t.size} samples, got {arr.shape}")
    return arr.copy()


@dataclass
class _ModalContext:
    coeffs: FixedDomainCoefficients
    grid: TimeGrid
    known: object
    h: np.ndarray
    e: np.ndarray
    a: np.ndarray
    b: np.ndarray
    A: np.ndarray
    B: np.ndarray

    @property
    def lam(self):
        return self.coeffs.basis.eigenvalues

    @property
    def s(self):
        return self.coeffs.basis.signed_roots

    def propagators(self):
        """Yield ``(n, E_n)`` with ``E_n[j, i] = exp(-lam_n (A_j - A_i) + (B_j - B_i))``."""
        dA = self.A[:, None] - self.A[None, :]
        dB = self.B[:, None] - self.B[None, :]
        lower = np.tri(self.A.size, dtype=bool)
        dA = np.where(lower, dA, 0.0)
        dB = np.where(lower, dB, 0.0)
        for n, lam in enumerate(self.lam):
            E = np.exp(-lam * dA + dB)
            E[~lower] = 0.0
            yield n, E


def _context(psi, source, extra, coeffs, grid) -> _ModalContext:
    N = coeffs.basis.n_modes
    h_series = _as_series(source, N)
    known = solve_modal(psi, ModalSeries.zero(N), None, coeffs, grid, extra=extra)
    t = grid.nodes
    return _ModalContext(
        coeffs=coeffs, grid=grid, known=known, h=h_series(t), e=known.extra,
        a=coeffs.a(t), b=coeffs.b_diag(t), A=known.A, B=known.B,
    )


def _tail_ratio(weighted: np.ndarray) -> float:
    """``max_t |last term| / |partial sum|`` of a modal series."""
    total = np.abs(weighted.sum(axis=0))
    last = np.abs(weighted[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(total > 0, last / total, 0.0)
    return float(np.max(r)) if r.size else 0.0


def assemble_derivative_form(psi, source, coeffs: FixedDomainCoefficients, grid: TimeGrid, nu_prime,
                             extra=None, eps_rel: float = EPS_DEN, variant: str = "") -> VolterraSystem:
    """Assemble the equation obtained by differentiating the boundary trace.

    Parameters
    ----------
    psi : array_like, shape (N,)
        Initial coefficients.
    source : ModalSeries or callable
        ``h_n(t)``, the coefficients multiplied by ``R``.
    nu_prime : callable or array
        Time derivative of the reduced trace ``nu = U_xi(1, t) / sqrt(2)``.
    extra : ModalSeries or None
        Known forcing ``e_n(t)``.
    """
    ctx = _context(psi, source, extra, coeffs, grid)
    t = grid.nodes
    s = ctx.s
    w = s @ ctx.h
    margin = guard_denominator("w", w, t, eps_rel)
    nup = _samples(nu_prime, grid, "nu_prime")
    alpha = s[:, None] * (ctx.a[None, :] * ctx.lam[:, None] - ctx.b[None, :])
    F = (nup - s @ ctx.e + (alpha * ctx.known.U).sum(axis=0)) / w
    K = np.zeros((grid.M + 1, grid.M + 1))
    for n, E in ctx.propagators():
        if not np.any(ctx.h[n]):
            continue
        K += alpha[n][:, None] * E * ctx.h[n][None, :]
    K /= w[:, None]
    diag = {
        "N": coeffs.basis.n_modes,
        "kind": coeffs.basis.kind.value,
        "tail_ratio": _tail_ratio(s[:, None] * ctx.h),
        "denominator_sup": float(np.max(np.abs(w))),
    }
    if diag["tail_ratio"] > TAIL_WARN:
        log.warning("kernel diagonal tail ratio %.2e exceeds %.0e", diag["tail_ratio"], TAIL_WARN)
    return VolterraSystem(grid, F, K, w, "w", margin, variant=variant, diagnostics=diag)


def assemble_trace_form(psi, source, coeffs: FixedDomainCoefficients, grid: TimeGrid, beta, dbeta,
                        name: str, extra=None, eps_rel: float = EPS_DEN, variant: str = "") -> VolterraSystem:
    """Assemble ``beta R = sqrt(2) sum s_n U_n`` as a second-kind equation.

    ``beta`` and ``dbeta`` are callables or grid samples of the trace
    coefficient and its derivative; the latter feeds ``F'`` and ``K_t``.
    """
    ctx = _context(psi, source, extra, coeffs, grid)
    t = grid.nodes
    s = ctx.s
    beta = _samples(beta, grid, "beta")
    dbeta = _samples(dbeta, grid, "dbeta")
    margin = guard_denominator(name, beta, t, eps_rel)
    gamma = SQRT2 / beta
    dgamma = -SQRT2 * dbeta / beta**2
    S = s @ ctx.known.U
    dS = s @ ctx.known.dU
    F = gamma * S
    dF = dgamma * S + gamma * dS
    M = grid.M
    K = np.zeros((M + 1, M + 1))
    Kt = np.zeros((M + 1, M + 1))
    for n, E in ctx.propagators():
        if not np.any(ctx.h[n]):
            continue
        base = s[n] * E * ctx.h[n][None, :]
        K += base
        rate = ctx.a * ctx.lam[n] - ctx.b
        Kt += (dgamma - gamma * rate)[:, None] * base
    K *= gamma[:, None]
    diag = {
        "N": coeffs.basis.n_modes,
        "kind": coeffs.basis.kind.value,
        "tail_ratio": _tail_ratio(s[:, None] * ctx.h),
        "denominator_sup": float(np.max(np.abs(beta))),
        "trace_normalization": "phi_n'(1) = sqrt(2) (-1)^n sqrt(lambda_n)",
    }
    if diag["tail_ratio"] > TAIL_WARN:
        log.warning("kernel diagonal tail ratio %.2e exceeds %.0e", diag["tail_ratio"], TAIL_WARN)
    return VolterraSystem(grid, F, K, beta, name, margin, free_term_dt=dF, kernel_dt=Kt,
                          variant=variant, diagnostics=diag)


def assemble_p1(psi, source, coeffs: FixedDomainCoefficients, grid: TimeGrid, nu_prime=None,
                extra=None, eps_rel: float = EPS_DEN) -> VolterraSystem:
    """R(t) for the Dirichlet problem with Stefan overdetermination.

    Without ``nu_prime`` the physical driver ``nu' = -L c' / (sqrt(2) k)``
    is used. ``extra`` carries the exact split of the ``u* s' xi / s``
    forcing, which does not multiply ``R``.
    """
    consts = coeffs.consts
    if nu_prime is None:
        nu_prime = lambda t: -consts.L_latent * coeffs.dc(t) / (SQRT2 * consts.k)
    return assemble_derivative_form(psi, source, coeffs, grid, nu_prime, extra, eps_rel, "P1")


def assemble_p2_r(psi, source, coeffs: FixedDomainCoefficients, grid: TimeGrid, q, dq,
                  extra=None, eps_rel: float = EPS_DEN, nu_prime=None) -> VolterraSystem:
    """R(t) for the Neumann problem with prescribed flux ``q``.

    The trace condition ``U_xi(1) = (q s - L c) / k`` differentiates to
    ``nu' = (q' s + q s' - L c') / (sqrt(2) k)``.
    """
    consts = coeffs.consts
    b = coeffs.boundary
    if nu_prime is None:
        qv = _samples(q, grid, "q")
        dqv = _samples(dq, grid, "dq")
        t = grid.nodes
        nu_prime = (dqv * b.s(t) + qv * b.ds(t) - consts.L_latent * b.dc(t)) / (SQRT2 * consts.k)
    return assemble_derivative_form(psi, source, coeffs, grid, nu_prime, extra, eps_rel, "P2")


def assemble_p3(p, source, coeffs: FixedDomainCoefficients, grid: TimeGrid, extra=None,
                eps_rel: float = EPS_DEN) -> VolterraSystem:
    """R(t) for the reaction problem: ``-(m / k) R = U_xi(1)``, ``m = L c + u* k``."""
    consts = coeffs.consts
    k, L, us = consts.k, consts.L_latent, consts.u_star
    beta = lambda t: -(L * coeffs.c(t) + us * k) / k
    dbeta = lambda t: -L * coeffs.dc(t) / k
    t = grid.nodes
    guard_denominator("m", L * coeffs.c(t) + us * k, t, eps_rel)
    return assemble_trace_form(p, source, coeffs, grid, beta, dbeta, "m", extra, eps_rel, "P3")


def assemble_p4_r(g, source, coeffs: FixedDomainCoefficients, grid: TimeGrid, q, dq,
                  extra=None, eps_rel: float = EPS_DEN) -> VolterraSystem:
    """R(t) for the Neumann reaction problem: ``(q s - L c) R / k = U_xi(1)``."""
    consts = coeffs.consts
    k, L = consts.k, consts.L_latent
    b = coeffs.boundary
    t = grid.nodes
    qv = _samples(q, grid, "q")
    dqv = _samples(dq, grid, "dq")
    beta = (qv * b.s(t) - L * b.c(t)) / k
    dbeta = (dqv * b.s(t) + qv * b.ds(t) - L * b.dc(t)) / k
    return assemble_trace_form(g, source, coeffs, grid, beta, dbeta, "qs-Lc", extra, eps_rel, "P4")


def system_from_functions(grid: TimeGrid, free_term: Callable, kernel: Callable,
                          free_term_dt: Callable | None = None, kernel_dt: Callable | None = None) -> VolterraSystem:
    """Sample analytic ``F(t)`` and ``K(tau, t)`` (test instances and studies)."""
    t = grid.nodes
    F = as_time_function(free_term)(t)
    tau, tt = np.meshgrid(t, t)
    K = np.asarray(kernel(tau, tt), dtype=float) + np.zeros_like(tau)
    dF = as_time_function(free_term_dt)(t) if free_term_dt is not None else None
    Kt = None
    if kernel_dt is not None:
        Kt = np.asarray(kernel_dt(tau, tt), dtype=float) + np.zeros_like(tau)
    one = np.ones_like(t)
    return VolterraSystem(grid, F, K, one, "1", 1.0, free_term_dt=dF, kernel_dt=Kt, variant="analytic")


def solve_volterra(sys: VolterraSystem, method="trapezoid", max_iter: int = 1000,
                   tol: float = 1e-13) -> RecoveryResult:
    """Solve the sampled equation.

    ``trapezoid`` marches ``R_j = F_j + sum_i W_ji K_ji R_i`` with the
    diagonal term moved to the left-hand side. ``picard`` iterates the same
    discrete operator from ``R = F`` until the sup-norm increment falls
    below ``tol * max(1, |R|)``.
    """
    method = SolverMethod.parse(method)
    grid = sys.grid
    dt = grid.dt
    F = sys.free_term
    K = sys.kernel
    M = grid.M
    if method is SolverMethod.PRODUCT_TRAPEZOID:
        R = np.empty(M + 1)
        R[0] = F[0]
        lhs = 1.0 - 0.5 * dt * np.diag(K)
        guard_denominator("1 - dt K(t,t) / 2", lhs, grid.nodes, 1e-12)
        for j in range(1, M + 1):
            acc = 0.5 * K[j, 0] * R[0] + K[j, 1:j] @ R[1:j]
            R[j] = (F[j] + dt * acc) / lhs[j]
        iterations = 1
    else:
        W = trapezoid_weights(grid) * K
        R = F.copy()
        iterations = 0
        while True:
            new = F + W @ R
            iterations += 1
            inc = float(np.max(np.abs(new - R)))
            R = new
            if inc <= tol * max(1.0, float(np.max(np.abs(R)))):
                break
            if iterations >= max_iter or not np.isfinite(inc):
                raise PicardDivergence(iterations, inc, tol)
    diag = dict(sys.diagnostics)
    diag.update(denominator=sys.denominator_name, denominator_margin=sys.denominator_margin)
    return RecoveryResult(grid, R, sys.residual(R), method.value, "R", iterations, diag)


def differentiate_r(sys: VolterraSystem, result: RecoveryResult) -> np.ndarray:
    """``R' = F' + int_0^t K_t(tau, t) R dtau + K(t, t) R`` on the grid."""
    if sys.free_term_dt is None or sys.kernel_dt is None:
        raise ValueError("system was assembled without time-derivative data")
    R = np.asarray(result.values, dtype=float)
    integral = (trapezoid_weights(sys.grid) * sys.kernel_dt) @ R
    return sys.free_term_dt + integral + np.diag(sys.kernel) * R


def recover_p(R, dR, t=None, eps_rel: float = EPS_DEN) -> np.ndarray:
    """``P = -R' / R`` after guarding ``R`` away from zero."""
    if isinstance(R, RecoveryResult):
        t = R.t
        R = R.values
    R = np.asarray(R, dtype=float)
    dR = np.asarray(dR, dtype=float)
    if t is None:
        t = np.arange(R.size, dtype=float)
    guard_denominator("R", R, t, eps_rel)
    return -dR / R


def gronwall_bound(sys: VolterraSystem) -> np.ndarray:
    """``sup|F| exp(t sup|K|)`` at every grid node."""
    return float(np.max(np.abs(sys.free_term))) * np.exp(
        sys.grid.nodes * float(np.max(np.abs(sys.kernel)))
    )
