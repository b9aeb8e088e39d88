"""Forward modal solution on the fixed domain and a finite-difference oracle.

Each mode obeys the diagonal Galerkin equation

    U_n' + (a(t) lambda_n - b(t)) U_n = R(t) h_n(t) + e_n(t),

solved in closed variation-of-constants form. The exponent integrals use a
4-point Gauss rule; the convolution integral is split into panels sized to
the stiffness of the highest mode and integrated with an 8-point rule.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .basis import BasisKind, EigenBasis
from .geometry import FixedDomainCoefficients

__all__ = [
    "TimeGrid",
    "ModalSeries",
    "ModalSolution",
    "FDResult",
    "StabilityWarning",
    "as_time_function",
    "cumulative_exponents",
    "exponent_between",
    "solve_modal",
    "evaluate_field",
    "flux_trace",
    "fd_oracle",
]

log = logging.getLogger(__name__)

INNER_POINTS = 4
OUTER_POINTS = 8
STIFF_LIMIT = 2.0
MAX_PANELS = 512
CHUNK_NODES = 200_000

_GX4, _GW4 = np.polynomial.legendre.leggauss(INNER_POINTS)
_GX8, _GW8 = np.polynomial.legendre.leggauss(OUTER_POINTS)


class StabilityWarning(UserWarning):
    """Finite-difference parameters outside the reliable range."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j T / M``, ``j = 0..M``."""

    T_horizon: float
    M: int

    def __post_init__(self):
        if not self.T_horizon > 0:
            raise ValueError("T_horizon must be positive")
        if int(self.M) < 1:
            raise ValueError("M must be >= 1")
        object.__setattr__(self, "T_horizon", float(self.T_horizon))
        object.__setattr__(self, "M", int(self.M))

    @property
    def dt(self) -> float:
        return self.T_horizon / self.M

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.M + 1) * self.dt
        t[-1] = self.T_horizon
        return t

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T_horizon, self.M * factor)


def as_time_function(value) -> Callable:
    """Wrap ``None``, a scalar or a callable as a vectorized time function."""
    if value is None:
        return lambda t: np.zeros_like(np.asarray(t, dtype=float))
    if callable(value):
        return lambda t: np.asarray(value(np.asarray(t, dtype=float)), dtype=float) + np.zeros_like(
            np.asarray(t, dtype=float)
        )
    c = float(value)
    return lambda t: np.full_like(np.asarray(t, dtype=float), c)


class ModalSeries:
    """Per-mode time functions ``h_n(t)`` packed into one callable.

    ``series(t)`` returns an array of shape ``(N, len(t))``.
    """

    def __init__(self, func: Callable, n_modes: int, label: str = ""):
        self._func = func
        self.n_modes = int(n_modes)
        self.label = label

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.asarray(self._func(t), dtype=float)
        if out.shape != (self.n_modes, t.size):
            out = np.broadcast_to(out, (self.n_modes, t.size)).copy()
        return out

    @classmethod
    def zero(cls, n_modes: int) -> "ModalSeries":
        return cls(lambda t: np.zeros((n_modes, t.size)), n_modes, "zero")

    @classmethod
    def constant(cls, values) -> "ModalSeries":
        v = np.asarray(values, dtype=float)
        return cls(lambda t: np.repeat(v[:, None], t.size, axis=1), v.size, "constant")

    @classmethod
    def separable(cls, values, amplitude: Callable) -> "ModalSeries":
        """``h_n(t) = values[n] * amplitude(t)``."""
        v = np.asarray(values, dtype=float)
        amp = as_time_function(amplitude)
        return cls(lambda t: v[:, None] * amp(t)[None, :], v.size, "separable")

    @classmethod
    def from_field(cls, field_fn: Callable, basis: EigenBasis) -> "ModalSeries":
        """Project a field ``h(xi, t)`` onto the basis at every requested time."""
        xi = basis.nodes

        def func(t):
            out = np.empty((basis.n_modes, t.size))
            step = max(1, CHUNK_NODES // xi.size)
            for i in range(0, t.size, step):
                tt = t[i : i + step]
                vals = np.asarray(field_fn(xi[:, None], tt[None, :]), dtype=float)
                vals = np.broadcast_to(vals, (xi.size, tt.size))
                out[:, i : i + step] = basis.project_samples(vals)
            return out

        return cls(func, basis.n_modes, "projected")


def _as_series(value, n_modes: int) -> ModalSeries:
    if value is None:
        return ModalSeries.zero(n_modes)
    if isinstance(value, ModalSeries):
        if value.n_modes != n_modes:
            raise ValueError(f"series has {value.n_modes} modes, basis has {n_modes}")
        return value
    if callable(value):
        return ModalSeries(value, n_modes)
    return ModalSeries.constant(value)


def _gauss_integral(func: Callable, lo, hi, x=_GX4, w=_GW4):
    """``int_lo^hi func`` elementwise with a fixed Gauss rule."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[..., None] + half[..., None] * x
    vals = np.asarray(func(pts), dtype=float)
    return half * np.tensordot(vals, w, axes=([-1], [0]))


def cumulative_exponents(coeffs: FixedDomainCoefficients, grid: TimeGrid):
    """``A(t_j) = int_0^t_j a`` and ``B(t_j) = int_0^t_j b_diag`` on the grid."""
    t = grid.nodes
    dA = _gauss_integral(coeffs.a, t[:-1], t[1:])
    dB = _gauss_integral(coeffs.b_diag, t[:-1], t[1:])
    A = np.concatenate([[0.0], np.cumsum(dA)])
    B = np.concatenate([[0.0], np.cumsum(dB)])
    return A, B


def exponent_between(coeffs: FixedDomainCoefficients, tau, t):
    """``(int_tau^t a, int_tau^t b_diag)`` elementwise by 4-point Gauss."""
    return _gauss_integral(coeffs.a, tau, t), _gauss_integral(coeffs.b_diag, tau, t)


def _panel_count(coeffs: FixedDomainCoefficients, grid: TimeGrid) -> int:
    t = grid.nodes
    lam_max = float(coeffs.basis.eigenvalues[-1])
    mu = lam_max * float(np.max(coeffs.a(t))) + float(np.max(np.abs(coeffs.b_diag(t))))
    p = int(math.ceil(mu * grid.dt / STIFF_LIMIT))
    if p > MAX_PANELS:
        warnings.warn(
            f"stiffness requires {p} panels per step; capped at {MAX_PANELS}",
            RuntimeWarning,
            stacklevel=3,
        )
        p = MAX_PANELS
    return max(p, 1)


@dataclass
class ModalSolution:
    """Modal coefficients ``U_n(t_j)`` with the data that produced them.

    Attributes
    ----------
    U, dU : ndarray, shape (N, M + 1)
        Coefficients and their time derivatives from the modal equation.
    R : ndarray, shape (M + 1,)
        Source amplitude samples.
    source, extra : ndarray, shape (N, M + 1)
        ``h_n(t_j)`` and ``e_n(t_j)``.
    A, B : ndarray, shape (M + 1,)
        Cumulative exponent integrals.
    """

    basis: EigenBasis
    grid: TimeGrid
    coeffs: FixedDomainCoefficients
    U: np.ndarray
    dU: np.ndarray
    R: np.ndarray
    source: np.ndarray
    extra: np.ndarray
    A: np.ndarray
    B: np.ndarray
    initial: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def field(self, xi, what: str = "U") -> np.ndarray:
        """Series value at every grid time; shape ``xi.shape + (M + 1,)``."""
        xi = np.asarray(xi, dtype=float)
        flat = xi.ravel()
        if what == "U":
            out = np.tensordot(self.basis.phi(flat), self.U, axes=(0, 0))
            out[flat >= 1.0] = 0.0
        elif what in ("U_xi", "Uxi"):
            out = np.tensordot(self.basis.dphi(flat), self.U, axes=(0, 0))
        elif what in ("U_xixi", "Uxixi"):
            out = np.tensordot(self.basis.dphi(flat, 2), self.U, axes=(0, 0))
        elif what in ("U_t", "Ut"):
            out = np.tensordot(self.basis.phi(flat), self.dU, axes=(0, 0))
            out[flat >= 1.0] = 0.0
        else:
            raise ValueError(f"unknown field quantity {what!r}")
        return out.reshape(xi.shape + (self.U.shape[1],))

    def trace(self) -> np.ndarray:
        """Reduced trace ``nu(t_j) = sum (-1)^n sqrt(lambda_n) U_n``."""
        return self.basis.signed_roots @ self.U

    def trace_xi(self) -> np.ndarray:
        """``U_xi(1, t_j) = sum phi_n'(1) U_n``."""
        return self.basis.trace_weights @ self.U

    def trace_derivative(self) -> np.ndarray:
        """``nu'(t_j)`` from the modal equation (no numerical differentiation)."""
        return self.basis.signed_roots @ self.dU

    def trace_xi_derivative(self) -> np.ndarray:
        return self.basis.trace_weights @ self.dU


def solve_modal(psi, source, R, coeffs: FixedDomainCoefficients, grid: TimeGrid,
                extra=None, panels: int | None = None) -> ModalSolution:
    """Integrate the modal equations on ``grid``.

    Parameters
    ----------
    psi : array_like, shape (N,)
        Initial coefficients.
    source : ModalSeries, callable or array
        ``h_n(t)``; a constant vector is held fixed in time.
    R : callable, scalar or None
        Source amplitude; ``None`` means zero.
    coeffs : FixedDomainCoefficients
    grid : TimeGrid
    extra : ModalSeries, callable or None
        Known forcing ``e_n(t)`` not multiplied by ``R``.
    panels : int, optional
        Outer panels per step; by default chosen so that
        ``mu_max * panel_width <= 2``.

    Returns
    -------
    ModalSolution
    """
    basis = coeffs.basis
    N = basis.n_modes
    lam = basis.eigenvalues
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (N,):
        raise ValueError(f"initial data must have {N} coefficients")
    h = _as_series(source, N)
    e = _as_series(extra, N) if extra is not None else None
    Rf = as_time_function(R)

    t = grid.nodes
    M = grid.M
    A, B = cumulative_exponents(coeffs, grid)
    dA_step = np.diff(A)
    dB_step = np.diff(B)
    P = panels or _panel_count(coeffs, grid)

    # outer nodes inside each step: (P * 8) points in (t_j, t_{j+1})
    unit_edges = np.linspace(0.0, 1.0, P + 1)
    half = 0.5 * np.diff(unit_edges)
    mid = 0.5 * (unit_edges[:-1] + unit_edges[1:])
    frac = (mid[:, None] + half[:, None] * _GX8).ravel()
    wfrac = (half[:, None] * _GW8).ravel()

    inc = np.zeros((N, M))
    steps_per_chunk = max(1, 20 * CHUNK_NODES // (frac.size * N))
    for j0 in range(0, M, steps_per_chunk):
        j1 = min(M, j0 + steps_per_chunk)
        ta = t[j0:j1]
        tb = t[j0 + 1 : j1 + 1]
        dt = (tb - ta)[:, None]
        tau = ta[:, None] + dt * frac[None, :]
        end = np.broadcast_to(tb[:, None], tau.shape)
        ia, ib = exponent_between(coeffs, tau, end)
        flat = tau.ravel()
        rhs = Rf(flat)[None, :] * h(flat)
        if e is not None:
            rhs = rhs + e(flat)
        expo = -lam[:, None] * ia.ravel()[None, :] + ib.ravel()[None, :]
        integrand = (rhs * np.exp(expo)).reshape(N, j1 - j0, frac.size)
        inc[:, j0:j1] = (integrand * (dt[None, :, :] * wfrac[None, None, :])).sum(axis=2)

    U = np.empty((N, M + 1))
    U[:, 0] = psi
    decay = np.exp(-lam[:, None] * dA_step[None, :] + dB_step[None, :])
    for j in range(M):
        U[:, j + 1] = U[:, j] * decay[:, j] + inc[:, j]

    Rn = Rf(t)
    hn = h(t)
    en = e(t) if e is not None else np.zeros((N, M + 1))
    a_n = coeffs.a(t)
    b_n = coeffs.b_diag(t)
    dU = -(a_n[None, :] * lam[:, None] - b_n[None, :]) * U + Rn[None, :] * hn + en
    log.debug("solve_modal: N=%d M=%d panels=%d", N, M, P)
    return ModalSolution(
        basis=basis, grid=grid, coeffs=coeffs, U=U, dU=dU, R=Rn, source=hn, extra=en,
        A=A, B=B, initial=psi.copy(), diagnostics={"panels_per_step": P},
    )


def evaluate_field(sol: ModalSolution, xi, j: int, what: str = "U"):
    """Truncated series for ``U``, ``U_xi`` or ``U_t`` at grid node ``t_j``."""
    xi = np.asarray(xi, dtype=float)
    basis = sol.basis
    flat = xi.ravel()
    if what == "U":
        out = basis.phi(flat).T @ sol.U[:, j]
        out[flat >= 1.0] = 0.0
    elif what in ("U_xi", "Uxi"):
        out = basis.dphi(flat).T @ sol.U[:, j]
    elif what in ("U_t", "Ut"):
        out = basis.phi(flat).T @ sol.dU[:, j]
        out[flat >= 1.0] = 0.0
    else:
        raise ValueError(f"unknown field quantity {what!r}")
    out = out.reshape(xi.shape)
    return float(out) if out.ndim == 0 else out


def flux_trace(sol: ModalSolution, j: int):
    """Return ``(nu(t_j), U_xi(1, t_j))`` for grid node ``j``."""
    nu = float(sol.basis.signed_roots @ sol.U[:, j])
    uxi = float(sol.basis.trace_weights @ sol.U[:, j])
    return nu, uxi


@dataclass
class FDResult:
    """Crank-Nicolson samples ``U[j, i]`` at ``(t_j, xi_i)``."""

    xi: np.ndarray
    t: np.ndarray
    U: np.ndarray
    max_peclet: float

    def at(self, xi: float, t: float) -> float:
        """Linear interpolation in space at the nearest time level."""
        j = int(np.argmin(np.abs(self.t - t)))
        return float(np.interp(xi, self.xi, self.U[j]))


def fd_oracle(kind, initial: Callable, source: Callable | None, coeffs: FixedDomainCoefficients,
              J: int, M: int, R=None, extra: Callable | None = None, advection: str = "upwind") -> FDResult:
    """Crank-Nicolson solution of ``U_t = a U_xixi + b U_xi + R h + e``.

    Parameters
    ----------
    kind : BasisKind
        Boundary rows: ``DD`` has ``U = 0`` at both ends, ``ND`` has
        ``U_xi(0) = 0`` (ghost node) and ``U(1) = 0``.
    initial, source, extra : callables of ``xi`` and ``(xi, t)``
    coeffs : FixedDomainCoefficients
    J, M : int
        Space intervals and time steps on ``[0, T]``.
    R : callable, scalar or None
    advection : {"upwind", "central"}
    """
    kind = BasisKind.parse(kind)
    T = coeffs.T_horizon
    xi = np.linspace(0.0, 1.0, J + 1)
    t = np.linspace(0.0, T, M + 1)
    dx = 1.0 / J
    dt = T / M
    Rf = as_time_function(R)

    def forcing(tn):
        out = np.zeros(J + 1)
        if source is not None:
            out += Rf(tn) * np.asarray(source(xi, tn), dtype=float)
        if extra is not None:
            out += np.asarray(extra(xi, tn), dtype=float)
        return out

    def operator(tn):
        # tridiagonal (lower, diag, upper) of the spatial operator
        a = float(coeffs.a(tn))
        b = np.asarray(coeffs.b_field(xi, tn), dtype=float)
        lo = np.full(J + 1, a / dx**2)
        di = np.full(J + 1, -2.0 * a / dx**2)
        up = np.full(J + 1, a / dx**2)
        if advection == "central":
            lo -= b / (2 * dx)
            up += b / (2 * dx)
        else:
            pos = b > 0
            up[pos] += b[pos] / dx
            di[pos] -= b[pos] / dx
            di[~pos] += b[~pos] / dx
            lo[~pos] -= b[~pos] / dx
        peclet = float(np.max(np.abs(b)) * dx / a) if a > 0 else math.inf
        return lo, di, up, peclet

    U = np.empty((M + 1, J + 1))
    U[0] = np.asarray(initial(xi), dtype=float) + np.zeros(J + 1)
    U[0, -1] = 0.0
    if kind is BasisKind.DIRICHLET_DIRICHLET:
        U[0, 0] = 0.0
    max_pe = 0.0
    f_old = forcing(t[0])
    op_old = operator(t[0])
    for n in range(M):
        f_new = forcing(t[n + 1])
        op_new = operator(t[n + 1])
        max_pe = max(max_pe, op_old[3], op_new[3])

        def apply(op, v):
            lo, di, up, _ = op
            out = di * v
            out[1:] += lo[1:] * v[:-1]
            out[:-1] += up[:-1] * v[1:]
            if kind is BasisKind.NEUMANN_DIRICHLET:
                # ghost node U_{-1} = U_1 folds the lower coefficient into the upper
                out[0] += lo[0] * v[1]
            return out

        rhs = U[n] + 0.5 * dt * apply(op_old, U[n]) + 0.5 * dt * (f_old + f_new)
        lo, di, up, _ = op_new
        ab = np.zeros((3, J + 1))
        ab[0, 1:] = -0.5 * dt * up[:-1]
        ab[1, :] = 1.0 - 0.5 * dt * di
        ab[2, :-1] = -0.5 * dt * lo[1:]
        if kind is BasisKind.NEUMANN_DIRICHLET:
            ab[0, 1] = -0.5 * dt * (up[0] + lo[0])
        else:
            ab[0, 1] = 0.0
            ab[1, 0] = 1.0
            rhs[0] = 0.0
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        rhs[-1] = 0.0
        U[n + 1] = solve_banded((1, 1), ab, rhs)
        f_old, op_old = f_new, op_new
    if max_pe > 2.0:
        warnings.warn(f"cell Peclet number {max_pe:.3g} exceeds 2", StabilityWarning, stacklevel=2)
    return FDResult(xi=xi, t=t, U=U, max_peclet=max_pe)
