"""Moving boundary, fixed-domain coefficients and the variant transforms.

The front-fixing change of variable ``xi = x / s(t)`` maps ``(0, s(t))`` to
``(0, 1)``. A field ``U(xi, t)`` then solves

    U_t - b(xi, t) U_xi - a(t) U_xixi = R(t) h(xi, t) + e(xi, t)

with ``a = a^2 / s^2`` and ``b = xi s' / s``. ``h`` is the part of the
source multiplied by the amplitude ``R`` and ``e`` is a known forcing that
some variants produce when subtracting the boundary profile.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline

from .basis import BasisKind, EigenBasis
from .errors import BoundaryPositivityError, DenominatorTooSmall, DomainError, MissingDataError

__all__ = [
    "PhysicalConstants",
    "MovingBoundary",
    "BoundaryState",
    "boundary_eval",
    "FixedDomainCoefficients",
    "make_coefficients",
    "Variant",
    "PhysicalData",
    "FixedDomainData",
    "TransformChain",
    "to_fixed_domain",
    "from_fixed_domain",
    "trace_target",
]

POSITIVITY_GRID = 4096
T_TOL = 1e-12


@dataclass(frozen=True)
class PhysicalConstants:
    """Material constants and time horizon of one problem instance."""

    a2: float
    k: float
    L_latent: float
    u_star: float = 0.0
    T_horizon: float = 1.0

    def __post_init__(self):
        for name in ("a2", "k", "L_latent", "T_horizon"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)
        u = float(self.u_star)
        if not math.isfinite(u):
            raise ValueError("u_star must be finite")
        object.__setattr__(self, "u_star", u)


class BoundaryState(NamedTuple):
    s: np.ndarray
    ds: np.ndarray
    d2s: np.ndarray
    c: np.ndarray
    dc: np.ndarray


class MovingBoundary:
    """Prescribed interface ``s(t)`` on ``[0, T]`` with two derivatives.

    Use the constructors :meth:`affine`, :meth:`polynomial` or
    :meth:`sampled`; a callable triple is accepted by :meth:`from_callables`.
    """

    def __init__(self, representation: str, T_horizon: float, funcs, params: dict):
        self.representation = representation
        self.T_horizon = float(T_horizon)
        if not self.T_horizon > 0:
            raise ValueError("T_horizon must be positive")
        self._funcs = funcs
        self.params = params

    @classmethod
    def affine(cls, s0: float, rate: float, T_horizon: float = 1.0) -> "MovingBoundary":
        b = cls.polynomial([s0, rate], T_horizon)
        b.representation = "affine"
        b.params = {"s0": float(s0), "rate": float(rate)}
        return b

    @classmethod
    def polynomial(cls, coeffs, T_horizon: float = 1.0) -> "MovingBoundary":
        """``s(t) = sum_i coeffs[i] t**i``."""
        p = Polynomial(np.asarray(coeffs, dtype=float))
        funcs = (p, p.deriv(1), p.deriv(2))
        return cls("polynomial", T_horizon, funcs, {"coeffs": [float(c) for c in p.coef]})

    @classmethod
    def sampled(cls, t, s, T_horizon: float | None = None, end_slopes=None) -> "MovingBoundary":
        """Clamped cubic spline through samples of ``s``.

        The clamping slopes default to second-order one-sided differences
        of the data, so affine samples are reproduced exactly.
        """
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        if t.ndim != 1 or t.shape != s.shape or t.size < 3:
            raise ValueError("need at least three (t, s) samples of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if end_slopes is None:
            d0 = _one_sided_slope(t[:3], s[:3])
            d1 = -_one_sided_slope(-t[::-1][:3], s[::-1][:3])
        else:
            d0, d1 = (float(v) for v in end_slopes)
        spline = CubicSpline(t, s, bc_type=((1, d0), (1, d1)))
        funcs = (spline, spline.derivative(1), spline.derivative(2))
        T = float(t[-1]) if T_horizon is None else float(T_horizon)
        return cls("sampled", T, funcs, {"t": t.tolist(), "s": s.tolist(), "end_slopes": [d0, d1]})

    @classmethod
    def from_callables(cls, s: Callable, ds: Callable, d2s: Callable, T_horizon: float = 1.0):
        return cls("callable", T_horizon, (s, ds, d2s), {})

    @property
    def s0(self) -> float:
        return float(self.s(0.0))

    def _eval(self, i, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self._funcs[i](t), dtype=float)
        return out + np.zeros_like(t)

    def s(self, t):
        return self._eval(0, t)

    def ds(self, t):
        return self._eval(1, t)

    def d2s(self, t):
        return self._eval(2, t)

    def derivative(self, t, order: int):
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        return self._eval(order, t)

    def c(self, t):
        """``c = s s'``."""
        return self.s(t) * self.ds(t)

    def dc(self, t):
        """``c' = s'' s + s'^2`` by the product rule."""
        return self.d2s(t) * self.s(t) + self.ds(t) ** 2

    def d2c(self, t):
        # s''' is not carried; differentiate c' numerically
        h = 1e-5 * max(self.T_horizon, 1.0)
        return (self.dc(np.asarray(t) + h) - self.dc(np.asarray(t) - h)) / (2 * h)

    def bounds(self, n_grid: int = POSITIVITY_GRID):
        """Return ``(m_s, M_s)`` on a dense grid; raise if ``s`` is not positive."""
        t = np.linspace(0.0, self.T_horizon, n_grid)
        s = self.s(t)
        j = int(np.argmin(s))
        if not s[j] > 0.0 or not np.all(np.isfinite(s)):
            bad = np.flatnonzero(~(s > 0.0))
            j = int(bad[0]) if bad.size else j
            raise BoundaryPositivityError(t[j], s[j])
        return float(s.min()), float(s.max())

    def __repr__(self):
        return f"MovingBoundary({self.representation}, T={self.T_horizon}, {self.params})"


def _one_sided_slope(t3, s3) -> float:
    # derivative at t3[0] of the quadratic through three points
    t0, t1, t2 = t3
    f0, f1, f2 = s3
    return (
        f0 * ((t0 - t1) + (t0 - t2)) / ((t0 - t1) * (t0 - t2))
        + f1 * (t0 - t2) / ((t1 - t0) * (t1 - t2))
        + f2 * (t0 - t1) / ((t2 - t0) * (t2 - t1))
    )


def boundary_eval(b: MovingBoundary, t) -> BoundaryState:
    """Evaluate ``(s, s', s'', c, c')`` at times in ``[0, T]``.

    Examples
    --------
    >>> st = boundary_eval(MovingBoundary.affine(1.0, 0.1, 2.0), 2.0)
    >>> [round(float(v), 12) for v in st]
    [1.2, 0.1, 0.0, 0.12, 0.01]
    """
    tt = np.asarray(t, dtype=float)
    tol = T_TOL * max(1.0, b.T_horizon)
    if np.any(tt < -tol) or np.any(tt > b.T_horizon + tol) or np.any(~np.isfinite(tt)):
        raise DomainError(f"t must lie in [0, {b.T_horizon}]")
    s, ds, d2s = b.s(tt), b.ds(tt), b.d2s(tt)
    return BoundaryState(s, ds, d2s, s * ds, d2s * s + ds * ds)


@dataclass(frozen=True)
class FixedDomainCoefficients:
    """Coefficients of the fixed-domain equation for one boundary and basis.

    ``diag_factors[n-1] = int_0^1 xi phi_n' phi_n dxi`` is computed by
    quadrature; it equals ``-1/2`` for every mode of both families, so the
    diagonal transport coefficient is ``b_diag(t) = -s'/(2s)``.
    """

    boundary: MovingBoundary
    consts: PhysicalConstants
    basis: EigenBasis
    diag_factors: np.ndarray
    m_s: float
    M_s: float

    @property
    def diag_factor(self) -> float:
        return float(self.diag_factors[0])

    @property
    def diag_spread(self) -> float:
        """Largest deviation of a mode's diagonal factor from mode 1."""
        return float(np.max(np.abs(self.diag_factors - self.diag_factors[0])))

    @property
    def T_horizon(self) -> float:
        return self.consts.T_horizon

    def a(self, t):
        return self.consts.a2 / self.boundary.s(t) ** 2

    def b_field(self, xi, t):
        xi = np.asarray(xi, dtype=float)
        t = np.asarray(t, dtype=float)
        return xi * (self.boundary.ds(t) / self.boundary.s(t))

    def b_diag(self, t):
        return self.diag_factor * self.boundary.ds(t) / self.boundary.s(t)

    def b_diag_modes(self, t):
        """Per-mode diagonal coefficients, shape ``(N,) + t.shape``."""
        t = np.asarray(t, dtype=float)
        ratio = self.boundary.ds(t) / self.boundary.s(t)
        return self.diag_factors.reshape((-1,) + (1,) * t.ndim) * ratio[None, ...]

    def c(self, t):
        return self.boundary.c(t)

    def dc(self, t):
        return self.boundary.dc(t)


def make_coefficients(b: MovingBoundary, consts: PhysicalConstants, basis: EigenBasis) -> FixedDomainCoefficients:
    """Build the coefficient functions after validating ``s > 0`` on ``[0, T]``."""
    if abs(b.T_horizon - consts.T_horizon) > T_TOL * max(1.0, consts.T_horizon):
        raise ValueError("boundary horizon and constants horizon differ")
    m_s, M_s = b.bounds()
    xi, w = basis.nodes, basis.weights
    factors = (basis.dphi(xi) * basis.phi_nodes * (xi * w)).sum(axis=1)
    factors.setflags(write=False)
    return FixedDomainCoefficients(b, consts, basis, factors, m_s, M_s)


class Variant(enum.Enum):
    """The four inverse problems."""

    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown variant {value!r}") from None

    @property
    def basis_kind(self) -> BasisKind:
        if self in (Variant.P1, Variant.P3):
            return BasisKind.DIRICHLET_DIRICHLET
        return BasisKind.NEUMANN_DIRICHLET

    @property
    def scaled(self) -> bool:
        """True when the fixed-domain unknown carries the factor ``R``."""
        return self in (Variant.P3, Variant.P4)


@dataclass
class PhysicalData:
    """Physical-domain input functions; unused entries stay ``None``.

    ``phi(x)`` initial temperature, ``f(x, t)`` source shape, and time
    functions ``R``, ``dR``, ``q``, ``dq``, ``P``.
    """

    phi: Callable | None = None
    f: Callable | None = None
    R: Callable | None = None
    dR: Callable | None = None
    q: Callable | None = None
    dq: Callable | None = None
    P: Callable | None = None


@dataclass
class FixedDomainData:
    """Data on ``(0, 1)``.

    Attributes
    ----------
    initial : callable
        ``U(xi, 0)``.
    source : callable
        ``h(xi, t)``, the part multiplied by ``R``.
    extra : callable or None
        Known forcing ``e(xi, t)`` not multiplied by ``R``.
    """

    initial: Callable
    source: Callable
    extra: Callable | None = None
    variant: Variant | None = None


def _need(variant: Variant, data: PhysicalData, *names):
    missing = [n for n in names if getattr(data, n) is None]
    if missing:
        raise MissingDataError(f"variant {variant.value} needs {', '.join(missing)}")


def _reaction(variant: Variant, data: PhysicalData) -> Callable:
    """``P(t)`` from ``P`` or from ``-R'/R``."""
    if data.P is not None:
        return data.P
    if data.R is not None and data.dR is not None:
        return lambda t: -np.asarray(data.dR(t)) / np.asarray(data.R(t))
    raise MissingDataError(f"variant {variant.value} needs P (or R with dR)")


def trace_target(variant: Variant, boundary: MovingBoundary, consts: PhysicalConstants, t, R=None, q=None):
    """Boundary trace ``U_xi(1, t)`` implied by the Stefan condition.

    ``R`` and ``q`` are sample arrays (or scalars) at ``t`` where needed.
    """
    variant = Variant.parse(variant)
    t = np.asarray(t, dtype=float)
    s, c = boundary.s(t), boundary.c(t)
    k, L, us = consts.k, consts.L_latent, consts.u_star
    if variant is Variant.P1:
        return -(L / k) * c - us
    if variant is Variant.P2:
        if q is None:
            raise MissingDataError("P2 trace needs q")
        return (np.asarray(q) * s - L * c) / k
    if R is None:
        raise MissingDataError(f"{variant.value} trace needs R")
    if variant is Variant.P3:
        return -((L * c + us * k) / k) * np.asarray(R)
    if q is None:
        raise MissingDataError("P4 trace needs q")
    return (np.asarray(q) * s - L * c) * np.asarray(R) / k


class TransformChain:
    """Substitutions linking the physical temperature ``u`` and ``U``.

    P1: ``U = u - u* x/s``; P2: ``U = u - u* + q (x - s)/k``;
    P3: ``U = R u - u* R x/s``; P4: ``U = R u - R u* + R q (x - s)/k``,
    each evaluated at ``x = xi s(t)``.
    """

    def __init__(self, variant, boundary: MovingBoundary, consts: PhysicalConstants, eps_den: float = 1e-10):
        self.variant = Variant.parse(variant)
        self.boundary = boundary
        self.consts = consts
        self.eps_den = eps_den

    def _offset(self, x, t, R=None, q=None):
        """Profile ``w`` such that ``u = U / R + w`` (``R = 1`` for P1/P2)."""
        us, k = self.consts.u_star, self.consts.k
        s = self.boundary.s(t)
        if self.variant in (Variant.P1, Variant.P3):
            return us * x / s
        return us - q * (x - s) / k

    def _time_args(self, t, R, q):
        need_r = self.variant.scaled
        need_q = self.variant in (Variant.P2, Variant.P4)
        Rv = None
        if need_r:
            if R is None:
                raise MissingDataError(f"variant {self.variant.value} needs R")
            Rv = np.asarray(R(t), dtype=float) + np.zeros_like(t)
            bad = np.abs(Rv) < self.eps_den
            if np.any(bad):
                j = np.flatnonzero(bad.ravel())[0]
                raise DenominatorTooSmall("R", np.ravel(t)[j], np.ravel(Rv)[j], self.eps_den)
        qv = None
        if need_q:
            if q is None:
                raise MissingDataError(f"variant {self.variant.value} needs q")
            qv = np.asarray(q(t), dtype=float) + np.zeros_like(t)
        return Rv, qv

    def field_to_fixed(self, u: Callable, R: Callable | None = None, q: Callable | None = None) -> Callable:
        """Map ``u(x, t)`` to ``U(xi, t)``."""

        def U(xi, t):
            xi, t = np.broadcast_arrays(np.asarray(xi, float), np.asarray(t, float))
            x = xi * self.boundary.s(t)
            Rv, qv = self._time_args(t, R, q)
            rel = np.asarray(u(x, t), dtype=float) - self._offset(x, t, Rv, qv)
            return rel * Rv if Rv is not None else rel

        return U

    def field_from_fixed(self, U: Callable, R: Callable | None = None, q: Callable | None = None) -> Callable:
        """Map ``U(xi, t)`` back to ``u(x, t)`` on ``0 <= x <= s(t)``."""

        def u(x, t):
            x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
            xi = x / self.boundary.s(t)
            Rv, qv = self._time_args(t, R, q)
            val = np.asarray(U(np.clip(xi, 0.0, 1.0), t), dtype=float)
            if Rv is not None:
                val = val / Rv
            return val + self._offset(x, t, Rv, qv)

        return u

    def data_to_fixed(self, data: PhysicalData) -> FixedDomainData:
        """Fixed-domain initial data, R-multiplied source and known forcing."""
        v = self.variant
        b = self.boundary
        us, k = self.consts.u_star, self.consts.k
        s0 = b.s0
        _need(v, data, "phi", "f")
        phi, f = data.phi, data.f

        def f_tilde(xi, t):
            xi, t = np.broadcast_arrays(np.asarray(xi, float), np.asarray(t, float))
            return np.asarray(f(xi * b.s(t), t), dtype=float) + np.zeros_like(xi)

        if v is Variant.P1:

            def initial(xi):
                xi = np.asarray(xi, float)
                return np.asarray(phi(s0 * xi), float) - us * xi

            def extra(xi, t):
                xi, t = np.broadcast_arrays(np.asarray(xi, float), np.asarray(t, float))
                return us * xi * b.ds(t) / b.s(t)

            return FixedDomainData(initial, f_tilde, extra if us != 0.0 else None, v)

        if v is Variant.P2:
            _need(v, data, "q", "dq")
            q, dq = data.q, data.dq
            q0 = float(q(0.0))

            def initial(xi):
                xi = np.asarray(xi, float)
                return np.asarray(phi(s0 * xi), float) - us + q0 * (s0 * xi - s0) / k

            def extra(xi, t):
                xi, t = np.broadcast_arrays(np.asarray(xi, float), np.asarray(t, float))
                s = b.s(t)
                return dq(t) * s * (xi - 1.0) / k - q(t) * b.ds(t) / k

            return FixedDomainData(initial, f_tilde, extra, v)

        if v is Variant.P3:
            P = _reaction(v, data) if us != 0.0 else (lambda t: 0.0)

            def initial(xi):
                xi = np.asarray(xi, float)
                return np.asarray(phi(s0 * xi), float) - us * xi

            def source(xi, t):
                xi, t = np.broadcast_arrays(np.asarray(xi, float), np.asarray(t, float))
                return f_tilde(xi, t) + us * (P(t) + b.ds(t) / b.s(t)) * xi

            return FixedDomainData(initial, source, None, v)

        _need(v, data, "q", "dq")
        q, dq = data.q, data.dq
        P = _reaction(v, data)
        q0 = float(q(0.0))

        def initial(xi):
            xi = np.asarray(xi, float)
            return np.asarray(phi(s0 * xi), float) - us + q0 * (s0 * xi - s0) / k

        def source(xi, t):
            xi, t = np.broadcast_arrays(np.asarray(xi, float), np.asarray(t, float))
            s = b.s(t)
            Pt = P(t)
            return (
                f_tilde(xi, t)
                + Pt * us
                + (dq(t) - Pt * q(t)) * s * (xi - 1.0) / k
                - q(t) * b.ds(t) / k
            )

        return FixedDomainData(initial, source, None, v)


def to_fixed_domain(variant, boundary: MovingBoundary, consts: PhysicalConstants, data: PhysicalData) -> FixedDomainData:
    """Functional form of :meth:`TransformChain.data_to_fixed`."""
    return TransformChain(variant, boundary, consts).data_to_fixed(data)


def from_fixed_domain(variant, boundary: MovingBoundary, consts: PhysicalConstants, U: Callable,
                      R: Callable | None = None, q: Callable | None = None) -> Callable:
    """Functional form of :meth:`TransformChain.field_from_fixed`."""
    return TransformChain(variant, boundary, consts).field_from_fixed(U, R=R, q=q)
