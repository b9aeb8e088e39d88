"""Eigenpairs of the two Sturm-Liouville problems on (0, 1).

Two normalized families are used:

* Dirichlet-Dirichlet (``DD``): ``phi_n = sqrt(2) sin(n pi xi)``,
  ``lambda_n = n^2 pi^2``.
* Neumann-Dirichlet (``ND``): ``phi_n = sqrt(2) cos(sqrt(lambda_n) xi)``,
  ``lambda_n = (2n - 1)^2 pi^2 / 4``.

Both satisfy ``phi_n'(1) = sqrt(2) (-1)^n sqrt(lambda_n)``, which is the
weight that turns modal coefficients into the boundary trace ``U_xi(1, t)``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "BasisKind",
    "EigenBasis",
    "QuadratureWarning",
    "SmoothFunction",
    "TailSum",
    "CompatibilityReport",
    "eigenvalue",
    "sqrt_eigenvalue",
    "eigenfunction",
    "eigenfunction_derivative",
    "trace_weight",
    "project",
    "synthesize",
    "weighted_tail_sum",
    "check_compatibility",
    "ck_norm",
    "tail_bound_constant",
    "gauss_legendre_composite",
]

XI_TOL = 1e-12
EPS_COMPAT = 1e-9
PANEL_POINTS = 128


class QuadratureWarning(UserWarning):
    """Quadrature too coarse for the requested number of modes."""


class BasisKind(enum.Enum):
    """Boundary-condition family of the eigenproblem ``-phi'' = lambda phi``."""

    DIRICHLET_DIRICHLET = "DD"
    NEUMANN_DIRICHLET = "ND"

    @classmethod
    def parse(cls, value) -> "BasisKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        aliases = {
            "DD": cls.DIRICHLET_DIRICHLET,
            "DIRICHLET_DIRICHLET": cls.DIRICHLET_DIRICHLET,
            "DIRICHLETDIRICHLET": cls.DIRICHLET_DIRICHLET,
            "SINE": cls.DIRICHLET_DIRICHLET,
            "ND": cls.NEUMANN_DIRICHLET,
            "NEUMANN_DIRICHLET": cls.NEUMANN_DIRICHLET,
            "NEUMANNDIRICHLET": cls.NEUMANN_DIRICHLET,
            "COSINE": cls.NEUMANN_DIRICHLET,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown basis kind {value!r}") from None


def _check_modes(n) -> np.ndarray:
    arr = np.asarray(n)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise DomainError("mode index must be an integer")
        arr = arr.astype(np.int64)
    if np.any(arr < 1):
        raise DomainError("mode index must be >= 1")
    return arr


def _check_xi(xi) -> np.ndarray:
    arr = np.asarray(xi, dtype=float)
    if np.any(arr < -XI_TOL) or np.any(arr > 1.0 + XI_TOL) or np.any(~np.isfinite(arr)):
        raise DomainError("xi must lie in [0, 1]")
    return arr


def sqrt_eigenvalue(kind: BasisKind, n):
    """Return ``sqrt(lambda_n)``, the angular frequency of mode ``n``."""
    kind = BasisKind.parse(kind)
    m = _check_modes(n)
    if kind is BasisKind.DIRICHLET_DIRICHLET:
        out = m * np.pi
    else:
        out = (2 * m - 1) * np.pi / 2.0
    return float(out) if np.ndim(out) == 0 else out


def eigenvalue(kind: BasisKind, n):
    """Eigenvalue ``lambda_n`` of the given family.

    Parameters
    ----------
    kind : BasisKind
    n : int or array of int
        Mode index, starting at 1.

    Examples
    --------
    >>> round(eigenvalue(BasisKind.DIRICHLET_DIRICHLET, 1), 7)
    9.8696044
    """
    kind = BasisKind.parse(kind)
    m = _check_modes(n)
    if kind is BasisKind.DIRICHLET_DIRICHLET:
        out = (m * m) * np.pi**2
    else:
        out = (2 * m - 1) ** 2 * np.pi**2 / 4.0
    return float(out) if np.ndim(out) == 0 else out


def eigenfunction(kind: BasisKind, n, xi):
    """Normalized eigenfunction ``phi_n(xi)``; raises ``DomainError`` off [0, 1]."""
    kind = BasisKind.parse(kind)
    omega = np.asarray(sqrt_eigenvalue(kind, n))
    x = _check_xi(xi)
    if kind is BasisKind.DIRICHLET_DIRICHLET:
        out = math.sqrt(2.0) * np.sin(omega * x)
    else:
        out = math.sqrt(2.0) * np.cos(omega * x)
    return float(out) if np.ndim(out) == 0 else out


def eigenfunction_derivative(kind: BasisKind, n, xi, order: int = 1):
    """Derivative of ``phi_n`` of the given order (0 returns ``phi_n``)."""
    kind = BasisKind.parse(kind)
    if order < 0:
        raise ValueError("order must be non-negative")
    omega = np.asarray(sqrt_eigenvalue(kind, n), dtype=float)
    x = _check_xi(xi)
    # d^k/dx^k sin(wx) = w^k sin(wx + k pi/2), and likewise for cos
    phase = order * np.pi / 2.0
    if kind is BasisKind.DIRICHLET_DIRICHLET:
        out = math.sqrt(2.0) * omega**order * np.sin(omega * x + phase)
    else:
        out = math.sqrt(2.0) * omega**order * np.cos(omega * x + phase)
    return float(out) if np.ndim(out) == 0 else out


def trace_weight(kind: BasisKind, n):
    """Exact ``phi_n'(1) = sqrt(2) (-1)^n sqrt(lambda_n)`` for both families."""
    m = _check_modes(n)
    sign = np.where(m % 2 == 0, 1.0, -1.0)
    out = math.sqrt(2.0) * sign * np.asarray(sqrt_eigenvalue(kind, m))
    return float(out) if np.ndim(out) == 0 else out


def gauss_legendre_composite(n_nodes: int, a: float = 0.0, b: float = 1.0):
    """Composite Gauss-Legendre rule on ``[a, b]`` with about ``n_nodes`` nodes.

    Up to 128 nodes a single Gauss rule is used; beyond that the interval is
    split into equal panels of 128 nodes, so the returned rule has
    ``128 * ceil(n_nodes / 128)`` nodes. A single high-order rule resolves
    oscillatory products far better than many short panels.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    p = min(PANEL_POINTS, n_nodes)
    panels = -(-n_nodes // p)
    x, w = np.polynomial.legendre.leggauss(p)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class EigenBasis:
    """Truncated eigenbasis with its projection quadrature.

    Parameters
    ----------
    kind : BasisKind
    n_modes : int
        Truncation ``N``.
    quadrature_order : int, optional
        Number of Gauss-Legendre nodes ``Q``; defaults to ``max(64, 4N)``.
    """

    kind: BasisKind
    n_modes: int
    quadrature_order: int | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind.parse(self.kind))
        if int(self.n_modes) < 1:
            raise ValueError("n_modes must be positive")
        object.__setattr__(self, "n_modes", int(self.n_modes))
        q = self.quadrature_order
        if q is None:
            q = max(64, 4 * self.n_modes)
        q = int(q)
        if q < 1:
            raise ValueError("quadrature_order must be positive")
        object.__setattr__(self, "quadrature_order", q)
        if q < 2 * self.n_modes:
            warnings.warn(
                f"quadrature order {q} < 2N = {2 * self.n_modes}; projections "
                "of high modes will be inaccurate",
                QuadratureWarning,
                stacklevel=2,
            )
        nodes, weights = gauss_legendre_composite(q)
        modes = np.arange(1, self.n_modes + 1)
        self._cache.update(
            modes=modes,
            eigenvalues=np.asarray(eigenvalue(self.kind, modes), dtype=float),
            omegas=np.asarray(sqrt_eigenvalue(self.kind, modes), dtype=float),
            trace_weights=np.asarray(trace_weight(self.kind, modes), dtype=float),
            nodes=nodes,
            weights=weights,
            phi_nodes=self.phi(nodes),
        )
        for key in ("modes", "eigenvalues", "omegas", "trace_weights", "nodes", "weights", "phi_nodes"):
            self._cache[key].setflags(write=False)

    @property
    def modes(self) -> np.ndarray:
        return self._cache["modes"]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._cache["eigenvalues"]

    @property
    def sqrt_eigenvalues(self) -> np.ndarray:
        return self._cache["omegas"]

    @property
    def trace_weights(self) -> np.ndarray:
        """``phi_n'(1)`` for every retained mode."""
        return self._cache["trace_weights"]

    @property
    def signed_roots(self) -> np.ndarray:
        """``(-1)^n sqrt(lambda_n)``, the reduced trace weights."""
        return self._cache["trace_weights"] / math.sqrt(2.0)

    @property
    def nodes(self) -> np.ndarray:
        return self._cache["nodes"]

    @property
    def weights(self) -> np.ndarray:
        return self._cache["weights"]

    @property
    def phi_nodes(self) -> np.ndarray:
        """``phi_n`` sampled at the quadrature nodes, shape ``(N, Q)``."""
        return self._cache["phi_nodes"]

    def phi(self, xi) -> np.ndarray:
        """All retained eigenfunctions at ``xi``; shape ``(N,) + xi.shape``."""
        x = _check_xi(xi)
        modes = np.arange(1, self.n_modes + 1).reshape((-1,) + (1,) * x.ndim)
        return np.asarray(eigenfunction(self.kind, modes, x[None, ...]))

    def dphi(self, xi, order: int = 1) -> np.ndarray:
        x = _check_xi(xi)
        modes = np.arange(1, self.n_modes + 1).reshape((-1,) + (1,) * x.ndim)
        return np.asarray(eigenfunction_derivative(self.kind, modes, x[None, ...], order))

    def project_samples(self, values) -> np.ndarray:
        """Project samples taken at :attr:`nodes` (leading axis of length Q)."""
        v = np.asarray(values, dtype=float)
        if v.shape[0] != self.nodes.size:
            raise ValueError(f"expected {self.nodes.size} nodal samples, got {v.shape[0]}")
        return np.tensordot(self.phi_nodes * self.weights, v, axes=(1, 0))

    def project(self, f: Callable) -> np.ndarray:
        return project(f, self)

    def synthesize(self, coeffs, xi):
        return synthesize(coeffs, self, xi)


def project(f: Callable, basis: EigenBasis) -> np.ndarray:
    """Modal coefficients ``f_n = int_0^1 f phi_n`` by composite Gauss-Legendre.

    ``f`` is called once with the full node array and must be vectorized;
    extra trailing axes in its output are carried through.
    """
    vals = np.asarray(f(basis.nodes), dtype=float)
    if vals.ndim == 0:
        vals = np.full(basis.nodes.shape, float(vals))
    return basis.project_samples(vals)


def synthesize(coeffs, basis: EigenBasis, xi):
    """Evaluate ``sum_n coeffs[n] phi_n(xi)``.

    ``coeffs`` may carry trailing axes (for example a time axis), in which
    case the result has shape ``xi.shape + coeffs.shape[1:]``. Both families
    vanish at ``xi = 1`` and the result is set to exactly zero there.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape[0] != basis.n_modes:
        raise ValueError(f"expected {basis.n_modes} coefficients, got {c.shape[0]}")
    x = _check_xi(xi)
    phi = basis.phi(x.ravel())
    out = np.tensordot(phi, c, axes=(0, 0))
    out[x.ravel() >= 1.0] = 0.0
    out = out.reshape(x.shape + c.shape[1:])
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TailSum:
    """Weighted absolute series with its partial sums.

    ``partial_sums[k]`` is the sum over the first ``k + 1`` modes.
    """

    total: float
    partial_sums: np.ndarray

    def tail(self, n: int) -> float:
        """Contribution of modes beyond ``n``."""
        if n >= self.partial_sums.size:
            return 0.0
        head = self.partial_sums[n - 1] if n >= 1 else 0.0
        return float(self.total - head)

    def tail_fraction(self, n: int) -> float:
        if self.total == 0.0:
            return 0.0
        return self.tail(n) / self.total

    def __float__(self) -> float:
        return self.total


def weighted_tail_sum(coeffs, basis: EigenBasis, weight_power: float) -> TailSum:
    """``sum_n lambda_n**weight_power * |coeffs[n]|`` with partial sums."""
    c = np.abs(np.asarray(coeffs, dtype=float))
    lam = basis.eigenvalues[: c.size]
    terms = lam**weight_power * c
    partial = np.cumsum(terms)
    total = float(partial[-1]) if partial.size else 0.0
    return TailSum(total=total, partial_sums=partial)


def tail_bound_constant(kind: BasisKind) -> float:
    """``sqrt(2) * (sum_n 1/lambda_n)^(1/2)`` in closed form.

    The eigenvalue sums are 1/6 (DD) and 1/2 (ND).
    """
    kind = BasisKind.parse(kind)
    s = 1.0 / 6.0 if kind is BasisKind.DIRICHLET_DIRICHLET else 0.5
    return math.sqrt(2.0 * s)


# central-difference stencils: (offsets, coefficients, power of h)
_STENCILS = {
    1: ((-1, 1), (-0.5, 0.5), 1),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0), 2),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5), 3),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0), 4),
}
# larger steps for higher orders keep round-off below truncation error
FD_STEPS = {1: 1e-4, 2: 1e-4, 3: 2e-3, 4: 2e-3}


class SmoothFunction:
    """Scalar function of one variable with derivatives up to order 4.

    Parameters
    ----------
    func : callable
        Vectorized function.
    derivatives : sequence of callables, optional
        ``derivatives[j - 1]`` is the j-th derivative. Missing orders fall
        back to central differences.
    """

    def __init__(self, func: Callable, derivatives: Sequence[Callable] | None = None):
        self._func = func
        self._derivs = list(derivatives or [])

    def __call__(self, x):
        return np.asarray(self._func(np.asarray(x, dtype=float)), dtype=float)

    def has_analytic(self, order: int) -> bool:
        return order == 0 or len(self._derivs) >= order

    def derivative(self, order: int, x):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return self(x)
        if len(self._derivs) >= order:
            return np.asarray(self._derivs[order - 1](x), dtype=float) + np.zeros_like(x)
        if order not in _STENCILS:
            raise ValueError("only derivatives up to order 4 are supported")
        h = FD_STEPS[order]
        # two Richardson levels lift the central stencils to sixth order
        d1, d2, d4 = (self._central(order, x, m * h) for m in (1.0, 2.0, 4.0))
        r1 = (4.0 * d1 - d2) / 3.0
        r2 = (4.0 * d2 - d4) / 3.0
        return (16.0 * r1 - r2) / 15.0

    def _central(self, order, x, h):
        offsets, coefs, p = _STENCILS[order]
        acc = np.zeros_like(x)
        for o, c in zip(offsets, coefs):
            acc = acc + c * self(x + o * h)
        return acc / h**p


def ck_norm(f: SmoothFunction | Callable, k: int = 4, n_grid: int = 1024) -> float:
    """``max_{j <= k} sup_[0,1] |f^(j)|`` sampled on a uniform grid."""
    if not isinstance(f, SmoothFunction):
        f = SmoothFunction(f)
    x = np.linspace(0.0, 1.0, n_grid)
    return max(float(np.max(np.abs(f.derivative(j, x)))) for j in range(k + 1))


@dataclass(frozen=True)
class CompatibilityReport:
    """Endpoint derivative values and the orders that failed."""

    passed: bool
    kind: BasisKind
    order: int
    tol: float
    values: dict
    failures: tuple

    def __bool__(self) -> bool:
        return self.passed


def check_compatibility(f, kind: BasisKind, order: int, tol: float = EPS_COMPAT) -> CompatibilityReport:
    """Check ``f^(j)(0) = f^(j)(1) = 0`` for ``j = 0..order``.

    Returns
    -------
    CompatibilityReport
        ``failures`` lists ``(j, endpoint, value)`` for each violated condition.
    """
    if not isinstance(f, SmoothFunction):
        f = SmoothFunction(f)
    values = {}
    failures = []
    for j in range(order + 1):
        for end in (0.0, 1.0):
            v = float(f.derivative(j, np.array([end]))[0])
            values[(j, end)] = v
            if not abs(v) <= tol:
                failures.append((j, end, v))
    return CompatibilityReport(
        passed=not failures,
        kind=BasisKind.parse(kind),
        order=order,
        tol=tol,
        values=values,
        failures=tuple(failures),
    )
