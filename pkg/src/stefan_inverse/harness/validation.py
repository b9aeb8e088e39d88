"""Assumption checks for a configured problem.

Every clause is reported with the quantity that decided it; nothing here
raises for a failed clause. Clauses that cannot be evaluated because the
required data are absent are reported with ``passed = None``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..basis import EPS_COMPAT, EigenBasis, SmoothFunction, check_compatibility
from ..errors import BoundaryPositivityError, MissingDataError
from ..forward import ModalSeries
from ..geometry import Variant
from .config import ProblemConfig, build_problem, fixed_domain_data
from .expressions import Expression

__all__ = ["ClauseResult", "ValidationReport", "validate_assumptions"]

SIGN_TOL = 1e-12
N_TIMES = 11
N_DENSE = 4096


@dataclass
class ClauseResult:
    tag: str
    passed: bool | None
    measured: dict
    detail: str = ""

    def to_dict(self) -> dict:
        return {"tag": self.tag, "passed": self.passed, "measured": self.measured, "detail": self.detail}


@dataclass
class ValidationReport:
    variant: str
    clauses: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """True when no evaluated clause failed."""
        return all(c.passed is not False for c in self.clauses)

    def clause(self, tag: str) -> ClauseResult:
        for c in self.clauses:
            if c.tag == tag:
                return c
        raise KeyError(tag)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "passed": self.passed, "clauses": [c.to_dict() for c in self.clauses]}


def _smooth_initial(expr):
    if isinstance(expr, Expression):
        return SmoothFunction(expr, [expr.diff("xi", j) for j in range(1, 5)])
    return SmoothFunction(expr)


def _smooth_slice(src, t: float):
    if isinstance(src, Expression):
        ders = [src.diff("xi", j) for j in range(1, 5)]
        return SmoothFunction(lambda xi: src(xi, t), [lambda xi, d=d: d(xi, t) for d in ders])
    return SmoothFunction(lambda xi: src(xi, t))


def _series_function(basis: EigenBasis, coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    ders = [lambda xi, j=j: np.tensordot(coeffs, basis.dphi(xi, j), axes=(0, 0)) for j in range(1, 5)]
    return SmoothFunction(lambda xi: basis.synthesize(coeffs, xi), ders)


def _compat_clause(tag, f, kind, order) -> ClauseResult:
    rep = check_compatibility(f, kind, order, EPS_COMPAT)
    worst = max(abs(v) for v in rep.values.values())
    measured = {f"d{j}@{int(end)}": v for (j, end), v in rep.values.items()}
    measured["max_abs"] = worst
    if rep.passed:
        return ClauseResult(tag, True, measured, f"derivatives 0..{order} vanish at both ends")
    j, end, v = rep.failures[0]
    return ClauseResult(tag, False, measured, f"derivative {j} at xi={int(end)} is {v:.6g}, not 0")


def _sign_clause(tag, coeff_table, label) -> ClauseResult:
    """``c_1 > 0`` and ``c_n >= 0``; ``coeff_table`` has shape ``(N, n_times)``."""
    c = np.atleast_2d(np.asarray(coeff_table, dtype=float).T).T
    scale = max(1.0, float(np.max(np.abs(c))))
    first = float(np.min(c[0]))
    rest = float(np.min(c[1:])) if c.shape[0] > 1 else 0.0
    ok_first = first > SIGN_TOL * scale
    ok_rest = rest >= -SIGN_TOL * scale
    measured = {f"min {label}_1": first, f"min {label}_n (n>=2)": rest}
    if ok_first and ok_rest:
        return ClauseResult(tag, True, measured, f"{label}_1 > 0 and {label}_n >= 0")
    if not ok_first:
        return ClauseResult(tag, False, measured, f"{label}_1 reaches {first:.6g}")
    n_bad = int(np.argmin(np.min(c[1:], axis=1))) + 2
    return ClauseResult(tag, False, measured, f"{label}_{n_bad} reaches {rest:.6g} < 0")


def _data_functions(cfg: ProblemConfig, basis: EigenBasis):
    """``(psi, h, psi_coeffs, h_series)``; functions may be ``None``."""
    if cfg.profile is not None:
        pb = build_problem(cfg)
        return _series_function(basis, pb.psi), None, pb.psi, pb.source
    R = cfg.truth.get("R") or cfg.amplitude()
    q = cfg.truth.get("q") or cfg.data.get("q")
    initial, source, _ = fixed_domain_data(cfg, R=R, q=q)
    return initial, source, basis.project(initial), ModalSeries.from_field(source, basis)


def validate_assumptions(cfg: ProblemConfig) -> ValidationReport:
    """Pass/fail per assumption clause with the measured quantities.

    Problems with Dirichlet conditions at both ends are checked against
    (A1)-(A3); the Neumann problems against (B1)-(B5).
    """
    v = cfg.variant
    dd = v in (Variant.P1, Variant.P3)
    kind = v.basis_kind
    basis = EigenBasis(kind, cfg.modes, cfg.quadrature)
    rep = ValidationReport(v.value)
    T = cfg.constants.T_horizon
    times = np.linspace(0.0, T, N_TIMES)
    tag1, tag2, tag3 = ("A1", "A2", "A3") if dd else ("B1", "B2", "B3")

    try:
        psi_fn, h_fn, psi_c, h_series = _data_functions(cfg, basis)
        have_data = True
    except MissingDataError as exc:
        have_data = False
        reason = str(exc)

    if have_data:
        psi_sm = psi_fn if isinstance(psi_fn, SmoothFunction) else _smooth_initial(psi_fn)
        rep.clauses.append(_compat_clause(f"({tag1})_1", psi_sm, kind, 3))
        rep.clauses.append(_sign_clause(f"({tag1})_2", psi_c[:, None], "psi"))
    else:
        rep.clauses.append(ClauseResult(f"({tag1})_1", None, {}, reason))
        rep.clauses.append(ClauseResult(f"({tag1})_2", None, {}, reason))

    b = cfg.boundary
    tt = np.linspace(0.0, T, N_DENSE)
    s, ds = b.s(tt), b.ds(tt)
    meas = {"m_s": float(np.min(s)), "M_s": float(np.max(s)), "sup |ds|": float(np.max(np.abs(ds))),
            "min ds": float(np.min(ds)), "max ds": float(np.max(ds))}
    try:
        b.bounds()
        pos = True
    except BoundaryPositivityError as exc:
        pos = False
        meas["violation_t"] = exc.t_star
    if dd:
        ok = pos and np.all(np.isfinite(ds))
        detail = f"0 < m_s = {meas['m_s']:.6g}, M_s = {meas['M_s']:.6g}, s' bounded"
    else:
        ok = pos and meas["min ds"] > 0.0
        detail = f"m_s = {meas['m_s']:.6g}, M_s = {meas['M_s']:.6g}, min s' = {meas['min ds']:.6g} (needs > 0)"
    rep.clauses.append(ClauseResult(f"({tag2})", bool(ok), meas, detail))

    if have_data:
        order = 2 if dd else 3
        worst = None
        for tk in times:
            f = _smooth_slice(h_fn, tk) if h_fn is not None else _series_function(basis, h_series(np.array([tk]))[:, 0])
            c = _compat_clause(f"({tag3})_1", f, kind, order)
            c.measured["t"] = float(tk)
            if worst is None or (c.passed is False and worst.passed) or (
                c.passed == worst.passed and c.measured["max_abs"] > worst.measured["max_abs"]
            ):
                worst = c
        rep.clauses.append(worst)
        rep.clauses.append(_sign_clause(f"({tag3})_2", h_series(tt[:: max(1, N_DENSE // 256)]), "h"))
    else:
        rep.clauses.append(ClauseResult(f"({tag3})_1", None, {}, reason))
        rep.clauses.append(ClauseResult(f"({tag3})_2", None, {}, reason))

    R = cfg.truth.get("R") or cfg.amplitude()
    if not dd:
        if R is None:
            rep.clauses.append(ClauseResult("(B4)", None, {}, "R is the unknown"))
        else:
            mR = float(np.min(R(tt)))
            rep.clauses.append(ClauseResult("(B4)", mR > 0, {"min R": mR}, "R(t) > 0"))
        q = cfg.truth.get("q") or cfg.data.get("q")
        if q is None:
            rep.clauses.append(ClauseResult("(B5)", None, {}, "q is not given"))
        else:
            qv, dqv = q(tt), q.df(tt)
            ok = float(np.min(qv)) > 0 and float(np.min(dqv)) > 0
            rep.clauses.append(ClauseResult(
                "(B5)", bool(ok), {"min q": float(np.min(qv)), "min q'": float(np.min(dqv))}, "q > 0 and q' > 0"
            ))

    rep.clauses.append(_denominator_clause(cfg, basis, h_series if have_data else None, tt))
    return rep


def _denominator_clause(cfg, basis, h_series, tt) -> ClauseResult:
    v = cfg.variant
    consts, b = cfg.constants, cfg.boundary
    k, L, us = consts.k, consts.L_latent, consts.u_star
    tgt = cfg.target
    if v is Variant.P3 or (v is Variant.P4 and tgt in ("P", "R")):
        if v is Variant.P3:
            den, name = L * b.c(tt) + us * k, "m"
        else:
            q = cfg.truth.get("q") or cfg.data.get("q")
            if q is None:
                return ClauseResult("denominator", None, {}, "q is not given")
            den, name = q(tt) * b.s(tt) - L * b.c(tt), "qs-Lc"
    elif tgt in ("R",) or (tgt is None and v is Variant.P1):
        if h_series is None:
            return ClauseResult("denominator", None, {}, "source data unavailable")
        den, name = basis.trace_weights @ h_series(tt[::16]), "w"
    else:
        return ClauseResult("denominator", None, {}, "no denominator for this recovery")
    mn = float(np.min(np.abs(den)))
    sup = float(np.max(np.abs(den)))
    ok = sup > 0 and mn > 1e-10 * sup
    return ClauseResult("denominator", bool(ok), {f"min |{name}|": mn, f"sup |{name}|": sup},
                        f"|{name}| bounded away from zero")
