"""JSON problem configuration.

A configuration document looks like::

    {
      "variant": "P1",
      "target": "R",
      "constants": {"a2": 0.05, "k": 1, "L": 1, "u_star": 0.5, "T": 1},
      "boundary": {"type": "affine", "s0": 1, "rate": 0.1},
      "data": {"domain": "fixed", "psi": "xi^4*(1-xi)^4", "h": "(1+t/2)*sin(pi*xi)"},
      "truth": {"R": "1 + t/2"},
      "discretization": {"modes": 24, "steps": 400},
      "experiment": {"kind": "round-trip"},
      "noise": {"amplitude": 0, "seed": 0},
      "output": {"dir": "out"}
    }

Physical-domain data use ``phi(x)`` and ``f(x, t)``; fixed-domain data use
``psi(xi)``, ``h(xi, t)`` and an optional known forcing ``extra(xi, t)``.
Time functions ``R``, ``P``, ``q`` are expressions in ``t`` or sampled
tables ``{"t": [...], "values": [...]}``. A ``manufacture.profile``
expression ``V(xi, t)`` selects the modal-trace construction.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import sympy as sp
from scipy.interpolate import CubicSpline

from ..basis import EigenBasis
from ..errors import ConfigError, MissingDataError
from ..forward import ModalSeries, TimeGrid
from ..geometry import (
    MovingBoundary,
    PhysicalConstants,
    PhysicalData,
    TransformChain,
    Variant,
    make_coefficients,
)
from .expressions import Expression, parse_expression
from .manufacture import (
    ManufacturedProblem,
    manufacture_flux_consistent,
    manufacture_forward_trace,
    manufacture_modal_trace,
)

__all__ = [
    "ProblemConfig",
    "TimeFunction",
    "load_config",
    "parse_config",
    "build_problem",
    "fixed_domain_data",
    "required_data",
]

TARGETS = ("R", "q", "P")
EXPERIMENTS = ("forward-only", "round-trip", "convergence", "stability", "max-principle")
SPACE_KEYS = {"physical": ("phi", "f"), "fixed": ("psi", "h", "extra")}
TIME_KEYS = ("R", "P", "q")


@dataclass
class TimeFunction:
    """Time function with its first derivative."""

    f: Callable
    df: Callable
    text: str = ""

    def __call__(self, t):
        return self.f(t)


def _time_function(spec, name: str) -> TimeFunction:
    if isinstance(spec, dict):
        try:
            t = np.asarray(spec["t"], dtype=float)
            v = np.asarray(spec["values"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"sampled {name} needs numeric 't' and 'values'") from exc
        if t.ndim != 1 or t.shape != v.shape or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ConfigError(f"sampled {name} must have increasing t and matching values")
        cs = CubicSpline(t, v)
        d = cs.derivative()
        return TimeFunction(lambda x: np.asarray(cs(x), float), lambda x: np.asarray(d(x), float), "sampled")
    e = parse_expression(spec, ("t",))
    return TimeFunction(e, e.diff("t"), e.text)


def _amplitude_from_reaction(P: TimeFunction, text) -> TimeFunction:
    """``R = exp(-int_0^t P)`` and ``R' = -P R``."""
    if isinstance(text, dict):
        from scipy.integrate import cumulative_trapezoid

        tt = np.linspace(0.0, float(np.max(text["t"])), 4097)
        integral = cumulative_trapezoid(P(tt), tt, initial=0.0)
        Rs = CubicSpline(tt, np.exp(-integral))
        return TimeFunction(lambda x: np.asarray(Rs(x), float), lambda x: -P(x) * np.asarray(Rs(x), float), "sampled")
    e = parse_expression(text, ("t",))
    integral = e.integrate_from_zero("t")
    R = integral.compose(lambda n: sp.exp(-n))
    return TimeFunction(R, lambda x: -e(x) * R(x), f"exp(-int {e.text})")


@dataclass
class ProblemConfig:
    """Validated problem description."""

    variant: Variant
    target: str | None
    constants: PhysicalConstants
    boundary: MovingBoundary
    domain: str
    data: dict
    truth: dict
    profile: Expression | None
    modes: int
    steps: int
    quadrature: int | None
    fd_J: int
    fd_M: int
    solver: str
    experiment: dict
    noise_amplitude: float
    seed: int
    output_dir: str
    eps_den: float
    raw: dict = field(default_factory=dict)

    @property
    def basis(self) -> EigenBasis:
        return EigenBasis(self.variant.basis_kind, self.modes, self.quadrature)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.constants.T_horizon, self.steps)

    @property
    def manufactured(self) -> bool:
        return bool(self.truth) or self.profile is not None

    def amplitude(self, source: dict | None = None) -> TimeFunction | None:
        """``R`` from ``R`` or ``P`` in the given table (data by default)."""
        table = self.data if source is None else source
        if "R" in table:
            return table["R"]
        if "P" in table:
            return table["P_amplitude"]
        return None

    def with_overrides(self, modes=None, steps=None, seed=None, target=None) -> "ProblemConfig":
        raw = copy.deepcopy(self.raw)
        disc = raw.setdefault("discretization", {})
        if modes is not None:
            disc["modes"] = int(modes)
        if steps is not None:
            disc["steps"] = int(steps)
        if seed is not None:
            raw.setdefault("noise", {})["seed"] = int(seed)
            raw.setdefault("experiment", {})["seed"] = int(seed)
        if target is not None:
            raw["target"] = target
        return parse_config(raw)


def _num(section: dict, key: str, default=None, positive=False, integer=False, aliases=()):
    for k in (key,) + tuple(aliases):
        if k in section:
            val = section[k]
            break
    else:
        if default is None:
            raise ConfigError(f"missing required field {key!r}")
        val = default
    try:
        out = int(val) if integer else float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"field {key!r} must be numeric, got {val!r}") from None
    if integer and float(val) != out:
        raise ConfigError(f"field {key!r} must be an integer")
    if not integer and not math.isfinite(out):
        raise ConfigError(f"field {key!r} must be finite")
    if positive and not out > 0:
        raise ConfigError(f"field {key!r} must be positive")
    return out


def _boundary(spec: dict, T: float) -> MovingBoundary:
    if not isinstance(spec, dict):
        raise ConfigError("boundary must be an object")
    kind = str(spec.get("type", "affine")).lower()
    try:
        if kind == "affine":
            return MovingBoundary.affine(_num(spec, "s0", 1.0), _num(spec, "rate", 0.0), T)
        if kind == "polynomial":
            coeffs = spec.get("coeffs")
            if not isinstance(coeffs, list) or not coeffs:
                raise ConfigError("polynomial boundary needs a non-empty 'coeffs' list")
            return MovingBoundary.polynomial([float(c) for c in coeffs], T)
        if kind == "sampled":
            return MovingBoundary.sampled(spec["t"], spec["s"], T, spec.get("end_slopes"))
        if kind == "expression":
            e = parse_expression(spec["s"], ("t",))
            return MovingBoundary.from_callables(e, e.diff("t"), e.diff("t", 2), T)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid boundary specification: {exc}") from exc
    raise ConfigError(f"unknown boundary type {kind!r}")


def required_data(variant: Variant, target: str | None, domain: str, manufactured: bool,
                  u_star: float = 0.0) -> tuple[set, set]:
    """``(required, optional)`` data keys for a run.

    Time functions listed as ``"R|P"`` accept either amplitude or reaction.
    """
    v = variant.value
    if manufactured:
        return set(), {"phi", "f", "psi", "h", "extra", "R", "P", "q"}
    space = {"phi", "f"} if domain == "physical" else {"psi", "h"}
    optional = {"extra"} if domain == "fixed" else set()
    if target is None:
        req = {"R|P"}
        if domain == "physical" and v in ("P2", "P4"):
            req.add("q")
        if domain == "fixed" and v in ("P2", "P4"):
            optional.add("q")
        return space | req, optional
    if domain == "physical":
        if (v, target) == ("P1", "R"):
            return space, optional
        if (v, target) == ("P2", "R"):
            return space | {"q"}, optional
        if (v, target) == ("P3", "P") and u_star == 0.0:
            return space, optional
        raise ConfigError(
            f"{v} recovery of {target} from physical data makes the transformed source depend on "
            "the unknown; supply fixed-domain data (psi, h) instead"
        )
    table = {
        ("P1", "R"): set(),
        ("P2", "R"): {"q"},
        ("P2", "q"): {"R|P"},
        ("P3", "P"): set(),
        ("P3", "R"): set(),
        ("P4", "P"): {"q"},
        ("P4", "R"): {"q"},
        ("P4", "q"): {"R|P"},
    }
    if (v, target) not in table:
        raise ConfigError(f"variant {v} cannot recover {target}")
    return space | table[(v, target)], optional


def _check_keys(present: set, required: set, optional: set, where: str):
    have = set(present)
    needed = set()
    for r in required:
        if r == "R|P":
            if not ({"R", "P"} & have):
                raise MissingDataError(f"{where} needs R or P")
            if {"R", "P"} <= have:
                raise ConfigError(f"{where}: give R or P, not both")
            needed |= {"R", "P"} & have
        elif r not in have:
            raise MissingDataError(f"{where} needs {r!r}")
        else:
            needed.add(r)
    extra = have - needed - optional
    if extra:
        raise ConfigError(f"{where}: unexpected data {sorted(extra)}")


def parse_config(raw: dict) -> ProblemConfig:
    """Validate a configuration mapping and build a :class:`ProblemConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    raw = copy.deepcopy(raw)
    try:
        variant = Variant.parse(raw.get("variant", ""))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    target = raw.get("target")
    if target is not None:
        target = {"r": "R", "q": "q", "p": "P"}.get(str(target).lower())
        if target is None:
            raise ConfigError(f"target must be one of {TARGETS}")
    cs = raw.get("constants")
    if not isinstance(cs, dict):
        raise ConfigError("missing 'constants' section")
    try:
        consts = PhysicalConstants(
            a2=_num(cs, "a2", aliases=("a_squared",)),
            k=_num(cs, "k"),
            L_latent=_num(cs, "L", aliases=("L_latent",)),
            u_star=_num(cs, "u_star", 0.0) if "u_star" in cs else 0.0,
            T_horizon=_num(cs, "T", 1.0, aliases=("T_horizon",)),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    boundary = _boundary(raw.get("boundary", {"type": "affine", "s0": 1.0, "rate": 0.0}), consts.T_horizon)

    data_raw = dict(raw.get("data", {}))
    domain = str(data_raw.pop("domain", "fixed")).lower()
    if domain not in SPACE_KEYS:
        raise ConfigError("data.domain must be 'physical' or 'fixed'")
    data = {}
    for key, spec in data_raw.items():
        if key in ("phi",):
            data[key] = parse_expression(spec, ("x",))
        elif key == "f":
            data[key] = parse_expression(spec, ("x", "t"))
        elif key == "psi":
            data[key] = parse_expression(spec, ("xi",))
        elif key in ("h", "extra"):
            data[key] = parse_expression(spec, ("xi", "t"))
        elif key in TIME_KEYS:
            data[key] = _time_function(spec, key)
        else:
            raise ConfigError(f"unknown data entry {key!r}")
        if key in ("phi", "f", "psi", "h", "extra") and key not in SPACE_KEYS[domain]:
            raise ConfigError(f"data entry {key!r} does not belong to the {domain} domain")
    if "P" in data:
        data["P_amplitude"] = _amplitude_from_reaction(data["P"], data_raw["P"])

    truth = {}
    truth_raw = raw.get("truth", {}) or {}
    for key, spec in truth_raw.items():
        if key not in TIME_KEYS:
            raise ConfigError(f"unknown truth entry {key!r}")
        truth[key] = _time_function(spec, key)
    if "P" in truth and "R" not in truth:
        truth["R"] = _amplitude_from_reaction(truth["P"], truth_raw["P"])
    if "R" in truth and "P" not in truth:
        Rt = truth["R"]
        truth["P"] = TimeFunction(lambda t: -Rt.df(t) / Rt.f(t), None, "-R'/R")

    man = raw.get("manufacture", {}) or {}
    profile = parse_expression(man["profile"], ("xi", "t")) if "profile" in man else None

    disc = raw.get("discretization", {}) or {}
    modes = _num(disc, "modes", 32, positive=True, integer=True)
    steps = _num(disc, "steps", 400, positive=True, integer=True)
    quad = disc.get("quadrature")
    quad = None if quad is None else _num(disc, "quadrature", positive=True, integer=True)
    fd_J = _num(disc, "fd_J", 200, positive=True, integer=True)
    fd_M = _num(disc, "fd_M", 400, positive=True, integer=True)
    solver = str(disc.get("solver", "trapezoid"))
    if solver not in ("trapezoid", "picard"):
        raise ConfigError("discretization.solver must be 'trapezoid' or 'picard'")
    eps_den = _num(disc, "eps_den", 1e-10, positive=True)

    exp = dict(raw.get("experiment", {}) or {})
    kind = str(exp.get("kind", "round-trip"))
    if kind not in EXPERIMENTS:
        raise ConfigError(f"experiment.kind must be one of {EXPERIMENTS}")
    exp["kind"] = kind
    noise = raw.get("noise", {}) or {}
    amp = _num(noise, "amplitude", 0.0)
    if amp < 0:
        raise ConfigError("noise.amplitude must be non-negative")
    seed = _num(noise, "seed", 0, integer=True)
    out = raw.get("output", {}) or {}

    cfg = ProblemConfig(
        variant=variant, target=target, constants=consts, boundary=boundary, domain=domain,
        data=data, truth=truth, profile=profile, modes=modes, steps=steps, quadrature=quad,
        fd_J=fd_J, fd_M=fd_M, solver=solver, experiment=exp, noise_amplitude=amp, seed=seed,
        output_dir=str(out.get("dir", "out")), eps_den=eps_den, raw=raw,
    )
    _validate_presence(cfg)
    return cfg


def _validate_presence(cfg: ProblemConfig):
    keys = {k for k in cfg.data if k != "P_amplitude"}
    if cfg.experiment["kind"] == "stability" or cfg.experiment["kind"] == "max-principle":
        return
    if cfg.experiment.get("instance") == "volterra-analytic":
        return
    if cfg.manufactured:
        _validate_manufactured(cfg, keys)
        return
    req, opt = required_data(cfg.variant, cfg.target, cfg.domain, False, cfg.constants.u_star)
    where = f"{cfg.variant.value} ({cfg.domain} data, target {cfg.target or 'forward'})"
    _check_keys(keys, req, opt, where)


def _validate_manufactured(cfg: ProblemConfig, keys: set):
    v, target = cfg.variant.value, cfg.target
    truth = set(cfg.truth)
    where = f"manufactured {v}"
    if cfg.profile is not None:
        if keys - {"R", "P", "q"}:
            raise ConfigError(f"{where}: a profile replaces the space data; remove {sorted(keys - {'R', 'P', 'q'})}")
        amp = ("R" in truth) or ("R" in keys) or ("P" in keys)
        if not amp:
            raise MissingDataError(f"{where} needs R (truth) or R/P (data)")
        if v in ("P2", "P4") and "q" not in truth and "q" not in keys:
            raise MissingDataError(f"{where} needs q (truth or data)")
        return
    if "R" not in truth:
        raise MissingDataError(f"{where} without a profile needs truth R or P")
    if target == "q" or v == "P3":
        raise ConfigError(f"{where} recovering {target or 'P'} needs a manufacture.profile")
    if cfg.domain == "physical" and v != "P1":
        raise ConfigError(f"{where} with forward data needs fixed-domain data")
    space = set(SPACE_KEYS[cfg.domain]) - {"extra"}
    missing = space - keys
    if missing:
        raise MissingDataError(f"{where} needs {sorted(missing)}")
    extra = keys - set(SPACE_KEYS[cfg.domain])
    if extra:
        raise ConfigError(f"{where}: unexpected data {sorted(extra)}")


def load_config(path) -> ProblemConfig:
    """Read and validate a JSON configuration file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError:
        raise
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    return parse_config(raw)


def fixed_domain_data(cfg: ProblemConfig, R: TimeFunction | None = None, q: TimeFunction | None = None):
    """Fixed-domain ``(initial, source, extra)`` callables for the configured data."""
    d = cfg.data
    if cfg.domain == "fixed":
        return d["psi"], d["h"], d.get("extra")
    R = R or cfg.amplitude()
    q = q or d.get("q")
    P = d.get("P")
    pd = PhysicalData(
        phi=d.get("phi"), f=d.get("f"),
        R=R.f if R else None, dR=R.df if R else None,
        q=q.f if q else None, dq=q.df if q else None,
        P=P.f if P else None,
    )
    fd = TransformChain(cfg.variant, cfg.boundary, cfg.constants).data_to_fixed(pd)
    return fd.initial, fd.source, fd.extra


def build_problem(cfg: ProblemConfig, steps: int | None = None) -> ManufacturedProblem:
    """Assemble the modal problem for the configured run.

    Manufactured configurations produce consistent measurements from the
    truth; others package the given data with the physical drivers.
    """
    basis = EigenBasis(cfg.variant.basis_kind, cfg.modes, cfg.quadrature)
    coeffs = make_coefficients(cfg.boundary, cfg.constants, basis)
    grid = TimeGrid(cfg.constants.T_horizon, steps or cfg.steps)
    v = cfg.variant
    t = grid.nodes

    if cfg.manufactured:
        truth = cfg.truth
        R = truth.get("R") or cfg.amplitude()
        q = truth.get("q") or cfg.data.get("q")
        if cfg.profile is not None:
            prof = cfg.profile
            extra = None
            if v is Variant.P1 and cfg.constants.u_star != 0.0:
                b, us = cfg.boundary, cfg.constants.u_star
                extra = ModalSeries.from_field(lambda xi, tt: us * xi * b.ds(tt) / b.s(tt), basis)
            pb = manufacture_modal_trace(
                v, coeffs, grid, prof, prof.diff("t"), R.f, R.df,
                q.f if q else None, q.df if q else None, extra=extra, target=cfg.target,
            )
        else:
            initial, source, extra = fixed_domain_data(cfg, R=R)
            psi = basis.project(initial)
            src = ModalSeries.from_field(source, basis)
            ext = ModalSeries.from_field(extra, basis) if extra is not None else None
            if v is Variant.P1:
                pb = manufacture_forward_trace(psi, src, coeffs, grid, R.f, R.df, extra=ext)
            else:
                pb = manufacture_flux_consistent(v, psi, src, coeffs, grid, R.f, R.df, extra=ext,
                                                 target=cfg.target or "R")
        if cfg.target is not None:
            pb.target = cfg.target
        return pb

    R = cfg.amplitude()
    q = cfg.data.get("q")
    initial, source, extra = fixed_domain_data(cfg)
    psi = basis.project(initial)
    src = ModalSeries.from_field(source, basis)
    ext = ModalSeries.from_field(extra, basis) if extra is not None else None
    meas = {}
    if q is not None:
        meas["q"] = q.f(t) + np.zeros_like(t)
        meas["dq"] = q.df(t) + np.zeros_like(t)
    from ..forward import solve_modal

    sol = solve_modal(psi, src, R.f, coeffs, grid, extra=ext) if R is not None else None
    return ManufacturedProblem(
        v, cfg.target or "", "given", coeffs, grid, psi, src, ext, {}, meas, sol,
        R.f if R else None, R.df if R else None,
    )
