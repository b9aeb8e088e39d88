import copy
import csv
import json
import math

import numpy as np
import pytest

from stefan_inverse.basis import BasisKind, EigenBasis
from stefan_inverse.forward import TimeGrid, solve_modal
from stefan_inverse.geometry import MovingBoundary, PhysicalConstants, make_coefficients
from stefan_inverse.harness.config import parse_config
from stefan_inverse.harness.experiments import error_norms, run_experiment
from stefan_inverse.harness.output import emit, format_number

DD = BasisKind.DIRICHLET_DIRICHLET

BASE = {
    "variant": "P1",
    "constants": {"a2": 0.05, "k": 1.0, "L": 1.0, "T": 1.0},
    "boundary": {"type": "affine", "s0": 1.0, "rate": 0.1},
    "data": {"domain": "fixed", "psi": "sin(pi*xi)^3", "h": "sin(pi*xi)"},
    "discretization": {"modes": 8, "steps": 40},
}


def _raw(**kw):
    raw = copy.deepcopy(BASE)
    raw.update(kw)
    return raw


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_error_norms():
    g = TimeGrid(1.0, 4)
    n = error_norms(np.ones(5), np.zeros(5), g)
    assert n == {"linf": 1.0, "l2": 1.0}


def test_format_number():
    assert format_number(0.1) == "0.1"
    assert format_number(None) == ""
    assert float(format_number(1 / 3)) == 1 / 3


def test_forward_zero_data_gives_zero_norms(tmp_path):
    raw = _raw(data={"domain": "fixed", "psi": "0", "h": "0", "R": "1"}, experiment={"kind": "forward-only"})
    rep = run_experiment(parse_config(raw))
    assert rep.errors == {"sup|U|": 0.0, "sup|nu|": 0.0}
    emit(rep, tmp_path)
    rows = _read_csv(tmp_path / "trace.csv")
    assert rows[0][:2] == ["t", "nu"]
    assert _read_csv(tmp_path / "field.csv")[0] == ["t", "xi", "U"]


def test_single_mode_stability_example():
    """delta phi_1 initial data: |dU| = delta sqrt(2) sup exp(-int (a lambda_1 - b)) <= delta sqrt(2) pi^4."""
    delta = 1e-3
    co = make_coefficients(MovingBoundary.affine(1.0, 0.1, 1.0), PhysicalConstants(a2=0.05, k=1.0, L_latent=1.0),
                           EigenBasis(DD, 4))
    g = TimeGrid(1.0, 100)
    sol = solve_modal(delta * np.eye(4)[0], np.zeros(4), None, co, g)
    lhs = float(np.max(np.abs(sol.field(np.linspace(0, 1, 201)))))
    assert lhs == pytest.approx(delta * math.sqrt(2), rel=1e-12)  # sup attained at t = 0
    assert lhs <= delta * math.sqrt(2) * math.pi**4


def test_stability_report_and_csv(tmp_path):
    raw = _raw(experiment={"kind": "stability", "trials": 5, "delta": 1e-3, "seed": 3})
    rep = run_experiment(parse_config(raw))
    assert len(rep.verdicts) == 5 and rep.all_passed
    v = rep.verdicts[0]
    assert v["theorem"] == "dd-dependence"
    assert set(v["norms"]) == {"psi_C4", "c_C2", "h_C"}
    emit(rep, tmp_path)
    assert _read_csv(tmp_path / "stability.csv")[0] == ["trial", "lhs", "rhs", "verdict"]
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["kind"] == "stability"


def test_volterra_convergence_order(tmp_path):
    raw = _raw(experiment={"kind": "convergence", "instance": "volterra-analytic", "levels": 4})
    raw["discretization"] = {"steps": 50}
    rep = run_experiment(parse_config(raw))
    assert rep.orders[0] is None
    assert all(o == pytest.approx(2.0, abs=0.05) for o in rep.orders[1:])
    emit(rep, tmp_path)
    rows = _read_csv(tmp_path / "convergence.csv")
    assert rows[0] == ["level", "h", "error", "order"]
    assert rows[1][3] == ""


def test_round_trip_series(tmp_path):
    raw = _raw(target="R", truth={"R": "1 + t/2"}, experiment={"kind": "round-trip"})
    raw["data"] = {"domain": "fixed", "psi": "xi^4*(1-xi)^4", "h": "(1 + t)*sin(pi*xi)"}
    raw["discretization"] = {"modes": 16, "steps": 200}
    rep = run_experiment(parse_config(raw))
    assert rep.errors["linf"] < 1e-4
    assert "w" in rep.denominator_margins
    emit(rep, tmp_path)
    rows = _read_csv(tmp_path / "r_recovered.csv")
    assert rows[0] == ["t", "value", "reference", "abs_error"]
    assert len(rows) == 202


def test_noise_changes_recovery_deterministically():
    raw = _raw(target="R", truth={"R": "1"}, experiment={"kind": "round-trip"}, noise={"amplitude": 1e-4, "seed": 5})
    raw["data"] = {"domain": "fixed", "psi": "xi^4*(1-xi)^4", "h": "sin(pi*xi)"}
    a = run_experiment(parse_config(raw))
    b = run_experiment(parse_config(raw))
    assert a.errors == b.errors
    raw["noise"]["amplitude"] = 0.0
    assert run_experiment(parse_config(raw)).errors["linf"] < a.errors["linf"]


def test_max_principle_trials():
    raw = _raw(truth={"R": "1 + t"}, experiment={"kind": "max-principle", "trials": 5, "seed": 1})
    raw["data"] = {"domain": "fixed"}
    rep = run_experiment(parse_config(raw))
    assert rep.all_passed and len(rep.rows) == 5
