import copy
import json

import numpy as np
import pytest

from stefan_inverse.errors import ConfigError, MissingDataError
from stefan_inverse.geometry import Variant
from stefan_inverse.harness.config import build_problem, load_config, parse_config, required_data
from stefan_inverse.harness.validation import validate_assumptions

BASE = {
    "variant": "P1",
    "target": "R",
    "constants": {"a2": 0.05, "k": 1.0, "L": 1.0, "u_star": 0.0, "T": 1.0},
    "boundary": {"type": "affine", "s0": 1.0, "rate": 0.1},
    "data": {"domain": "fixed", "psi": "xi^4*(1-xi)^4", "h": "(1 + t)*sin(pi*xi)"},
    "truth": {"R": "1 + t/2"},
    "discretization": {"modes": 12, "steps": 50},
}


def _cfg(**updates):
    raw = copy.deepcopy(BASE)
    for k, v in updates.items():
        if v is None:
            raw[k] = {"domain": "fixed", "psi": "xi^4*(1-xi)^4"}
        elif isinstance(v, dict) and isinstance(raw.get(k), dict):
            raw[k].update(v)
        else:
            raw[k] = v
    return raw


def test_parse_defaults_and_fields():
    cfg = parse_config(_cfg())
    assert cfg.variant is Variant.P1
    assert cfg.modes == 12 and cfg.steps == 50
    assert cfg.solver == "trapezoid"
    assert cfg.eps_den == 1e-10
    assert cfg.grid.dt == pytest.approx(0.02)


def test_load_config_round_trip(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(_cfg()))
    assert load_config(p).modes == 12
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.json")


@pytest.mark.parametrize("raw,exc", [
    (_cfg(variant="P9"), ConfigError),
    (_cfg(constants={"a2": -1.0}), ConfigError),
    (_cfg(data=None), MissingDataError),
    (_cfg(data={"q": "1"}), ConfigError),
    (_cfg(data={"psi": "xi +"}), ConfigError),
])
def test_rejects_bad_configs(raw, exc):
    with pytest.raises(exc):
        parse_config(raw)


def test_required_data_table():
    req, opt = required_data(Variant.P2, "R", "fixed", False)
    assert req == {"psi", "h", "q"}
    req, _ = required_data(Variant.P4, "q", "fixed", False)
    assert "R|P" in req
    req, _ = required_data(Variant.P1, "R", "physical", False)
    assert req == {"phi", "f"}
    with pytest.raises(ConfigError):
        required_data(Variant.P4, "q", "physical", False)
    with pytest.raises(ConfigError):
        required_data(Variant.P3, "P", "physical", False, u_star=0.5)
    with pytest.raises(ConfigError):
        required_data(Variant.P1, "q", "fixed", False)


def test_both_amplitude_and_reaction_rejected():
    raw = _cfg(variant="P4", target="q", data={"R": "1", "P": "0", "psi": "cos(pi*xi/2)",
                                               "h": "cos(pi*xi/2)"})
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_reaction_yields_amplitude():
    raw = _cfg(variant="P3", target="P", truth={"P": "0.5"}, constants={"u_star": 1.0})
    raw["truth"] = {"P": "0.5"}
    raw["manufacture"] = {"profile": "(1 + t)*sin(pi*xi)^3"}
    raw["data"] = {"domain": "fixed"}
    cfg = parse_config(raw)
    R = cfg.amplitude(cfg.truth)
    t = np.linspace(0, 1, 5)
    assert np.allclose(R(t), np.exp(-0.5 * t))
    assert np.allclose(R.df(t), -0.5 * np.exp(-0.5 * t))


def test_build_problem_forward_trace():
    pb = build_problem(parse_config(_cfg()))
    assert pb.strategy == "forward-trace"
    assert np.allclose(pb.truth["R"], 1 + pb.grid.nodes / 2)


def test_validation_a2_passes_with_bounds():
    rep = validate_assumptions(parse_config(_cfg()))
    c = rep.clause("(A2)")
    assert c.passed
    assert c.measured["m_s"] == pytest.approx(1.0)
    assert c.measured["M_s"] == pytest.approx(1.1)


def test_validation_compatibility_failure_detail():
    rep = validate_assumptions(parse_config(_cfg(data={"psi": "xi*(1-xi)"})))
    c = rep.clause("(A1)_1")
    assert c.passed is False
    assert "derivative 1 at xi=0" in c.detail
    assert "is 1" in c.detail
    assert not rep.passed


def test_validation_negative_source_coefficient():
    rep = validate_assumptions(parse_config(_cfg(data={"h": "-(1 + t)*sin(pi*xi)"})))
    assert rep.clause("(A3)_2").passed is False
    assert rep.clause("(A1)_1").passed


def test_validation_nd_clauses():
    raw = _cfg(variant="P2", target="R", data={"psi": "cos(pi*xi/2)^3", "h": "(1+t)*cos(pi*xi/2)",
                                               "q": "1 + 0.2*sin(t)"})
    raw.pop("truth")
    rep = validate_assumptions(parse_config(raw))
    tags = [c.tag for c in rep.clauses]
    assert "(B2)" in tags and "(B5)" in tags
    assert rep.clause("(B2)").passed
    assert rep.clause("(B5)").passed
