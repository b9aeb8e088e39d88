"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line through the ``criterion`` fixture; the
lines are printed in the terminal summary. Tolerances and runtime budgets
are the contract values and are not relaxed here.
"""
import json
import math
import time
from pathlib import Path

import numpy as np

from stefan_inverse.basis import BasisKind, EigenBasis, ck_norm, tail_bound_constant, weighted_tail_sum
from stefan_inverse.flux import recover_q_p2, recover_q_p4
from stefan_inverse.forward import ModalSeries, TimeGrid, fd_oracle, solve_modal
from stefan_inverse.geometry import MovingBoundary, PhysicalConstants, make_coefficients
from stefan_inverse.harness.cli import main
from stefan_inverse.harness.config import load_config
from stefan_inverse.harness.experiments import run_experiment, run_round_trip
from stefan_inverse.inverse import gronwall_bound, solve_volterra, system_from_functions

DD = BasisKind.DIRICHLET_DIRICHLET
ND = BasisKind.NEUMANN_DIRICHLET
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _coeffs(kind, N, a2=1.0, rate=0.0, L=1.0):
    consts = PhysicalConstants(a2=a2, k=1.0, L_latent=L)
    return make_coefficients(MovingBoundary.affine(1.0, rate, 1.0), consts, EigenBasis(kind, N))


def test_criterion_01_basis(criterion):
    start = time.perf_counter()
    worst = 0.0
    exact_eigs = True
    n = np.arange(1, 33)
    for kind, lam in ((DD, n**2 * math.pi**2), (ND, (2 * n - 1) ** 2 * math.pi**2 / 4)):
        b = EigenBasis(kind, 32)
        G = (b.phi_nodes * b.weights) @ b.phi_nodes.T
        worst = max(worst, float(np.max(np.abs(G - np.eye(32)))))
        exact_eigs &= bool(np.array_equal(b.eigenvalues, lam))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and exact_eigs and elapsed < 1.0
    criterion(1, ok, f"orthonormality {worst:.2e} < 1e-12, exact eigenvalues {exact_eigs}, {elapsed:.2f}s < 1s")
    assert ok


def test_criterion_02_tail_bound(criterion):
    start = time.perf_counter()
    f = lambda x: x**3 * (1 - x) ** 3
    b = EigenBasis(DD, 64)
    tail = weighted_tail_sum(b.project(f), b, 1.0)
    lhs = tail.total
    rhs = tail_bound_constant(DD) * ck_norm(f, 4)
    frac = (lhs - float(tail.partial_sums[31])) / lhs
    elapsed = time.perf_counter() - start
    ok = lhs <= rhs and frac < 1e-8 and elapsed < 1.0
    criterion(2, ok, f"sum {lhs:.4f} <= {rhs:.4f}; tail beyond n=32 is {frac:.2e} of total (< 1e-8 required); "
                     f"{elapsed:.2f}s")
    assert lhs <= rhs
    assert frac < 1e-8
    assert elapsed < 1.0


def test_criterion_03_modal_closed_forms(criterion):
    start = time.perf_counter()
    A = 0.7
    errs = []
    for kind in (DD, ND):
        co = _coeffs(kind, 8, a2=A)
        lam = co.basis.eigenvalues[:, None]
        g = TimeGrid(1.0, 50)
        t = g.nodes[None, :]
        psi = np.linspace(1.0, -0.4, 8)
        sol = solve_modal(psi, np.zeros(8), None, co, g)
        exact = psi[:, None] * np.exp(-A * lam * t)
        errs.append(float(np.max(np.abs(sol.U - exact) / np.abs(exact))))
        sol = solve_modal(np.zeros(8), np.ones(8), 1.0, co, g)
        exact = (1 - np.exp(-A * lam * t)) / (A * lam)
        errs.append(float(np.max(np.abs(sol.U[:, 1:] - exact[:, 1:]) / exact[:, 1:])))
        src = ModalSeries.from_field(lambda x, tt: (1 + tt) * np.sin(3 * x), co.basis)
        sol = solve_modal(psi, src, lambda tt: 1 + tt, co, g)
        errs.append(0.0 if np.array_equal(sol.U[:, 0], psi) else 1.0)
    err = max(errs)
    elapsed = time.perf_counter() - start
    ok = err <= 1e-10 and elapsed < 1.0
    criterion(3, ok, f"max relative error {err:.2e} <= 1e-10, {elapsed:.2f}s < 1s")
    assert ok


def test_criterion_04_spectral_vs_fd(criterion):
    start = time.perf_counter()
    co = _coeffs(DD, 8)
    init = lambda x: math.sqrt(2) * np.sin(np.pi * x)
    sol = solve_modal(np.eye(8)[0], np.zeros(8), None, co, TimeGrid(1.0, 10))
    spectral = float(sol.field(np.array([0.5]))[0, 1])
    fd = [fd_oracle(DD, init, None, co, J, M).at(0.5, 0.1) for J, M in ((50, 100), (100, 200), (200, 400))]
    diff = abs(spectral - fd[-1])
    order = math.log2(abs(fd[1] - fd[0]) / abs(fd[2] - fd[1]))
    elapsed = time.perf_counter() - start
    ok = diff <= 2e-3 and abs(order - 2.0) <= 0.2 and elapsed < 10.0
    criterion(4, ok, f"|spectral - fd| {diff:.2e} <= 2e-3, self-convergence order {order:.3f}, {elapsed:.2f}s")
    assert ok


def test_criterion_05_volterra(criterion):
    start = time.perf_counter()
    g = TimeGrid(1.0, 1000)
    sys = system_from_functions(g, 1.0, lambda tau, t: np.ones_like(t))
    R = solve_volterra(sys, "trapezoid").values
    Rp = solve_volterra(sys, "picard").values
    err_e = abs(R[-1] - math.e)
    picard = float(np.max(np.abs(R - Rp)))
    excess = float(np.max(np.abs(R) - np.exp(g.nodes)))
    envelope = bool(np.all(np.abs(R) <= np.exp(g.nodes) + 1e-9))
    assert np.allclose(gronwall_bound(sys), np.exp(g.nodes))
    elapsed = time.perf_counter() - start
    ok = err_e <= 1e-4 and picard <= 1e-6 and envelope and elapsed < 2.0
    criterion(5, ok, f"|R(1)-e| {err_e:.2e} <= 1e-4, picard gap {picard:.2e} <= 1e-6, "
                     f"max(|R| - e^t) {excess:.2e} <= 1e-9, {elapsed:.2f}s")
    assert err_e <= 1e-4
    assert picard <= 1e-6
    assert envelope
    assert elapsed < 2.0


def test_criterion_06_p1_round_trip(criterion):
    start = time.perf_counter()
    cfg = load_config(CONFIGS / "p1_round_trip.json").with_overrides(modes=24)
    fine = run_round_trip(cfg, steps=400)
    coarse = run_round_trip(cfg, steps=200)
    e1, e2 = fine.errors["linf"], coarse.errors["linf"]
    ratio = e2 / e1
    elapsed = time.perf_counter() - start
    ok = (e1 <= 1e-6 and abs(math.log2(ratio) - 2.0) <= 0.2 and elapsed < 30.0
          and fine.diagnostics.get("strategy") == "forward-trace")
    criterion(6, ok, f"||R_rec - R_true|| {e1:.2e} <= 1e-6 at N=24 M=400, halving M ratio {ratio:.2f}, "
                     f"{elapsed:.2f}s")
    assert ok


def test_criterion_07_p2_flux(criterion):
    start = time.perf_counter()
    co = _coeffs(ND, 8, L=3.0)
    g = TimeGrid(1.0, 20)
    sol = solve_modal(np.eye(8)[0], np.zeros(8), None, co, g)
    q = recover_q_p2(sol, co.boundary, co.consts).q
    closed = -(math.sqrt(2) * math.pi / 2) * np.exp(-math.pi**2 * g.nodes / 4)
    e_closed = float(np.max(np.abs(q - closed)))
    rt = run_experiment(load_config(CONFIGS / "p2_flux.json"))
    e_rt = rt.errors["linf"]
    elapsed = time.perf_counter() - start
    ok = e_closed <= 1e-10 and e_rt <= 1e-6 and elapsed < 10.0
    criterion(7, ok, f"closed form {e_closed:.2e} <= 1e-10, round trip q {e_rt:.2e} <= 1e-6, {elapsed:.2f}s")
    assert ok


def test_criterion_08_p3_reaction(criterion):
    start = time.perf_counter()
    cfg = load_config(CONFIGS / "p3_reaction.json")
    assert (cfg.modes, cfg.steps) == (24, 800)
    rep = run_experiment(cfg)
    err = rep.errors["linf"]
    t = np.asarray(rep.series["t"])
    R_ok = np.allclose(rep.series["R_reference"], np.exp(-t / 2), rtol=1e-12)
    elapsed = time.perf_counter() - start
    ok = err <= 1e-3 and R_ok and elapsed < 30.0
    criterion(8, ok, f"||P_rec - 0.5|| {err:.2e} <= 1e-3 at N=24 M=800, {elapsed:.2f}s")
    assert ok


def test_criterion_09_p4_degeneracy(criterion):
    start = time.perf_counter()
    co = _coeffs(ND, 24, a2=0.05, rate=0.1)
    b = co.basis
    psi = b.project(lambda x: np.cos(np.pi * x / 2) ** 3)
    h = ModalSeries.from_field(lambda x, t: (1 + t) * np.cos(np.pi * x / 2), b)
    sol = solve_modal(psi, h, 1.0, co, TimeGrid(1.0, 200))
    q2 = recover_q_p2(sol, co.boundary, co.consts).q
    q4 = recover_q_p4(sol, co.boundary, co.consts, 1.0).q
    same = bool(np.array_equal(q2, q4)) and q2.tobytes() == q4.tobytes()
    elapsed = time.perf_counter() - start
    ok = same and elapsed < 5.0
    criterion(9, ok, f"bitwise equal {same}, {elapsed:.2f}s")
    assert ok


def test_criterion_10_max_principle(criterion):
    start = time.perf_counter()
    rep = run_experiment(load_config(CONFIGS / "max_principle.json"))
    n = len(rep.verdicts)
    npass = sum(v["verdict"] == "pass" for v in rep.verdicts)
    margin = min(v["lhs"] - v["rhs"] for v in rep.verdicts)
    elapsed = time.perf_counter() - start
    ok = n == 50 and npass == n and elapsed < 20.0
    criterion(10, ok, f"{npass}/{n} trials pass, smallest margin {margin:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_11_continuous_dependence(criterion):
    start = time.perf_counter()
    parts = []
    ok = True
    for name, tag in (("stability_dd.json", "dd-dependence"), ("stability_nd.json", "nd-dependence")):
        rep = run_experiment(load_config(CONFIGS / name))
        n = len(rep.verdicts)
        npass = sum(v["verdict"] == "pass" for v in rep.verdicts)
        ok &= n == 100 and npass == n and all(v["theorem"] == tag for v in rep.verdicts)
        parts.append(f"{tag} {npass}/{n}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    criterion(11, ok, f"{', '.join(parts)} trials pass, {elapsed:.2f}s")
    assert ok


def test_criterion_12_determinism(criterion, tmp_path):
    raw = json.loads((CONFIGS / "p1_round_trip.json").read_text())
    raw["noise"] = {"amplitude": 1e-6, "seed": 7}
    cfg = tmp_path / "noisy.json"
    cfg.write_text(json.dumps(raw))
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert main(["recover-r", "--config", str(cfg), "--out", str(out), "--steps", "100", "--seed", "9"]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = bool(names) and all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    criterion(12, same, f"identical bytes for {', '.join(names)}")
    assert same
