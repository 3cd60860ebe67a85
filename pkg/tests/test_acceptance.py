"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The scenario tests run the shipped configs at 16^3 and take several minutes
each; they carry the ``slow`` marker.
"""
import json
import math
import time

import numpy as np
import pytest

from dissmhd import grid as g
from dissmhd.diagnostics import dissipation_norms, harmonic_moments, inequality_monitor, read_csv
from dissmhd.elliptic import bogovskii, combined_extension, default_delta0, harmonic_space, poisson_mixed
from dissmhd.grid import FACES, BoundarySpec, FluidState, Grid
from dissmhd.scenarios.cli import main
from dissmhd.scenarios.config import build, load_config
from dissmhd.scenarios.runners import run_scenario
from dissmhd.scenarios.shell import static_shell
from dissmhd.solver import SolverConfig, run

from .conftest import CONFIG_DIR
from .test_diagnostics import dense_h1_squared
from .test_elliptic import dense_bogovskii, dense_poisson


def shipped(name, **solver):
    cfg = load_config(CONFIG_DIR / name)
    cfg.setdefault("solver", {}).update(solver)
    return cfg


def test_criterion_01_constitutive_hypotheses(tmp_path, capsys, verdict):
    cfg = tmp_path / "default.json"
    # default models; the boundary block only satisfies config validation
    cfg.write_text(json.dumps({"scenario": "run", "boundary": {"theta_B": {"*": "1"}}}))
    t0 = time.perf_counter()
    code = main(["check-eos", str(cfg), "--samples", "25", "--h", "1e-4"])
    elapsed = time.perf_counter() - t0
    rep = json.loads(capsys.readouterr().out)
    margins = [h["margin"] for h in rep["hypotheses"]["hypotheses"]]
    gibbs = rep["gibbs"]["max_residual"]
    ok = code == 0 and rep["hypotheses"]["passed"] and min(margins) > 0 and gibbs < 1e-6 and elapsed < 5
    verdict(1, ok, f"{len(margins)} hypotheses, min margin {min(margins):.2e}, "
                   f"Gibbs residual {gibbs:.2e} at 25 states, {elapsed:.2f} s")
    assert ok


def test_criterion_02_conservation(verdict):
    sc = build(shipped("conservation.json", max_steps=1000, output_every=1))
    basis = harmonic_space(sc.grid, sc.spec)
    assert basis.dim >= 1
    state = sc.initial_state()
    m0 = g.volume_integral(sc.grid, state.rho)
    h0 = harmonic_moments(sc.grid, state.B, basis)
    worst = {"mass": 0.0, "divB": 0.0, "harm": 0.0}

    def sink(s, n):
        worst["mass"] = max(worst["mass"], abs(g.volume_integral(sc.grid, s.rho) - m0) / m0)
        worst["divB"] = max(worst["divB"], float(np.max(np.abs(g.div(sc.grid, s.B)))))
        h = harmonic_moments(sc.grid, s.B, basis)
        worst["harm"] = max(worst["harm"], float(np.max(np.abs(h - h0)) / np.max(np.abs(h0))))

    t0 = time.perf_counter()
    _, _, n = run(sc.grid, state, sc.spec, sc.solver, sc.models, [sink])
    elapsed = time.perf_counter() - t0
    ok = n == 1000 and worst["mass"] < 1e-10 and worst["divB"] < 1e-12 and worst["harm"] < 1e-8 and elapsed < 60
    verdict(2, ok, f"{n} steps at 16^3: mass drift {worst['mass']:.1e}, max|div B| {worst['divB']:.1e}, "
                   f"harmonic drift {worst['harm']:.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_03_dense_oracles(verdict):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    gr = Grid((8, 8, 8), (1.0, 1.1, 0.9))

    rhs = rng.standard_normal(gr.shape)
    dirichlet = {"x-": 0.5, "z+": rng.standard_normal((8, 8, 1))}
    neumann = {"y-": -0.2}
    phi = poisson_mixed(gr, rhs, dirichlet, neumann, rtol=1e-12)
    ref = dense_poisson(gr, rhs, dirichlet, neumann)
    e_poisson = np.max(np.abs(phi - ref)) / np.max(np.abs(ref))

    gc = Grid((8, 8, 8))
    f = rng.standard_normal(gc.shape)
    f -= f.mean()
    v = bogovskii(gc, f)
    G, D, dofs = dense_bogovskii(gc)
    m = len(dofs)
    kkt = np.block([[G.T @ G, D.T], [D, np.zeros((D.shape[0], D.shape[0]))]])
    sol = np.linalg.lstsq(kkt, np.concatenate([np.zeros(m), f.ravel()]), rcond=None)[0][:m]
    got = np.array([v[c][ijk] for (c, ijk) in dofs])
    e_bog = np.max(np.abs(got - sol)) / np.max(np.abs(sol))

    s = FluidState(0.0, np.ones(gr.shape), 0.5 + rng.random(gr.shape),
                   tuple(rng.standard_normal(gr.face_shape(c)) for c in range(3)),
                   tuple(rng.standard_normal(gr.face_shape(c)) for c in range(3)))
    got = dissipation_norms(gr, s, 6.5)
    cellw = np.full(gr.shape, gr.cell_volume)
    ref = {"theta_beta": dense_h1_squared(gr.shape, gr.h, cellw, s.theta ** 3.25),
           "log_theta": dense_h1_squared(gr.shape, gr.h, cellw, np.log(s.theta)),
           "u": sum(dense_h1_squared(gr.face_shape(c), gr.h, g.face_weights(gr, c), s.u[c]) for c in range(3)),
           "B": sum(dense_h1_squared(gr.face_shape(c), gr.h, g.face_weights(gr, c), s.B[c]) for c in range(3))}
    e_norm = max(abs(got[k] - math.sqrt(v)) / math.sqrt(v) for k, v in ref.items())
    elapsed = time.perf_counter() - t0
    ok = max(e_poisson, e_bog, e_norm) < 1e-6 and elapsed < 30
    verdict(3, ok, f"relative errors: Poisson {e_poisson:.1e}, Bogovskii {e_bog:.1e}, "
                   f"dissipation norms {e_norm:.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_04_mimetic_identities(verdict):
    # the residual is compared with the size of the operands times the stencil
    # weight sum(2/h); on unit-spacing grids that is also the absolute residual
    rng = np.random.default_rng(4)
    worst = 0.0
    absolute_unit = 0.0
    for n in (8, 16, 24):
        for L in (1.0, float(n)):
            gr = Grid((n, n, n), (L, L, L))
            w = sum(2.0 / h for h in gr.h)
            dirichlet = {f: ("dirichlet", 0.0) for f in FACES}
            ghosts = {f: (-1.0, 0.0) for f in FACES}
            for _ in range(100):
                E = tuple(rng.standard_normal(gr.edge_shape(e)) for e in range(3))
                C = g.curl_edge_to_face(gr, E)
                r1 = float(np.max(np.abs(g.div(gr, C))))
                s1 = max(float(np.max(np.abs(x))) for x in C) * w
                phi = rng.standard_normal(gr.shape)
                G = g.grad(gr, phi, dirichlet)
                r2 = max(float(np.max(np.abs(j))) for j in g.curl_face_to_edge(gr, G, ghosts))
                s2 = max(float(np.max(np.abs(x))) for x in G) * w
                worst = max(worst, r1 / s1, r2 / s2)
                if L == n:
                    absolute_unit = max(absolute_unit, r1, r2)
    ok = worst < 1e-13 and absolute_unit < 1e-13
    verdict(4, ok, f"100 fields per grid on 8^3/16^3/24^3: relative residual {worst:.1e}, "
                   f"absolute on unit spacing {absolute_unit:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_05_entropy_monotonicity(tmp_path, verdict):
    res = run_scenario(shipped("insulated.json", max_steps=10_000, output_every=1), out_dir=str(tmp_path))
    rows = read_csv(tmp_path / "records.csv")
    mon = inequality_monitor(rows, rel_tol=1e-8, insulated=True)
    steps = int(rows[-1]["step"])
    ok = res.status == 0 and steps == 10_000 and mon["entropy_defects"] == 0
    verdict(5, ok, f"{steps} steps insulated: {mon['entropy_defects']} entropy defects, "
                   f"min increment {mon['entropy_min_increment']:.2e}")
    assert ok


@pytest.mark.slow
def test_criterion_06_equilibrium(tmp_path, verdict):
    t0 = time.perf_counter()
    res = run_scenario(load_config(CONFIG_DIR / "equilibrium.json"), out_dir=str(tmp_path))
    elapsed = time.perf_counter() - t0
    c = res.report.get("checks", {})
    ok = res.status == 0 and res.report["passed"] and elapsed < 600
    verdict(6, ok, f"u ratio {c['u_decay']['value']:.2e}, theta reduction {c['theta_reduction']['value']:.1f}x, "
                   f"{c['ballistic_trend']['defects']} ballistic defects, {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_07_blowup(tmp_path, verdict):
    t0 = time.perf_counter()
    res = run_scenario(load_config(CONFIG_DIR / "blowup.json"), out_dir=str(tmp_path))
    elapsed = time.perf_counter() - t0
    c = res.report.get("checks", {})
    ok = res.status == 0 and res.report["passed"] and c["energy_growth"]["value"] > 1.2 and elapsed < 600
    verdict(7, ok, f"E(t_end)/E(t_end/2) = {c['energy_growth']['value']:.3f}, "
                   f"{c['entropy_monotone']['defects']} entropy defects, {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_08_absorbing_set(tmp_path, verdict):
    t0 = time.perf_counter()
    res = run_scenario(load_config(CONFIG_DIR / "absorbing.json"), out_dir=str(tmp_path))
    elapsed = time.perf_counter() - t0
    c = res.report.get("checks", {})
    width = c["common_band"]["value"]
    ok = res.status == 0 and res.report["passed"] and width < 0.5 and elapsed < 1800
    e0 = ", ".join(f"{m['E_initial']:.3g}" for m in res.report["members"])
    verdict(8, ok, f"initial energies {e0}: terminal band width {width:.3e}, {elapsed:.0f} s")
    assert ok


def test_criterion_09_static_shell(verdict):
    t0 = time.perf_counter()
    rest = static_shell(1.0, 2.0, 2.0, 1.0, (0.0, 0.0, 0.0))
    spin = static_shell(1.0, 2.0, 2.0, 1.0, (0.0, 0.0, 1.0))
    elapsed = time.perf_counter() - t0
    rel = abs(spin.max_obstruction - spin.closed_form) / spin.closed_form
    ok = rest.max_obstruction < 1e-12 and rel < 0.01 and elapsed < 1.0
    verdict(9, ok, f"omega=0: {rest.max_obstruction:.1e}; omega=z: {spin.max_obstruction:.6f} vs "
                   f"{spin.closed_form:.6f} (rel {rel:.1e}), {elapsed:.2f} s")
    assert ok


def test_criterion_10_extension_smallness(verdict):
    gr = Grid((32, 32, 32))
    spec = BoundarySpec.uniform(
        theta_B={f: (lambda t, x, y, z: 1.0 + 0 * x) for f in FACES},
        b_tau={"z+": lambda t, x, y, z: (-(x - 0.5), -(y - 0.5), 0 * x)})
    d0 = default_delta0(gr, spec)
    norms = []
    for k in (0.4, 0.2, 0.1):
        B = combined_extension(gr, spec, 0.0, k * d0, d0).B_dD
        norms.append(math.sqrt(g.face_inner(gr, B, B)))
    ok = norms[0] > norms[1] > norms[2]
    verdict(10, ok, f"32^3, delta0 {d0}: |B_dD| = " + ", ".join(f"{x:.4f}" for x in norms))
    assert ok


def test_criterion_11_determinism(tmp_path, verdict):
    cfg = shipped("blowup.json", max_steps=40, output_every=4)
    cfg["grid"] = {"cells": 8}
    a = run_scenario(cfg, out_dir=str(tmp_path / "a"))
    b = run_scenario(cfg, out_dir=str(tmp_path / "b"))
    ca, cb = (tmp_path / "a" / "records.csv").read_bytes(), (tmp_path / "b" / "records.csv").read_bytes()
    ok = a.status == b.status == 0 and ca == cb and len(ca) > 0
    verdict(11, ok, f"two runs, {len(ca)} CSV bytes each, identical: {ca == cb}")
    assert ok
