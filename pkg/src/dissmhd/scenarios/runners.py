"""Scenario runners: one run (or a family of runs) plus checks and artifacts.

Each run writes into its output directory:

* ``records.csv``: one diagnostics record per output step
* ``log.jsonl``: structured run log
* ``report.json``: checks and summary values, carrying the config hash
* ``final.bin`` / ``final.json``: final state dump (``failure.*`` on a numerical error)

Reports contain no wall-clock data so identical configs give identical reports.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .. import grid as g
from ..diagnostics import CsvSink, Diagnostics, JsonlSink, inequality_monitor, total_energy
from ..elliptic import harmonic_space, stationarity_test
from ..solver import NumericalError, SolverConfig, run
from .config import ConfigError, Scenario, build, config_hash

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

CHECK_DEFAULTS = {
    "run": {},
    "equilibrium": {"u_ratio": 1e-3, "theta_reduction": 100.0, "window": 5, "rel_tol": 1e-8},
    "blowup": {"growth_factor": 1.2, "rel_tol": 1e-8},
    "absorbing": {"band_width": 0.5, "level_margin": 0.25},
}


@dataclass
class RunResult:
    status: int
    report: dict
    out_dir: str
    records: list = field(default_factory=list)


def report_hash(report: dict) -> str:
    return hashlib.sha256(json.dumps(report, sort_keys=True).encode()).hexdigest()


def _checks(sc: Scenario) -> dict:
    name = sc.config["scenario"]
    merged = dict(CHECK_DEFAULTS[name])
    for k, v in sc.config["checks"].items():
        if k not in merged:
            raise ConfigError("unknown check", f"checks.{k}")
        merged[k] = v
    return merged


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _single_run(sc: Scenario, out_dir: str, basis, theta_scale=1.0, tag="", solver: SolverConfig | None = None,
                lift=None):
    """Run one trajectory; returns ``(records, final_state)``. Raises ``NumericalError``."""
    os.makedirs(out_dir, exist_ok=True)
    suffix = f"_{tag}" if tag else ""
    dg = sc.config["diagnostics"]
    diag = Diagnostics(sc.grid, sc.spec, sc.models, basis, dg["delta"], dg["delta0"], B_B=lift)
    csv_sink = CsvSink(os.path.join(out_dir, f"records{suffix}.csv"))
    jl = JsonlSink(os.path.join(out_dir, f"log{suffix}.jsonl"))
    state0 = sc.initial_state(theta_scale)
    t0 = time.perf_counter()

    def sink(state, n):
        rec = diag(state, n)
        csv_sink.write(rec)
        jl.write({"event": "record", "step": n, "t": rec.t, "E_total": rec.E_total, "S_total": rec.S_total,
                  "divB_max": rec.divB_max, "elapsed_s": round(time.perf_counter() - t0, 3)})
        return rec

    cfg = solver or sc.solver
    jl.write({"event": "start", "scenario": sc.config["scenario"], "tag": tag, "config_hash": config_hash(sc.config)})
    try:
        state, records, n = run(sc.grid, state0, sc.spec, cfg, sc.models, [sink])
    except NumericalError as exc:
        jl.write({"event": "numerical_failure", "message": str(exc)})
        if exc.state is not None:
            g.write_dump(os.path.join(out_dir, f"failure{suffix}"), sc.grid, exc.state, {"error": str(exc)})
        raise
    finally:
        csv_sink.close()
    jl.write({"event": "end", "steps": n, "t": state.t})
    jl.close()
    g.write_dump(os.path.join(out_dir, f"final{suffix}"), sc.grid, state, {"steps": n})
    return records, state, n


def static_balance_residual(sc: Scenario, state) -> float:
    """Relative size of ``grad p - rho grad M`` at interior faces."""
    grid, eos = sc.grid, sc.models.eos
    p = eos._p(state.rho, state.theta)
    M = sc.spec.potential(grid, state.t)
    num = den = 0.0
    for c in range(3):
        sl = [slice(None)] * 3
        lo, hi = list(sl), list(sl)
        lo[c] = slice(None, -1)
        hi[c] = slice(1, None)
        dp = (p[tuple(hi)] - p[tuple(lo)]) / grid.h[c]
        dM = (M[tuple(hi)] - M[tuple(lo)]) / grid.h[c]
        rf = 0.5 * (state.rho[tuple(hi)] + state.rho[tuple(lo)])
        num += float(np.sum((dp - rf * dM) ** 2))
        den += float(np.sum(dp**2) + np.sum((rf * dM) ** 2))
    return math.sqrt(num / den) if den > 0 else 0.0


def _summary(records):
    first, last = records[0], records[-1]
    return {"t_final": last.t, "n_records": len(records),
            "mass_drift_rel": abs(last.mass - first.mass) / abs(first.mass),
            "divB_max": max(r.divB_max for r in records),
            "E_initial": first.E_total, "E_final": last.E_total,
            "S_initial": first.S_total, "S_final": last.S_total}


def _equilibrium(sc, out_dir, basis, chk):
    if sc.spec.time_dependent:
        raise ConfigError("the equilibrium scenario needs time-independent data", "boundary")
    if not sc.spec.thermal_dirichlet:
        raise ConfigError("the equilibrium scenario needs a Dirichlet temperature face", "boundary")
    verdict = stationarity_test(sc.grid, sc.spec, 0.0)
    if not verdict.stationary:
        raise ConfigError("magnetic boundary data are not stationary", "boundary")
    records, state, n = _single_run(sc, out_dir, basis, lift=verdict.witness)
    first, last = records[0], records[-1]
    mon = inequality_monitor(records, window=chk["window"], rel_tol=chk["rel_tol"])
    u_ratio = last.u_l2 / first.u_l2 if first.u_l2 > 0 else 0.0
    th_red = first.theta_dev_l2 / last.theta_dev_l2 if last.theta_dev_l2 > 0 else math.inf
    checks = {
        "u_decay": {"value": u_ratio, "threshold": chk["u_ratio"], "passed": u_ratio < chk["u_ratio"] or first.u_l2 == 0},
        "theta_reduction": {"value": th_red, "threshold": chk["theta_reduction"],
                            "passed": th_red >= chk["theta_reduction"] or first.theta_dev_l2 == 0},
        "ballistic_trend": {"defects": mon["ballistic_defects"], "max_increase": mon.get("ballistic_max_increase"),
                            "passed": mon["ballistic_defects"] == 0},
    }
    extra = {"curlB_initial": first.curlB_l2, "curlB_final": last.curlB_l2,
             "static_balance_residual": static_balance_residual(sc, state), "steps": n, "monitor": mon}
    return checks, extra, [records]


def _blowup(sc, out_dir, basis, chk):
    verdict = stationarity_test(sc.grid, sc.spec, 0.0)
    if verdict.stationary:
        raise ConfigError("magnetic boundary data are stationary; the blow-up scenario needs non-stationary data",
                          "boundary.b_tau")
    if sc.spec.thermal_dirichlet:
        raise ConfigError("the blow-up scenario needs a fully insulated thermal boundary", "boundary")
    records, state, n = _single_run(sc, out_dir, basis)
    mon = inequality_monitor(records, rel_tol=chk["rel_tol"], insulated=True)
    t = np.array([r.t for r in records])
    E = np.array([r.E_total for r in records])
    E_half = float(np.interp(0.5 * t[-1], t, E))
    ratio = E[-1] / E_half
    checks = {
        "entropy_monotone": {"defects": mon["entropy_defects"], "passed": mon["entropy_defects"] == 0},
        "energy_growth": {"value": ratio, "threshold": chk["growth_factor"], "passed": ratio > chk["growth_factor"],
                          "note": "quantitative proxy for unbounded energy growth"},
    }
    extra = {"stationarity": verdict.to_dict(), "energy_curve": {"t": t.tolist(), "E": E.tolist()},
             "steps": n, "monitor": mon}
    return checks, extra, [records]


def theta_scale_for_energy(sc: Scenario, factor: float) -> float:
    """Temperature scale giving ``factor`` times the base initial total energy."""
    if factor == 1.0:
        return 1.0
    base = sc.initial_state(1.0)
    E0 = total_energy(sc.grid, base, sc.models.eos)["total"]

    def f(s):
        st = base.copy()
        st.theta = base.theta * s
        return total_energy(sc.grid, st, sc.models.eos)["total"] - factor * E0

    hi = 2.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise ConfigError(f"cannot reach energy factor {factor}", "initial.energy_factors")
    return brentq(f, 1e-6 if factor < 1 else 1.0, hi, xtol=1e-14, rtol=1e-14)


def _absorbing(sc, out_dir, basis, chk):
    factors = [float(f) for f in sc.config["initial"]["energy_factors"]]
    if len(factors) < 3 or max(factors) / min(factors) < 10:
        raise ConfigError("need at least three factors spanning 10x", "initial.energy_factors")
    runs = []
    for k, fac in enumerate(factors):
        s = theta_scale_for_energy(sc, fac)
        records, state, n = _single_run(sc, out_dir, basis, theta_scale=s, tag=str(k))
        runs.append((fac, s, records, n))
    finals = np.array([r[2][-1].E_total for r in runs])
    width = float((finals.max() - finals.min()) / finals.mean())
    level = float(finals.max() * (1.0 + chk["level_margin"]))
    members = []
    for fac, s, records, n in runs:
        mon = inequality_monitor(records, level=level)
        members.append({"energy_factor": fac, "theta_scale": s, "E_initial": records[0].E_total,
                        "E_final": records[-1].E_total, "entry_time": mon["entry_time"], "steps": n})
    entries = [m["entry_time"] for m in members]
    order = np.argsort([m["E_initial"] for m in members])
    ordered = [entries[i] for i in order]
    monotone = all(e is not None for e in ordered) and all(a <= b for a, b in zip(ordered, ordered[1:]))
    checks = {
        "common_band": {"value": width, "threshold": chk["band_width"], "passed": width < chk["band_width"],
                        "note": "relative terminal band width, a proxy for a common absorbing set"},
        "entry_order": {"entry_times": entries, "passed": monotone},
    }
    extra = {"band_level": level, "members": members}
    return checks, extra, [r[2] for r in runs]


def _generic(sc, out_dir, basis, chk):
    records, state, n = _single_run(sc, out_dir, basis)
    return {}, {"steps": n, "monitor": inequality_monitor(records)}, [records]


_RUNNERS = {"run": _generic, "equilibrium": _equilibrium, "blowup": _blowup, "absorbing": _absorbing}


def run_scenario(cfg: dict, out_dir: str | None = None, dry_run: bool = False) -> RunResult:
    """Build and run a scenario; returns the exit status, report and records.

    Configuration problems raise ``ConfigError``; numerical failures are
    caught and reported with status 3.
    """
    sc = build(cfg)
    chk = _checks(sc)
    out_dir = out_dir or sc.config["output_dir"]
    resolved = sc.config
    if dry_run:
        return RunResult(EXIT_OK, {"resolved_config": resolved, "config_hash": config_hash(resolved)}, out_dir)
    os.makedirs(out_dir, exist_ok=True)
    basis = harmonic_space(sc.grid, sc.spec) if resolved["diagnostics"]["harmonic"] else None
    report = {"scenario": resolved["scenario"], "config_hash": config_hash(resolved),
              "grid": list(sc.grid.shape), "harmonic_dim": basis.dim if basis is not None else None}
    try:
        checks, extra, record_sets = _RUNNERS[resolved["scenario"]](sc, out_dir, basis, chk)
    except NumericalError as exc:
        report.update({"status": "numerical_failure", "error": str(exc), "passed": False})
        _write_json(os.path.join(out_dir, "report.json"), report)
        return RunResult(EXIT_NUMERICAL, report, out_dir)
    report["summary"] = [_summary(r) for r in record_sets]
    report["checks"] = checks
    report.update(extra)
    report["passed"] = all(c["passed"] for c in checks.values())
    report["status"] = "ok"
    report = _jsonable(report)
    _write_json(os.path.join(out_dir, "report.json"), report)
    return RunResult(EXIT_OK, report, out_dir, [r for rs in record_sets for r in rs])
