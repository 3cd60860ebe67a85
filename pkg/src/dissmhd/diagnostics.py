"""Integral functionals along a trajectory and monitors for their inequalities."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from . import grid as g
from .elliptic import ExtensionSet, HarmonicBasis, combined_extension
from .grid import BoundarySpec, FluidState, Grid
from .solver import (Models, _edge_mean_to_cell, apply_boundary_conditions, conduction_production,
                     induction_rhs, ohmic_heating, velocity_gradients, viscous_heating, viscous_stress)
from .thermo import EosModel, TransportModel

log = logging.getLogger(__name__)

RHO_MOMENT_ALPHA = 1.0 / 15.0

__all__ = [
    "DiagnosticsRecord",
    "Diagnostics",
    "total_energy",
    "total_entropy",
    "ballistic_energy",
    "entropy_production",
    "dissipation_norms",
    "harmonic_moments",
    "rho_moment",
    "inequality_monitor",
    "CsvSink",
    "JsonlSink",
    "read_csv",
]


@dataclass
class DiagnosticsRecord:
    """One row of the diagnostics time series.

    ``F_ballistic`` is ``nan`` when no Dirichlet temperature faces exist.
    """

    step: int
    t: float
    mass: float
    E_total: float
    E_kinetic: float
    E_internal: float
    E_magnetic: float
    F_ballistic: float
    F_shifted: float
    S_total: float
    sigma_production: float
    D_u: float
    D_theta_beta: float
    D_log_theta: float
    D_B: float
    rho_moment_high: float
    boundary_heat_flux: float
    u_l2: float
    theta_dev_l2: float
    curlB_l2: float
    divB_max: float
    theta_min: float
    rho_min: float
    h_moments: list = field(default_factory=list)

    def to_row(self) -> dict:
        row = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "h_moments"}
        for i, m in enumerate(self.h_moments, 1):
            row[f"h_moment_{i}"] = m
        return row


def _cell_avg(F):
    return g.face_to_cell(F)


def total_energy(grid: Grid, state: FluidState, eos: EosModel) -> dict:
    """Kinetic, internal and magnetic energy with face-to-centre averaging."""
    uc = _cell_avg(state.u)
    Bc = _cell_avg(state.B)
    kin = 0.5 * state.rho * (uc[0] ** 2 + uc[1] ** 2 + uc[2] ** 2)
    rhoe = eos._rhoe(np.maximum(state.rho, eos.rho_min), state.theta)
    mag = 0.5 * (Bc[0] ** 2 + Bc[1] ** 2 + Bc[2] ** 2)
    k, i, m = (g.volume_integral(grid, x) for x in (kin, rhoe, mag))
    return {"kinetic": k, "internal": i, "magnetic": m, "total": k + i + m}


def total_entropy(grid: Grid, state: FluidState, eos: EosModel) -> float:
    return g.volume_integral(grid, eos._rhos(state.rho, state.theta))


def ballistic_energy(grid: Grid, state: FluidState, ext: ExtensionSet, eos: EosModel,
                     spec: BoundarySpec | None = None) -> tuple[float, float]:
    """``int(E - theta_tilde rho s - B_B . B)`` and the same minus ``int rho M``."""
    if ext.theta_tilde is None:
        raise ValueError("ballistic energy needs a temperature extension")
    if not np.all(ext.theta_tilde > 0):
        raise ValueError("temperature extension is not positive")
    uc = _cell_avg(state.u)
    Bc = _cell_avg(state.B)
    BBc = _cell_avg(ext.B_B)
    E = (0.5 * state.rho * (uc[0] ** 2 + uc[1] ** 2 + uc[2] ** 2)
         + eos._rhoe(np.maximum(state.rho, eos.rho_min), state.theta)
         + 0.5 * (Bc[0] ** 2 + Bc[1] ** 2 + Bc[2] ** 2))
    F = g.volume_integral(grid, E - ext.theta_tilde * eos._rhos(state.rho, state.theta)
                          - (BBc[0] * Bc[0] + BBc[1] * Bc[1] + BBc[2] * Bc[2]))
    if spec is None:
        return F, F
    M = spec.potential(grid, state.t)
    return F, F - g.volume_integral(grid, state.rho * M)


def entropy_production(grid: Grid, state: FluidState, models: Models, spec: BoundarySpec | None = None):
    """Pointwise ``(S:grad u + zeta |curl B|^2)/theta + kappa |grad theta|^2/theta^2`` and its integral."""
    tr = models.transport
    gh = apply_boundary_conditions(grid, state, spec, state.t, models) if spec is not None else None
    ug = gh.u if gh else None
    diag, off = viscous_stress(grid, state.u, state.theta, tr, ug)
    d, w = velocity_gradients(grid, state.u, ug)
    _, _, J = induction_rhs(grid, state.u, state.B, state.theta, tr, gh)
    sigma = (viscous_heating(grid, diag, off, d, w) + ohmic_heating(grid, state.theta, J, tr)) / state.theta
    sigma = sigma + conduction_production(grid, state.theta, tr, gh)
    return sigma, g.volume_integral(grid, sigma)


def _cell_h1(grid: Grid, q) -> float:
    total = float(np.sum(q**2)) * grid.cell_volume
    for a in range(3):
        total += float(np.sum((np.diff(q, axis=a) / grid.h[a]) ** 2)) * grid.cell_volume
    return total


def _face_h1(grid: Grid, F) -> float:
    total = 0.0
    for c in range(3):
        total += float(np.sum(g.face_weights(grid, c) * F[c] ** 2))
        for a in range(3):
            total += float(np.sum((np.diff(F[c], axis=a) / grid.h[a]) ** 2)) * grid.cell_volume
    return total


def dissipation_norms(grid: Grid, state: FluidState, beta: float, theta_floor: float = 1e-8) -> dict:
    """Discrete ``W^{1,2}`` norms of ``u``, ``theta^(beta/2)``, ``log theta`` and ``B``."""
    th = np.maximum(state.theta, theta_floor)
    floored = bool(np.any(state.theta < theta_floor))
    if floored:
        log.warning("temperature floor %.1e active in dissipation norms", theta_floor)
    return {
        "u": math.sqrt(_face_h1(grid, state.u)),
        "theta_beta": math.sqrt(_cell_h1(grid, th ** (0.5 * beta))),
        "log_theta": math.sqrt(_cell_h1(grid, np.log(th))),
        "B": math.sqrt(_face_h1(grid, state.B)),
        "floor_active": floored,
    }


def harmonic_moments(grid: Grid, B, basis: HarmonicBasis | None) -> np.ndarray:
    if basis is None or basis.dim == 0:
        return np.zeros(0)
    return np.array([g.face_inner(grid, B, h) for h in basis.fields])


def rho_moment(grid: Grid, rho, alpha: float = RHO_MOMENT_ALPHA) -> float:
    return g.volume_integral(grid, np.maximum(rho, 0.0) ** (5.0 / 3.0 + alpha))


def _l2_face(grid, F):
    return math.sqrt(sum(float(np.sum(g.face_weights(grid, c) * F[c] ** 2)) for c in range(3)))


class Diagnostics:
    """Callable sink producing a ``DiagnosticsRecord`` from a state.

    Boundary extensions are cached unless the boundary data depend on time.
    ``B_B`` replaces the magnetic lift in the ballistic energy, e.g. by a
    curl-free extension when the data are stationary.
    """

    def __init__(self, grid: Grid, spec: BoundarySpec, models: Models, basis: HarmonicBasis | None = None,
                 delta: float | None = None, delta0: float | None = None, B_B=None):
        self.grid, self.spec, self.models, self.basis = grid, spec, models, basis
        self.delta, self.delta0 = delta, delta0
        self.B_B = B_B
        self._ext = None

    def extensions(self, t: float) -> ExtensionSet:
        if self._ext is None or self.spec.time_dependent:
            ext = combined_extension(self.grid, self.spec, t, self.delta, self.delta0)
            if self.B_B is not None:
                ext = replace(ext, B_N=tuple(self.B_B), B_dD=self.grid.zeros_face())
            self._ext = ext
        return self._ext

    def __call__(self, state: FluidState, step: int = 0) -> DiagnosticsRecord:
        grid, spec, models = self.grid, self.spec, self.models
        eos, tr = models.eos, models.transport
        en = total_energy(grid, state, eos)
        if spec.thermal_dirichlet:
            ext = self.extensions(state.t)
            F, Fs = ballistic_energy(grid, state, ext, eos, spec)
            dev = math.sqrt(g.volume_integral(grid, (state.theta - ext.theta_tilde) ** 2))
        else:
            F = Fs = dev = math.nan
        _, sigma = entropy_production(grid, state, models, spec)
        norms = dissipation_norms(grid, state, tr.beta)
        gh = apply_boundary_conditions(grid, state, spec, state.t, models)
        qb = sum(float(np.sum(gh.heat_out[f])) * grid.face_area(f) for f in g.FACES)
        J = g.curl_face_to_edge(grid, state.B, gh.B)
        curl_l2 = math.sqrt(g.volume_integral(grid, sum(
            _edge_mean_to_cell(J[e] ** 2, e) for e in range(3))))
        return DiagnosticsRecord(
            step=int(step), t=float(state.t), mass=g.volume_integral(grid, state.rho),
            E_total=en["total"], E_kinetic=en["kinetic"], E_internal=en["internal"], E_magnetic=en["magnetic"],
            F_ballistic=F, F_shifted=Fs, S_total=total_entropy(grid, state, eos), sigma_production=sigma,
            D_u=norms["u"], D_theta_beta=norms["theta_beta"], D_log_theta=norms["log_theta"], D_B=norms["B"],
            rho_moment_high=rho_moment(grid, state.rho), boundary_heat_flux=qb,
            u_l2=_l2_face(grid, state.u), theta_dev_l2=dev, curlB_l2=curl_l2,
            divB_max=float(np.max(np.abs(g.div(grid, state.B)))),
            theta_min=float(state.theta.min()), rho_min=float(state.rho.min()),
            h_moments=[float(x) for x in harmonic_moments(grid, state.B, self.basis)],
        )


# ---------------------------------------------------------------------------
# monitors


def _series(records, name):
    out = []
    for r in records:
        v = r[name] if isinstance(r, dict) else getattr(r, name)
        out.append(float(v))
    return np.array(out)


def inequality_monitor(records: Sequence, window: int = 5, level: float | None = None,
                       rel_tol: float = 1e-8, insulated: bool | None = None, key: str = "F_shifted") -> dict:
    """Check the sign of the ballistic energy trend, entropy monotonicity and energy entry.

    ``window`` counts records. A ballistic defect is a windowed increase of
    ``F`` (column ``key``, by default the potential-shifted functional)
    beyond ``rel_tol |F|``; an entropy defect is a decrease of the
    total entropy between consecutive records beyond ``rel_tol |S|``.
    """
    if len(records) < 2:
        raise ValueError("need at least two records")
    t = _series(records, "t")
    E = _series(records, "E_total")
    S = _series(records, "S_total")
    rep = {"n_records": len(records), "window": window}

    try:
        F = _series(records, key)
    except (KeyError, AttributeError):
        F = np.full_like(E, np.nan)
    if np.all(np.isfinite(F)):
        w = max(1, min(window, len(F) - 1))
        inc = F[w:] - F[:-w]
        tol = rel_tol * np.maximum(np.abs(F[w:]), 1.0)
        rep["ballistic_defects"] = int(np.sum(inc > tol))
        rep["ballistic_max_increase"] = float(np.max(inc)) if inc.size else 0.0
    else:
        rep["ballistic_defects"] = None

    dS = np.diff(S)
    defects = dS < -rel_tol * np.abs(S[:-1])
    rep["entropy_defects"] = int(np.sum(defects))
    rep["entropy_min_increment"] = float(dS.min())
    if insulated is not None:
        rep["insulated"] = bool(insulated)

    rep["E_max"] = float(E.max())
    rep["E_min"] = float(E.min())
    half = len(E) // 2
    if len(E) - half >= 2:
        rep["E_trend_slope"] = float(np.polyfit(t[half:], E[half:], 1)[0])
    if level is not None:
        below = E <= level
        entry = None
        for k in range(len(E)):
            if np.all(below[k:]) and len(E) - k >= window:
                entry = float(t[k])
                break
        rep["level"] = float(level)
        rep["entry_time"] = entry
    return rep


# ---------------------------------------------------------------------------
# writers


class CsvSink:
    """Append records to a CSV file; the header is fixed by the first record."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._writer = None

    def write(self, record: DiagnosticsRecord):
        row = record.to_row()
        if self._writer is None:
            self._writer = csv.DictWriter(self._fh, fieldnames=list(row))
            self._writer.writeheader()
        self._writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})
        self._fh.flush()

    def close(self):
        self._fh.close()


class JsonlSink:
    def __init__(self, path):
        self._fh = open(path, "w")

    def write(self, obj):
        if isinstance(obj, DiagnosticsRecord):
            obj = asdict(obj)
        self._fh.write(json.dumps(obj, allow_nan=True, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in r.items()} for r in rows]
