"""Scenario configuration: JSON schema with defaults, validation and builders.

A config is a JSON object; every block is optional and merged onto
``DEFAULTS``. Unknown keys are rejected. Boundary and initial data are
expression strings (see ``expr``). Example::

    {"scenario": "equilibrium",
     "grid": {"cells": [16, 16, 16]},
     "boundary": {"theta_B": {"*": "1.0"}, "wall_field": ["0", "0", "1"],
                  "G": "-0.5*z"},
     "solver": {"t_end": 2.0}}
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.optimize import brentq

from ..grid import FACES, BoundarySpec, FaceBC, FluidState, Grid, face_normal, validate_boundary_spec
from ..solver import Models, SolverConfig
from ..thermo import EosModel, TransportModel
from .expr import ExprError, compile_expr

__all__ = ["ConfigError", "DEFAULTS", "load_config", "resolve", "config_hash", "Scenario", "build"]

SCENARIOS = ("run", "equilibrium", "blowup", "absorbing")

DEFAULTS: dict[str, Any] = {
    "scenario": "run",
    "seed": 0,
    "output_dir": "mhd-out",
    "grid": {"cells": [16, 16, 16], "lengths": [1.0, 1.0, 1.0], "origin": [0.0, 0.0, 0.0]},
    "models": {
        "eos": {"a": 1.0, "structural": "degenerate", "rho_min": 1e-8},
        "transport": {"mu0": 1.0, "eta0": 0.0, "kappa0": 1.0, "zeta0": 1.0, "beta": 6.5},
    },
    "boundary": {
        "default": {"velocity": "no-slip", "temperature": "dirichlet", "magnetic": "tangential",
                    "navier_d": 0.0, "rad_d": 0.0, "rad_theta0": 1.0, "rad_k": 0.0},
        "faces": {},
        "theta_B": {},
        "b_tau": {},
        "b_nu": {},
        "wall_field": None,
        "G": None,
        "omega": [0.0, 0.0, 0.0],
        "m0": None,
    },
    "initial": {"rho": 1.0, "theta": 1.0, "u": [0.0, 0.0, 0.0], "u_noise": 0.0, "B": "extension",
                "energy_factors": [1.0, 3.0, 10.0]},
    "solver": {"cfl": 0.4, "t_end": 1.0, "dt_max": 0.01, "heating_on": True, "output_every": 10,
               "max_steps": 100000, "limiter": "minmod"},
    "diagnostics": {"delta": None, "delta0": None, "window": 5, "harmonic": True, "level": None},
    "checks": {},
}

# blocks whose keys are free-form (face names or check names)
_OPEN = {("boundary", "faces"), ("boundary", "theta_B"), ("boundary", "b_tau"), ("boundary", "b_nu"),
         ("checks",)}
_FACE_KEYS = set(DEFAULTS["boundary"]["default"])


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the offending field or line."""

    def __init__(self, msg, where=""):
        super().__init__(f"{where}: {msg}" if where else msg)
        self.where = where


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None


def _merge(base, over, path=()):
    if not isinstance(over, dict):
        raise ConfigError("expected an object", ".".join(path))
    out = copy.deepcopy(base)
    for k, v in over.items():
        p = path + (k,)
        if path in _OPEN or p in _OPEN and not isinstance(base.get(k), dict):
            out[k] = copy.deepcopy(v)
            continue
        if k not in base:
            raise ConfigError("unknown key", ".".join(p))
        if isinstance(base[k], dict) and p not in _OPEN:
            out[k] = _merge(base[k], v, p)
        elif p in _OPEN:
            if not isinstance(v, dict):
                raise ConfigError("expected an object", ".".join(p))
            out[k] = copy.deepcopy(v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(cfg: dict) -> dict:
    """Merge onto the defaults and validate; returns a new dict."""
    r = _merge(DEFAULTS, cfg)
    if r["scenario"] not in SCENARIOS:
        raise ConfigError(f"must be one of {SCENARIOS}", "scenario")
    cells = r["grid"]["cells"]
    if isinstance(cells, int):
        cells = r["grid"]["cells"] = [cells] * 3
    if len(cells) != 3 or any(int(n) != n or n < 2 or n > 64 for n in cells):
        raise ConfigError("need three integers in [2, 64]", "grid.cells")
    if len(r["grid"]["lengths"]) != 3 or min(r["grid"]["lengths"]) <= 0:
        raise ConfigError("need three positive lengths", "grid.lengths")
    for f, tags in r["boundary"]["faces"].items():
        if f not in FACES:
            raise ConfigError(f"unknown face {f!r}", "boundary.faces")
        for k in tags:
            if k not in _FACE_KEYS:
                raise ConfigError("unknown key", f"boundary.faces.{f}.{k}")
    for key in ("theta_B", "b_nu"):
        for f in r["boundary"][key]:
            if f != "*" and f not in FACES:
                raise ConfigError(f"unknown face {f!r}", f"boundary.{key}")
    for f, v in r["boundary"]["b_tau"].items():
        if f != "*" and f not in FACES:
            raise ConfigError(f"unknown face {f!r}", "boundary.b_tau")
        if not isinstance(v, list) or len(v) != 3:
            raise ConfigError("need a list of three expressions", f"boundary.b_tau.{f}")
    try:
        SolverConfig(**r["solver"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "solver") from None
    return r


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()


@dataclass
class Scenario:
    config: dict
    grid: Grid
    spec: BoundarySpec
    models: Models
    solver: SolverConfig

    def initial_state(self, theta_scale: float = 1.0) -> FluidState:
        return initial_state(self, theta_scale)


def _expr(src, where):
    try:
        return compile_expr(src)
    except ExprError as exc:
        raise ConfigError(str(exc), where) from None


def _uses_t(src) -> bool:
    return isinstance(src, str) and "t" in _names(src)


def _names(src):
    import ast
    try:
        return {n.id for n in ast.walk(ast.parse(src, mode="eval")) if isinstance(n, ast.Name)}
    except SyntaxError:
        return set()


def _per_face(block, faces):
    out = {}
    for f in faces:
        if f in block:
            out[f] = block[f]
        elif "*" in block:
            out[f] = block["*"]
    return out


def build_spec(r: dict) -> BoundarySpec:
    b = r["boundary"]
    faces = {}
    for f in FACES:
        tags = dict(b["default"])
        tags.update(b["faces"].get(f, {}))
        faces[f] = FaceBC(**tags)
    time_dep = False
    theta_src = _per_face(b["theta_B"], FACES)
    theta_B = {f: _expr(v, f"boundary.theta_B.{f}") for f, v in theta_src.items()}
    time_dep |= any(_uses_t(v) for v in theta_src.values())

    wall = b["wall_field"]
    wall_fns = None
    if wall is not None:
        if not isinstance(wall, list) or len(wall) != 3:
            raise ConfigError("need a list of three expressions", "boundary.wall_field")
        wall_fns = [_expr(v, f"boundary.wall_field[{i}]") for i, v in enumerate(wall)]
        time_dep |= any(_uses_t(v) for v in wall)

    b_tau = {}
    tau_src = _per_face(b["b_tau"], FACES)
    for f in FACES:
        if faces[f].magnetic != "tangential":
            continue
        if f in tau_src:
            fns = [_expr(v, f"boundary.b_tau.{f}[{i}]") for i, v in enumerate(tau_src[f])]
            time_dep |= any(_uses_t(v) for v in tau_src[f])
            b_tau[f] = _vector(fns)
        elif wall_fns is not None:
            b_tau[f] = _cross_n(wall_fns, face_normal(f))
    b_nu = {}
    nu_src = _per_face(b["b_nu"], FACES)
    for f in FACES:
        if faces[f].magnetic != "normal":
            continue
        if f in nu_src:
            b_nu[f] = _expr(nu_src[f], f"boundary.b_nu.{f}")
            time_dep |= _uses_t(nu_src[f])
        elif wall_fns is not None:
            b_nu[f] = _dot_n(wall_fns, face_normal(f))
    G = _expr(b["G"], "boundary.G") if b["G"] is not None else None
    time_dep |= _uses_t(b["G"])
    omega = tuple(float(w) for w in b["omega"])
    if len(omega) != 3:
        raise ConfigError("need three components", "boundary.omega")
    return BoundarySpec(faces=faces, theta_B=theta_B, b_tau=b_tau, b_nu=b_nu, G=G, omega=omega,
                        m0=b["m0"], time_dependent=time_dep)


def _vector(fns):
    def f(t, x, y, z):
        return tuple(fn(t, x, y, z) for fn in fns)
    return f


def _cross_n(fns, n):
    def f(t, x, y, z):
        w = np.broadcast_arrays(*(fn(t, x, y, z) for fn in fns))
        return (w[1] * n[2] - w[2] * n[1], w[2] * n[0] - w[0] * n[2], w[0] * n[1] - w[1] * n[0])
    return f


def _dot_n(fns, n):
    def f(t, x, y, z):
        return sum(fn(t, x, y, z) * ni for fn, ni in zip(fns, n))
    return f


def build(cfg: dict) -> Scenario:
    """Resolve a raw config and construct grid, boundary spec, models and solver settings."""
    r = resolve(cfg)
    gb = r["grid"]
    grid = Grid(tuple(gb["cells"]), tuple(gb["lengths"]), tuple(gb["origin"]))
    try:
        eos = EosModel(**r["models"]["eos"])
        tr = TransportModel(**r["models"]["transport"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "models") from None
    spec = build_spec(r)
    _check_initial(r["initial"])
    rep = validate_boundary_spec(spec, grid)
    if not rep["passed"]:
        raise ConfigError("; ".join(rep["violations"]), "boundary")
    return Scenario(r, grid, spec, Models(eos, tr), SolverConfig(**r["solver"]))


def _check_initial(ini):
    """Compile the initial-data expressions so mistakes surface before any run."""
    _expr(ini["theta"], "initial.theta")
    if ini["rho"] != "hydrostatic":
        _expr(ini["rho"], "initial.rho")
    if not isinstance(ini["u"], list) or len(ini["u"]) != 3:
        raise ConfigError("need three expressions", "initial.u")
    for c, src in enumerate(ini["u"]):
        _expr(src, f"initial.u[{c}]")
    B = ini["B"]
    if not (B in ("extension", "potential", "zero")
            or (isinstance(B, list) and len(B) == 3 and all(isinstance(b, (int, float)) for b in B))):
        raise ConfigError("must be 'extension', 'potential', 'zero' or three constants", "initial.B")


def hydrostatic_density(grid: Grid, spec: BoundarySpec, eos: EosModel, theta: float, mass: float,
                        n_table: int = 20001):
    """Density with ``grad p(rho, theta) = rho grad M`` at a uniform temperature and given mass.

    Uses the enthalpy ``H(rho) = int p_rho / rho``: ``H(rho) = M + c`` with
    ``c`` fixed by the mass constraint.
    """
    M = spec.potential(grid, 0.0)
    r = np.geomspace(1e-6, 1e6, n_table)
    dH = eos._dp_drho(r, theta) / r
    H = np.concatenate([[0.0], np.cumsum(0.5 * (dH[1:] + dH[:-1]) * np.diff(r))])

    def rho_of(c):
        return np.interp(M + c, H, r)

    def excess(c):
        return float(rho_of(c).sum()) * grid.cell_volume - mass

    lo, hi = H[0] - M.min(), H[-1] - M.max()
    if excess(lo) > 0 or excess(hi) < 0:
        raise ConfigError("no hydrostatic density with the requested mass", "initial.rho")
    c = brentq(excess, lo, hi, xtol=1e-15, rtol=1e-15)
    return rho_of(c)


def potential_field(sc: Scenario):
    """Curl- and divergence-free field with the magnetic data; needs stationary data."""
    from ..elliptic import stationarity_test

    v = stationarity_test(sc.grid, sc.spec, 0.0)
    if not v.stationary:
        raise ConfigError("magnetic data are not stationary, no potential field exists", "initial.B")
    return v.witness


def initial_state(sc: Scenario, theta_scale: float = 1.0) -> FluidState:
    """Sample the initial data; ``theta_scale`` multiplies the initial temperature."""
    from ..elliptic import combined_extension

    r, grid = sc.config, sc.grid
    ini = r["initial"]
    X, Y, Z = grid.cell_centers()
    shape = grid.shape
    theta = theta_scale * np.broadcast_to(_expr(ini["theta"], "initial.theta")(0.0, X, Y, Z), shape).astype(float)
    if ini["rho"] == "hydrostatic":
        rho = hydrostatic_density(grid, sc.spec, sc.models.eos, float(theta.mean()),
                                  sc.spec.m0 if sc.spec.m0 is not None else grid.volume)
    else:
        rho = np.broadcast_to(_expr(ini["rho"], "initial.rho")(0.0, X, Y, Z), shape).astype(float)
    if not np.all(rho > 0) or not np.all(theta > 0):
        raise ConfigError("initial density and temperature must be positive", "initial")
    m0 = sc.spec.m0
    if m0 is not None:
        rho = rho * (m0 / (rho.sum() * grid.cell_volume))
    if len(ini["u"]) != 3:
        raise ConfigError("need three expressions", "initial.u")
    u = []
    rng = np.random.default_rng(r["seed"])
    for c in range(3):
        Xc, Yc, Zc = grid.face_centers(c)
        uc = np.broadcast_to(_expr(ini["u"][c], f"initial.u[{c}]")(0.0, Xc, Yc, Zc), grid.face_shape(c)).astype(float)
        if ini["u_noise"]:
            uc = uc + ini["u_noise"] * rng.standard_normal(uc.shape)
        idx = [slice(None)] * 3
        idx[c] = 0
        uc[tuple(idx)] = 0.0
        idx[c] = -1
        uc[tuple(idx)] = 0.0
        u.append(uc)
    Bspec = ini["B"]
    if Bspec == "extension":
        dg = r["diagnostics"]
        B = combined_extension(grid, sc.spec, 0.0, dg["delta"], dg["delta0"]).B_B
    elif Bspec == "potential":
        B = potential_field(sc)
    elif Bspec == "zero":
        B = grid.zeros_face()
    elif isinstance(Bspec, list) and len(Bspec) == 3:
        B = tuple(np.full(grid.face_shape(c), float(Bspec[c])) for c in range(3))
    else:
        raise ConfigError("must be 'extension', 'potential', 'zero' or three constants", "initial.B")
    return FluidState(0.0, rho, theta, tuple(u), tuple(np.array(b, dtype=float) for b in B))
