"""Explicit SSP-RK2 integration of the rotating dissipative MHD system.

Density and internal energy density live at cell centres and are advanced
in conservative form with MUSCL/Rusanov face fluxes; velocity is advanced in
advective form on faces; the magnetic field is advanced by constrained
transport from edge electric fields, so ``div B`` is preserved exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import grid as g
from .grid import FACES, BoundarySpec, FluidState, Grid, face_axis, face_side
from .thermo import EosModel, TransportModel, temperature_from_energy

log = logging.getLogger(__name__)

__all__ = [
    "Models",
    "SolverConfig",
    "Ghosts",
    "NumericalError",
    "viscous_stress",
    "viscous_force",
    "heat_flux",
    "lorentz_force",
    "lorentz_force_direct",
    "induction_rhs",
    "apply_boundary_conditions",
    "stable_dt",
    "step",
    "run",
]


class NumericalError(RuntimeError):
    """Unrecoverable failure during time stepping; ``state`` is the last good state."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True)
class Models:
    eos: EosModel = field(default_factory=EosModel)
    transport: TransportModel = field(default_factory=TransportModel)


@dataclass
class SolverConfig:
    cfl: float = 0.4
    t_end: float = 1.0
    dt_max: float = 1e-2
    heating_on: bool = True
    output_every: int = 10
    max_steps: int = 100_000
    limiter: str = "minmod"
    coriolis_tol: float = 1e-14

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")
        if self.limiter not in ("minmod", "none"):
            raise ValueError("limiter must be 'minmod' or 'none'")


# ---------------------------------------------------------------------------
# small stencil helpers


def _sl(axis, s):
    out = [slice(None)] * 3
    out[axis] = s
    return tuple(out)


def _avg(a, axis):
    return 0.5 * (a[_sl(axis, slice(None, -1))] + a[_sl(axis, slice(1, None))])


def _interior(a, axis):
    return a[_sl(axis, slice(1, -1))]


def _with_interior(shape, axis, values):
    out = np.zeros(shape)
    out[_sl(axis, slice(1, -1))] = values
    return out


def _face_avg(F_b, b, c):
    """Four-point average of component ``b`` onto interior ``c``-faces."""
    return _avg(_avg(F_b, b), c)


def _edge_to_face(E_a, a, c):
    """Two-point average of an ``a``-edge quantity onto interior ``c``-faces."""
    b = 3 - a - c
    return _interior(_avg(E_a, b), c)


def _cell_to_edge(q, e):
    """Average a cell field onto ``e``-edges (copy ghosts at the walls)."""
    out = q
    for a in range(3):
        if a == e:
            continue
        out = _avg(g.pad_ghost(out, a), a)
    return out


def _cell_to_face(q, c):
    return _avg(g.pad_ghost(q, c), c)


# ---------------------------------------------------------------------------
# boundary conditions


@dataclass
class Ghosts:
    """Ghost rules and wall values at one time.

    ``u`` and ``B`` map faces to ``(alpha, beta)`` pairs for the tangential
    components (see ``grid.pad_ghost``); ``theta_wall`` and ``heat_out``
    hold wall temperature and outward normal heat flux on each face.
    """

    u: dict
    B: dict
    theta_wall: dict
    heat_out: dict


def _radiative_wall(theta_i, kappa, h, d, theta0, k, face, maxiter=100, tol=1e-13):
    """Wall temperature with ``kappa(tw) 2 (tw - ti)/h + d |tw - t0|^k (tw - t0) = 0``."""
    lo = np.minimum(theta_i, theta0)
    hi = np.maximum(theta_i, theta0)
    tw = 0.5 * (lo + hi)

    def F(x):
        return kappa(x) * 2.0 * (x - theta_i) / h + d * np.abs(x - theta0) ** k * (x - theta0)

    scale = np.abs(F(hi)) + np.abs(F(lo)) + 1e-300
    for _ in range(maxiter):
        f = F(tw)
        lo = np.where(f < 0, tw, lo)
        hi = np.where(f >= 0, tw, hi)
        eps = 1e-7 * np.maximum(np.abs(tw), 1e-3)
        df = (F(tw + eps) - F(tw - eps)) / (2 * eps)
        new = tw - f / np.where(df != 0, df, np.inf)
        new = np.where((new <= lo) | (new >= hi) | ~np.isfinite(new), 0.5 * (lo + hi), new)
        tw, old = new, tw
        if np.all(np.abs(tw - old) <= tol * np.abs(tw)):
            break
    else:
        res = np.abs(F(tw)) / scale
        idx = np.unravel_index(np.argmax(res), res.shape)
        raise NumericalError(f"radiative wall Newton did not converge on face {face} at cell {idx}")
    return tw


def apply_boundary_conditions(grid: Grid, state: FluidState, spec: BoundarySpec, t: float,
                              models: Models) -> Ghosts:
    """Ghost rules for ``u``, ``B`` and the wall heat fluxes at time ``t``."""
    tr = models.transport
    u_gh, b_gh, tw_all, q_all = {}, {}, {}, {}
    for f in FACES:
        bc = spec.faces[f]
        a, side = face_axis(f), face_side(f)
        h = grid.h[a]
        theta_i = state.theta[_sl(a, slice(0, 1) if side == 0 else slice(-1, None))]

        # velocity: normal component is pinned to zero on every wall
        if bc.velocity == "no-slip":
            u_gh[f] = (-1.0, 0.0)
        elif bc.velocity == "slip":
            u_gh[f] = (1.0, 0.0)
        else:
            alphas = {}
            for c in range(3):
                if c == a:
                    continue
                mu = tr.mu(_cell_to_face(theta_i, c))
                alphas[c] = (mu / h - 0.5 * bc.navier_d) / (mu / h + 0.5 * bc.navier_d)
            u_gh[f] = (alphas, 0.0)

        # temperature
        if bc.temperature == "dirichlet":
            tw = spec.eval_theta_B(grid, f, t)
            tw_all[f] = tw
            q_all[f] = -tr.kappa(tw) * 2.0 * (tw - theta_i) / h
        elif bc.temperature == "radiative":
            tw = _radiative_wall(theta_i, tr.kappa, h, bc.rad_d, bc.rad_theta0, bc.rad_k, f)
            tw_all[f] = tw
            q_all[f] = -tr.kappa(tw) * 2.0 * (tw - theta_i) / h
        else:
            tw_all[f] = theta_i
            q_all[f] = np.zeros_like(theta_i)

        # magnetic field
        if bc.magnetic == "tangential":
            beta = {c: 2.0 * spec.tangential_field(grid, f, t, c) for c in range(3) if c != a}
            b_gh[f] = (-1.0, beta)
        else:
            b_gh[f] = (1.0, 0.0)
    return Ghosts(u_gh, b_gh, tw_all, q_all)


def _default_ghosts():
    return Ghosts({}, {}, {}, {})


# ---------------------------------------------------------------------------
# physical terms


def velocity_gradients(grid: Grid, u, u_ghosts=None):
    """Diagonal gradients at cells and symmetric off-diagonal sums at edges.

    Returns ``(d, w)`` with ``d[c] = du_c/dx_c`` (cells) and
    ``w[e] = du_c/dx_a + du_a/dx_c`` on ``e``-edges for ``(c, a)`` the pair
    normal to ``e``.
    """
    d = tuple(np.diff(u[c], axis=c) / grid.h[c] for c in range(3))
    w = []
    for e in range(3):
        c, a = (e + 1) % 3, (e + 2) % 3
        uc = g.padded_component(grid, u[c], c, a, u_ghosts)
        ua = g.padded_component(grid, u[a], a, c, u_ghosts)
        w.append(np.diff(uc, axis=a) / grid.h[a] + np.diff(ua, axis=c) / grid.h[c])
    return d, tuple(w)


def viscous_stress(grid: Grid, u, theta, transport: TransportModel, u_ghosts=None):
    """Stress ``mu (grad u + grad u^T - 2/3 div u I) + eta div u I``.

    Diagonal entries are returned at cell centres, the off-diagonal entry
    ``S[c, a]`` on the edges parallel to the third axis (index ``e``).
    """
    d, w = velocity_gradients(grid, u, u_ghosts)
    divu = d[0] + d[1] + d[2]
    mu = transport.mu(theta)
    eta = transport.eta(theta)
    diag = tuple(mu * (2.0 * d[c] - 2.0 / 3.0 * divu) + eta * divu for c in range(3))
    off = tuple(transport.mu(_cell_to_edge(theta, e)) * w[e] for e in range(3))
    return diag, off


def viscous_force(grid: Grid, diag, off):
    """``div S`` on interior faces (zero on the walls)."""
    out = []
    for c in range(3):
        fc = np.diff(diag[c], axis=c) / grid.h[c]
        for a in range(3):
            if a == c:
                continue
            e = 3 - a - c
            fc = fc + _interior(np.diff(off[e], axis=a) / grid.h[a], c)
        out.append(_with_interior(grid.face_shape(c), c, fc))
    return tuple(out)


def viscous_heating(grid: Grid, diag, off, d, w):
    """``S : grad u`` at cells; each summand is nonnegative."""
    q = sum(diag[c] * d[c] for c in range(3))
    for e in range(3):
        q = q + _edge_mean_to_cell(off[e] * w[e], e)
    return q


def _edge_mean_to_cell(x, e):
    for a in range(3):
        if a != e:
            x = _avg(x, a)
    return x


def heat_flux(grid: Grid, theta, transport: TransportModel, ghosts: Ghosts | None = None):
    """Fourier flux ``-kappa grad theta`` on faces, face-averaged ``kappa``.

    Wall faces carry the outward flux from ``ghosts`` (zero if absent).
    """
    kap = transport.kappa(theta)
    out = []
    for c in range(3):
        q = np.zeros(grid.face_shape(c))
        q[_sl(c, slice(1, -1))] = -_avg(kap, c) * np.diff(theta, axis=c) / grid.h[c]
        if ghosts is not None:
            for side, f in ((0, FACES[2 * c]), (1, FACES[2 * c + 1])):
                if f in ghosts.heat_out:
                    qo = ghosts.heat_out[f]
                    q[_sl(c, slice(0, 1) if side == 0 else slice(-1, None))] = -qo if side == 0 else qo
        out.append(q)
    return tuple(out)


def conduction_production(grid: Grid, theta, transport: TransportModel, ghosts: Ghosts | None = None):
    """``kappa |grad theta|^2 / theta^2`` at cells from face contributions.

    Interior faces use ``kappa_f g^2 / (theta_L theta_R)``; wall faces use the
    wall temperature. Every contribution is nonnegative.
    """
    kap = transport.kappa(theta)
    out = np.zeros(grid.shape)
    for c in range(3):
        h = grid.h[c]
        gr = np.diff(theta, axis=c) / h
        tl = theta[_sl(c, slice(None, -1))]
        tr_ = theta[_sl(c, slice(1, None))]
        face = _avg(kap, c) * gr**2 / (tl * tr_)
        # each face shared by two cells, half to each
        out[_sl(c, slice(None, -1))] += 0.5 * face
        out[_sl(c, slice(1, None))] += 0.5 * face
        if ghosts is None:
            continue
        for side, f in ((0, FACES[2 * c]), (1, FACES[2 * c + 1])):
            if f not in ghosts.heat_out:
                continue
            tw = ghosts.theta_wall[f]
            ti = theta[_sl(c, slice(0, 1) if side == 0 else slice(-1, None))]
            gw = 2.0 * (tw - ti) / h
            kw = transport.kappa(tw)
            out[_sl(c, slice(0, 1) if side == 0 else slice(-1, None))] += 0.5 * kw * gw**2 / (tw * ti)
    return out


def lorentz_force(grid: Grid, B, b_ghosts=None):
    """Divergence of the Maxwell stress ``B B - |B|^2/2 I`` on interior faces."""
    Bc = g.face_to_cell(B)
    mag = 0.5 * (Bc[0] ** 2 + Bc[1] ** 2 + Bc[2] ** 2)
    edges = g.face_to_edge(grid, B, b_ghosts)
    out = []
    for c in range(3):
        fc = np.diff(Bc[c] ** 2 - mag, axis=c) / grid.h[c]
        for a in range(3):
            if a == c:
                continue
            e = 3 - a - c
            T = edges[(c, e)] * edges[(a, e)]
            fc = fc + _interior(np.diff(T, axis=a) / grid.h[a], c)
        out.append(_with_interior(grid.face_shape(c), c, fc))
    return tuple(out)


def lorentz_force_direct(grid: Grid, B, b_ghosts=None):
    """``curl B x B`` on interior faces, edge currents averaged to faces."""
    J = g.curl_face_to_edge(grid, B, b_ghosts)
    out = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        fc = _edge_to_face(J[a], a, c) * _face_avg(B[b], b, c) - _edge_to_face(J[b], b, c) * _face_avg(B[a], a, c)
        out.append(_with_interior(grid.face_shape(c), c, fc))
    return tuple(out)


def _edge_velocity(grid, u, u_ghosts):
    return g.face_to_edge(grid, u, u_ghosts)


def induction_rhs(grid: Grid, u, B, theta, transport: TransportModel, ghosts: Ghosts | None = None,
                  neumann_faces: Sequence[str] = ()):
    """Edge electric field ``E = B x u + zeta curl B`` and ``dB/dt = -curl E``.

    ``E`` is zeroed on edges lying in the ``neumann_faces`` planes, which
    freezes the normal field there.
    """
    gh = ghosts or _default_ghosts()
    J = g.curl_face_to_edge(grid, B, gh.B)
    Be = g.face_to_edge(grid, B, gh.B)
    ue = g.face_to_edge(grid, u, gh.u)
    E = []
    for e in range(3):
        a, b = (e + 1) % 3, (e + 2) % 3
        Ee = Be[(a, e)] * ue[(b, e)] - Be[(b, e)] * ue[(a, e)]
        Ee = Ee + transport.zeta(_cell_to_edge(theta, e)) * J[e]
        for f in neumann_faces:
            n = face_axis(f)
            if n != e:
                Ee[_sl(n, slice(0, 1) if face_side(f) == 0 else slice(-1, None))] = 0.0
        E.append(Ee)
    E = tuple(E)
    dB = tuple(-x for x in g.curl_edge_to_face(grid, E))
    return E, dB, J


def ohmic_heating(grid: Grid, theta, J, transport: TransportModel):
    """``zeta |curl B|^2`` at cells from edge values."""
    return sum(_edge_mean_to_cell(transport.zeta(_cell_to_edge(theta, e)) * J[e] ** 2, e) for e in range(3))


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def advective_flux(grid: Grid, q, u, limiter="minmod"):
    """Upwind (Rusanov with ``|u_f|``) flux of a cell quantity; zero on walls."""
    out = []
    for c in range(3):
        dq = np.diff(q, axis=c)
        if limiter == "minmod":
            s = np.zeros_like(q)
            s[_sl(c, slice(1, -1))] = _minmod(dq[_sl(c, slice(None, -1))], dq[_sl(c, slice(1, None))])
        else:
            s = np.zeros_like(q)
        qL = (q + 0.5 * s)[_sl(c, slice(None, -1))]
        qR = (q - 0.5 * s)[_sl(c, slice(1, None))]
        uf = _interior(u[c], c)
        flux = 0.5 * uf * (qL + qR) - 0.5 * np.abs(uf) * (qR - qL)
        out.append(_with_interior(grid.face_shape(c), c, flux))
    return tuple(out)


def velocity_advection(grid: Grid, u, u_ghosts=None):
    """Centred ``(u . grad) u`` on interior faces."""
    out = []
    for c in range(3):
        h = grid.h[c]
        uc = u[c]
        adv = _interior(uc, c) * (uc[_sl(c, slice(2, None))] - uc[_sl(c, slice(None, -2))]) / (2 * h)
        for a in range(3):
            if a == c:
                continue
            ua = _face_avg(u[a], a, c)
            p = g.padded_component(grid, uc, c, a, u_ghosts)
            du = (p[_sl(a, slice(2, None))] - p[_sl(a, slice(None, -2))]) / (2 * grid.h[a])
            adv = adv + ua * _interior(du, c)
        out.append(_with_interior(grid.face_shape(c), c, adv))
    return tuple(out)


def coriolis(grid: Grid, u, omega):
    """``omega x u`` on interior faces; skew-symmetric in the face sum."""
    out = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        v = omega[a] * _face_avg(u[b], b, c) - omega[b] * _face_avg(u[a], a, c)
        out.append(_with_interior(grid.face_shape(c), c, v))
    return tuple(out)


def rotate(grid: Grid, u, omega, dt, tol=1e-14, maxiter=100):
    """Midpoint (Cayley) step of ``du/dt = -omega x u`` by fixed-point iteration."""
    if not any(omega):
        return u
    new = tuple(x.copy() for x in u)
    for _ in range(maxiter):
        mid = tuple(0.5 * (x + y) for x, y in zip(u, new))
        r = coriolis(grid, mid, omega)
        nxt = tuple(x - dt * y for x, y in zip(u, r))
        delta = max(float(np.max(np.abs(x - y))) for x, y in zip(nxt, new))
        new = nxt
        if delta <= tol * (1.0 + max(float(np.max(np.abs(x))) for x in u)):
            return new
    raise NumericalError("Coriolis midpoint iteration did not converge")


# ---------------------------------------------------------------------------
# time stepping


@dataclass
class _Terms:
    drho: np.ndarray
    drhoe: np.ndarray
    du: tuple
    dB: tuple


def _rhs(grid: Grid, spec: BoundarySpec, models: Models, config: SolverConfig, t: float,
         state: FluidState, rhoe, first_order=False) -> _Terms:
    eos, tr = models.eos, models.transport
    rho, theta, u, B = state.rho, state.theta, state.u, state.B
    gh = apply_boundary_conditions(grid, state, spec, t, models)
    limiter = "none" if first_order else config.limiter

    frho = advective_flux(grid, rho, u, limiter)
    drho = -g.div(grid, frho)

    fe = advective_flux(grid, rhoe, u, limiter)
    q = heat_flux(grid, theta, tr, gh)
    p = eos._p(np.maximum(rho, eos.rho_min), theta)
    d, w = velocity_gradients(grid, u, gh.u)
    divu = d[0] + d[1] + d[2]
    drhoe = -g.div(grid, fe) - g.div(grid, q) - p * divu

    diag, off = viscous_stress(grid, u, theta, tr, gh.u)
    E, dB, J = induction_rhs(grid, u, B, theta, tr, gh, spec.magnetic_neumann)
    if config.heating_on:
        drhoe = drhoe + viscous_heating(grid, diag, off, d, w) + ohmic_heating(grid, theta, J, tr)

    vis = viscous_force(grid, diag, off)
    lor = lorentz_force(grid, B, gh.B)
    adv = velocity_advection(grid, u, gh.u)
    M = spec.potential(grid, t)
    du = []
    for c in range(3):
        rf = _avg(rho, c)
        rf = np.maximum(rf, eos.rho_min)
        gp = np.diff(p, axis=c) / grid.h[c]
        gM = np.diff(M, axis=c) / grid.h[c]
        acc = (-gp + _interior(vis[c], c) + _interior(lor[c], c)) / rf + gM - _interior(adv[c], c)
        du.append(_with_interior(grid.face_shape(c), c, acc))
    return _Terms(drho, drhoe, tuple(du), dB)


def _advance(grid, state, rhoe, terms: _Terms, dt, eos):
    rho = state.rho + dt * terms.drho
    rhoe_new = rhoe + dt * terms.drhoe
    u = tuple(x + dt * y for x, y in zip(state.u, terms.du))
    B = tuple(x + dt * y for x, y in zip(state.B, terms.dB))
    return rho, rhoe_new, u, B


def _stage(grid, spec, models, config, t, state, rhoe, dt):
    """Forward-Euler stage with the positivity fallback."""
    eos = models.eos
    for first_order in (False, True):
        terms = _rhs(grid, spec, models, config, t, state, rhoe, first_order)
        rho, rhoe_n, u, B = _advance(grid, state, rhoe, terms, dt, eos)
        if np.any(rho < 0):
            continue
        theta = temperature_from_energy(rho, rhoe_n, eos, guess=state.theta)
        if np.all(np.isfinite(theta)) and np.all(theta > 0):
            if first_order:
                log.debug("positivity limiter engaged at t=%.6g", t)
            return FluidState(t + dt, rho, theta, u, B), rhoe_n
    raise NumericalError(f"nonpositive temperature or density after limiting at t={t:.6g}", state)


def step(grid: Grid, state: FluidState, spec: BoundarySpec, config: SolverConfig, models: Models,
         dt: float) -> FluidState:
    """One SSP-RK2 step followed by the Coriolis rotation."""
    eos = models.eos
    t = state.t
    rhoe0 = eos._rhoe(np.maximum(state.rho, eos.rho_min), state.theta)
    s1, rhoe1 = _stage(grid, spec, models, config, t, state, rhoe0, dt)
    s2, rhoe2 = _stage(grid, spec, models, config, t + dt, s1, rhoe1, dt)
    rho = 0.5 * (state.rho + s2.rho)
    rhoe = 0.5 * (rhoe0 + rhoe2)
    u = tuple(0.5 * (a + b) for a, b in zip(state.u, s2.u))
    B = tuple(0.5 * (a + b) for a, b in zip(state.B, s2.B))
    theta = temperature_from_energy(rho, rhoe, eos, guess=s2.theta)
    if not np.all(np.isfinite(theta)) or np.any(rho < 0):
        raise NumericalError(f"nonpositive temperature or density at t={t + dt:.6g}", state)
    u = rotate(grid, u, spec.omega, dt, config.coriolis_tol)
    for arr in (rho, theta, *u, *B):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite values at t={t + dt:.6g}", state)
    return FluidState(t + dt, rho, theta, u, B)


def stable_dt(grid: Grid, state: FluidState, models: Models, config: SolverConfig,
              spec: BoundarySpec | None = None) -> float:
    """CFL-limited step from advection, fast magnetosonic and diffusion limits."""
    eos, tr = models.eos, models.transport
    rho = np.maximum(state.rho, eos.rho_min)
    theta = state.theta
    Bc = g.face_to_cell(state.B)
    uc = g.face_to_cell(state.u)
    b2 = Bc[0] ** 2 + Bc[1] ** 2 + Bc[2] ** 2
    cf = np.sqrt(eos.sound_speed_sq(rho, theta) + b2 / rho)
    inv_h2 = sum(1.0 / h**2 for h in grid.h)
    adv = sum((np.abs(uc[c]) + cf) / grid.h[c] for c in range(3))
    nu = (4.0 / 3.0 * tr.mu(theta) + tr.eta(theta)) / rho
    chi = tr.kappa(theta) / eos._drhoe_dtheta(rho, theta)
    zeta = tr.zeta(theta)
    rate = np.maximum.reduce([adv, 2.0 * nu * inv_h2, 2.0 * chi * inv_h2, 2.0 * zeta * inv_h2])
    rmax = float(np.max(rate))
    if not math.isfinite(rmax):
        raise NumericalError("non-finite wave speed or diffusivity", state)
    dt = config.cfl / rmax if rmax > 0 else math.inf
    if spec is not None:
        wn = float(np.linalg.norm(spec.omega))
        if wn > 0:
            dt = min(dt, 0.5 / wn)
    return min(dt, config.dt_max)


def run(grid: Grid, state: FluidState, spec: BoundarySpec, config: SolverConfig, models: Models,
        sinks: Sequence[Callable] = (), start_step: int = 0):
    """Advance to ``config.t_end`` (or ``max_steps``), calling sinks at output times.

    Each sink is called as ``sink(state, step)`` at the start, every
    ``output_every`` steps and at the end; non-``None`` return values are
    collected and returned alongside the final state.
    """
    records = []

    def emit(s, n):
        for sink in sinks:
            r = sink(s, n)
            if r is not None:
                records.append(r)

    n = start_step
    emit(state, n)
    last_emitted = n
    while state.t < config.t_end and n < config.max_steps:
        dt = stable_dt(grid, state, models, config, spec)
        remaining = config.t_end - state.t
        if dt >= remaining:
            dt = remaining
        state = step(grid, state, spec, config, models, dt)
        if dt == remaining:
            state.t = config.t_end
        n += 1
        if n % config.output_every == 0:
            emit(state, n)
            last_emitted = n
    if last_emitted != n:
        emit(state, n)
    return state, records, n
