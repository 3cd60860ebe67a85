"""Equation of state and transport coefficients.

The gas part of the constitutive closure is parametrised by a single
structural function ``P`` of ``Z = rho / theta**1.5``::

    p(rho, theta) = theta**2.5 * P(Z) + a/3 * theta**4
    e(rho, theta) = 1.5 * theta**2.5 / rho * P(Z) + a * theta**4 / rho
    s(rho, theta) = S(Z) + 4a/3 * theta**3 / rho

with ``S'(Z) = -1.5 * (5/3 P(Z) - P'(Z) Z) / Z**2`` and ``S(inf) = 0``.
``S`` is tabulated once by quadrature and interpolated with a cubic Hermite
spline in ``log Z`` that uses the exact slopes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

__all__ = [
    "DomainError",
    "EosModel",
    "TransportModel",
    "pressure",
    "internal_energy",
    "entropy",
    "gibbs_residual",
    "hypothesis_report",
    "temperature_from_energy",
]


class DomainError(ValueError):
    """Raised when a thermodynamic quantity is requested outside its domain."""


def _degenerate_P(z):
    z = np.asarray(z, dtype=float)
    return z * (1.0 + z) ** (2.0 / 3.0)


def _degenerate_dP(z):
    z = np.asarray(z, dtype=float)
    return (1.0 + z) ** (2.0 / 3.0) + (2.0 / 3.0) * z * (1.0 + z) ** (-1.0 / 3.0)


def _degenerate_defect(z):
    # 5/3 P - P' Z, written without cancellation
    z = np.asarray(z, dtype=float)
    return (2.0 / 3.0) * z * (1.0 + z) ** (-1.0 / 3.0)


def _ideal_P(z):
    return np.asarray(z, dtype=float) * 1.0


def _ideal_dP(z):
    return np.ones_like(np.asarray(z, dtype=float))


def _ideal_defect(z):
    return (2.0 / 3.0) * np.asarray(z, dtype=float)


_STRUCTURAL = {
    "degenerate": (_degenerate_P, _degenerate_dP, _degenerate_defect, 1.0),
    "ideal": (_ideal_P, _ideal_dP, _ideal_defect, 0.0),
}

# 8-point Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class _EntropyTable:
    """Tabulated S(Z) with analytic asymptotes outside [z_min, z_max]."""

    def __init__(self, defect, z_min=1e-6, z_max=1e6, nodes=4001):
        self._dS = lambda z: -1.5 * defect(z) / z**2
        lz = np.linspace(math.log(z_min), math.log(z_max), nodes)
        z = np.exp(lz)
        # dS/dlnZ on quadrature points of every interval
        a, b = lz[:-1], lz[1:]
        pts = a[:, None] + (b - a)[:, None] * _GL_X[None, :]
        zp = np.exp(pts)
        dlog = zp * self._dS(zp)
        incr = ((b - a)[:, None] * _GL_W[None, :] * dlog).sum(axis=1)
        # decay exponent of -Z S'(Z) in log Z; integrable tail iff negative
        zt = np.array([z_max, 10.0 * z_max])
        gt = -zt * self._dS(zt)
        self.decay = float(np.log(gt[1] / gt[0]) / np.log(10.0)) if np.all(gt > 0) else 0.0
        if self.decay < -1e-3:
            u0 = math.log(z_max)
            u1 = u0 + min(40.0 / -self.decay, 600.0)  # neglected remainder ~ exp(-40)
            tail, _ = integrate.quad(lambda u: -math.exp(u) * float(self._dS(np.array(math.exp(u)))),
                                     u0, u1, epsabs=1e-15, epsrel=1e-13, limit=400)
        else:
            tail = 0.0
        S = np.empty(nodes)
        S[-1] = tail
        S[:-1] = tail - np.cumsum(incr[::-1])[::-1]
        slopes = z * self._dS(z)
        self.z_min, self.z_max = z_min, z_max
        self.values = S
        self._spline = CubicHermiteSpline(lz, S, slopes)
        self._lo_slope = -slopes[0]
        self._tail_exp = slopes[-1] / S[-1] if S[-1] > 0 else self.decay

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        lo = z < self.z_min
        hi = z > self.z_max
        mid = ~(lo | hi)
        out[mid] = self._spline(np.log(z[mid]))
        out[lo] = self.values[0] + self._lo_slope * np.log(self.z_min / z[lo])
        out[hi] = self.values[-1] * (z[hi] / self.z_max) ** self._tail_exp
        return out

    def derivative(self, z):
        return self._dS(np.asarray(z, dtype=float))

    @property
    def tail_exponent(self):
        return self._tail_exp


@dataclass(frozen=True, eq=False)
class EosModel:
    """Constitutive closure with a radiation component.

    Args:
        a: radiation constant, ``a > 0``.
        structural: name of a built-in structural function (``"degenerate"``
            for ``Z (1+Z)^(2/3)`` or ``"ideal"`` for ``Z``), ignored when
            ``P`` and ``dP`` are supplied.
        P, dP: structural function and its derivative.
        defect: optional ``Z -> 5/3 P(Z) - P'(Z) Z`` evaluated without
            cancellation; defaults to the literal formula.
        p_inf: limit of ``P(Z) / Z**(5/3)`` for large ``Z``.
        rho_min: density floor used for specific quantities.
    """

    a: float = 1.0
    structural: str = "degenerate"
    P: Callable | None = None
    dP: Callable | None = None
    defect: Callable | None = None
    p_inf: float | None = None
    rho_min: float = 1e-8
    _table: _EntropyTable = field(init=False, repr=False)

    def __post_init__(self):
        if self.P is None or self.dP is None:
            if self.structural not in _STRUCTURAL:
                raise ValueError(f"unknown structural function {self.structural!r}")
            P, dP, defect, p_inf = _STRUCTURAL[self.structural]
            object.__setattr__(self, "P", P)
            object.__setattr__(self, "dP", dP)
            if self.defect is None:
                object.__setattr__(self, "defect", defect)
            if self.p_inf is None:
                object.__setattr__(self, "p_inf", p_inf)
        elif self.p_inf is None:
            object.__setattr__(self, "p_inf", 0.0)
        if self.defect is None:
            P, dP = self.P, self.dP
            object.__setattr__(self, "defect", lambda z: 5.0 / 3.0 * P(z) - dP(z) * z)
        if self.a < 0:
            raise ValueError("radiation constant must be nonnegative")
        object.__setattr__(self, "_table", _EntropyTable(self.defect))

    def S(self, z):
        """Entropy function of ``Z``, anchored at ``S(inf) = 0``."""
        return self._table(z)

    def dS(self, z):
        return self._table.derivative(z)

    @property
    def entropy_tail_exponent(self) -> float:
        return self._table.tail_exponent

    @property
    def entropy_decay_exponent(self) -> float:
        """Power of ``-Z S'(Z)`` at large ``Z``; negative iff ``S(inf)`` is finite."""
        return self._table.decay

    # vectorised building blocks without argument checks
    def _p(self, rho, theta):
        return theta**2.5 * self.P(rho / theta**1.5) + self.a / 3.0 * theta**4

    def _rhoe(self, rho, theta):
        return 1.5 * theta**2.5 * self.P(rho / theta**1.5) + self.a * theta**4

    def _drhoe_dtheta(self, rho, theta):
        z = rho / theta**1.5
        gas = 2.25 * theta**1.5 * self.defect(z)
        return gas + 4.0 * self.a * theta**3

    def _dp_drho(self, rho, theta):
        return theta * self.dP(rho / theta**1.5)

    def _dp_dtheta(self, rho, theta):
        z = rho / theta**1.5
        return 1.5 * theta**1.5 * self.defect(z) + 4.0 / 3.0 * self.a * theta**3

    def _s(self, rho, theta):
        return self.S(rho / theta**1.5) + 4.0 * self.a / 3.0 * theta**3 / rho

    def _rhos(self, rho, theta):
        """``rho * s``; finite at vacuum."""
        rho_c = np.maximum(rho, self.rho_min)
        return rho * self.S(rho_c / theta**1.5) + 4.0 * self.a / 3.0 * theta**3

    def sound_speed_sq(self, rho, theta):
        """Adiabatic sound speed squared."""
        rho_c = np.maximum(rho, self.rho_min)
        cv = self._drhoe_dtheta(rho_c, theta) / rho_c
        return self._dp_drho(rho_c, theta) + theta * self._dp_dtheta(rho_c, theta) ** 2 / (rho_c**2 * cv)


def _check(rho, theta, rho_strict):
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise DomainError("temperature must be positive")
    if rho_strict and np.any(rho <= 0):
        raise DomainError("density must be positive for specific quantities")
    if np.any(rho < 0):
        raise DomainError("density must be nonnegative")
    return rho, theta


def pressure(rho, theta, eos: EosModel):
    """Total pressure ``theta^(5/2) P(rho/theta^(3/2)) + a/3 theta^4``."""
    rho, theta = _check(rho, theta, rho_strict=False)
    return eos._p(rho, theta)


def internal_energy(rho, theta, eos: EosModel):
    """Specific internal energy including the radiation part."""
    rho, theta = _check(rho, theta, rho_strict=True)
    return eos._rhoe(rho, theta) / rho


def entropy(rho, theta, eos: EosModel):
    """Specific entropy ``S(Z) + 4a/3 theta^3 / rho``."""
    rho, theta = _check(rho, theta, rho_strict=True)
    return eos._s(rho, theta)


def gibbs_residual(rho, theta, eos: EosModel, h: float = 1e-4):
    """Centered-difference residuals of Gibbs' relation.

    Returns:
        ``(|theta ds/dtheta - de/dtheta|, |theta ds/drho - (de/drho - p/rho^2)|)``.
    """
    rho, theta = _check(rho, theta, rho_strict=True)
    if np.any(rho - h <= 0) or np.any(theta - h <= 0):
        raise DomainError("finite-difference step leaves the domain")

    def e(r, t):
        return eos._rhoe(r, t) / r

    def ds_dt():
        return (eos._s(rho, theta + h) - eos._s(rho, theta - h)) / (2 * h)

    de_dt = (e(rho, theta + h) - e(rho, theta - h)) / (2 * h)
    ds_dr = (eos._s(rho + h, theta) - eos._s(rho - h, theta)) / (2 * h)
    de_dr = (e(rho + h, theta) - e(rho - h, theta)) / (2 * h)
    p = eos._p(rho, theta)
    r_theta = np.abs(theta * ds_dt() - de_dt)
    r_rho = np.abs(theta * ds_dr - (de_dr - p / rho**2))
    return r_theta, r_rho


def temperature_from_energy(rho, rhoe, eos: EosModel, guess=None, tol=1e-13, maxiter=200):
    """Invert ``rho e(rho, theta) = rhoe`` for the temperature.

    Uses a bracketed Newton iteration; ``rhoe`` is strictly increasing in
    ``theta`` under the stability hypotheses. Cells whose energy lies at or
    below the zero-temperature limit ``1.5 p_inf rho^(5/3)`` get ``nan``.
    """
    rho = np.maximum(np.asarray(rho, dtype=float), eos.rho_min)
    rhoe = np.asarray(rhoe, dtype=float)
    floor = 1.5 * eos.p_inf * rho ** (5.0 / 3.0)
    bad = ~(rhoe > floor)
    if guess is None:
        theta = np.ones_like(rho)
    else:
        theta = np.where(np.isfinite(guess) & (guess > 0), guess, 1.0).astype(float)
    lo = np.zeros_like(rho)
    hi = np.full_like(rho, np.inf)
    theta = np.where(bad, 1.0, theta)
    target = np.where(bad, eos._rhoe(rho, 1.0), rhoe)
    for _ in range(maxiter):
        f = eos._rhoe(rho, theta) - target
        if np.all(np.abs(f) <= tol * target):
            break
        hi = np.where(f > 0, theta, hi)
        lo = np.where(f <= 0, theta, lo)
        new = theta - f / eos._drhoe_dtheta(rho, theta)
        outside = ~np.isfinite(new) | (new < lo) | (new > hi)
        bisect = np.where(np.isfinite(hi), 0.5 * (lo + hi), 2.0 * theta)
        new = np.where(outside, bisect, new)
        done = np.abs(new - theta) <= tol * theta
        theta = new
        if np.all(done):
            break
    return np.where(bad, np.nan, theta)


@dataclass(frozen=True)
class TransportModel:
    """Temperature-dependent transport coefficients.

    ``mu = mu0 (1+theta)``, ``eta = eta0 (1+theta)``,
    ``kappa = kappa0 (1+theta^beta)``, ``zeta = zeta0 (1+theta)``.
    The ``*_lo``/``*_hi`` bounds default to the coefficients themselves and
    are what ``hypothesis_report`` checks against.
    """

    mu0: float = 1.0
    eta0: float = 0.0
    kappa0: float = 1.0
    zeta0: float = 1.0
    beta: float = 6.5
    mu_lo: float | None = None
    mu_hi: float | None = None
    eta_hi: float | None = None
    kappa_lo: float | None = None
    kappa_hi: float | None = None
    zeta_lo: float | None = None
    zeta_hi: float | None = None
    dmu_max: float | None = None
    dzeta_max: float | None = None

    def mu(self, theta):
        return self.mu0 * (1.0 + theta)

    def eta(self, theta):
        return self.eta0 * (1.0 + theta)

    def kappa(self, theta):
        return self.kappa0 * (1.0 + np.asarray(theta, dtype=float) ** self.beta)

    def zeta(self, theta):
        return self.zeta0 * (1.0 + theta)

    def bounds(self) -> dict:
        def pick(v, d):
            return d if v is None else v
        return {
            "mu_lo": pick(self.mu_lo, self.mu0), "mu_hi": pick(self.mu_hi, self.mu0),
            "eta_hi": pick(self.eta_hi, self.eta0),
            "kappa_lo": pick(self.kappa_lo, self.kappa0), "kappa_hi": pick(self.kappa_hi, self.kappa0),
            "zeta_lo": pick(self.zeta_lo, self.zeta0), "zeta_hi": pick(self.zeta_hi, self.zeta0),
            "dmu_max": pick(self.dmu_max, 10.0 * max(self.mu0, 1e-300)),
            "dzeta_max": pick(self.dzeta_max, 10.0 * max(self.zeta0, 1e-300)),
        }


def _entry(name, margin, **extra):
    margin = float(margin)
    return {"name": name, "passed": bool(np.isfinite(margin) and margin > 0), "margin": margin, **extra}


def hypothesis_report(eos: EosModel, transport: TransportModel, z_grid=None, theta_grid=None) -> dict:
    """Check every structural hypothesis on sample grids.

    Failures are recorded as entries with ``passed = False``; nothing raises.
    Each entry carries the worst margin over the grid (positive = satisfied).
    """
    z = np.logspace(-3, 3, 121) if z_grid is None else np.asarray(z_grid, dtype=float)
    th = np.logspace(-2, 2, 41) if theta_grid is None else np.asarray(theta_grid, dtype=float)
    if z.size == 0 or th.size == 0 or np.any(z <= 0) or np.any(th <= 0):
        raise ValueError("grids must be nonempty and positive")
    z = np.sort(z)
    out = []
    P, dP = eos.P, eos.dP

    out.append(_entry("structural: P(0) = 0", 1e-14 - abs(float(P(np.array(0.0))))))
    out.append(_entry("structural: P'(Z) > 0", min(float(dP(np.array(0.0))), float(np.min(dP(z))))))
    stab = (5.0 / 3.0 * P(z) - dP(z) * z) / z
    stab = np.where(np.abs(stab) < 1e-8 * np.abs(P(z)) / z, eos.defect(z) / z, stab)
    scale = np.maximum(np.abs(P(z)) / z, 1e-300)
    out.append(_entry("structural: (5/3 P - P' Z)/Z > 0", float(np.min(stab / scale))))

    ratio = P(z) / z ** (5.0 / 3.0)
    dec = ratio[:-1] - ratio[1:]
    out.append(_entry("growth: P/Z^(5/3) decreasing", float(np.min(dec / ratio[:-1])) + 1e-15))
    zt = z[-1]
    f0, f1, f2 = (float(P(np.array(v)) / v ** (5.0 / 3.0)) for v in (zt / 100, zt / 10, zt))
    den = f0 + f2 - 2 * f1
    p_inf_est = (f0 * f2 - f1 * f1) / den if abs(den) > 1e-300 else f2
    out.append(_entry("growth: lim P/Z^(5/3) = p_inf > 0", p_inf_est / max(f0, 1e-300) - 1e-6,
                      p_inf_estimate=p_inf_est))

    # thermodynamic stability on the (rho, theta) lattice rho = Z theta^(3/2)
    T, ZZ = np.meshgrid(th, z, indexing="ij")
    R = ZZ * T**1.5
    hr, ht = 1e-6 * R, 1e-6 * T
    dpdr = (eos._p(R + hr, T) - eos._p(R - hr, T)) / (2 * hr)
    dedt = (eos._rhoe(R, T + ht) - eos._rhoe(R, T - ht)) / (2 * ht) / R
    out.append(_entry("stability: dp/drho > 0", float(np.min(dpdr / (eos._p(R, T) / R)))))
    out.append(_entry("stability: de/dtheta > 0", float(np.min(dedt / (eos._rhoe(R, T) / (R * T))))))

    S = eos.S(z)
    hz = 1e-5 * z
    dS_fd = (eos.S(z + hz) - eos.S(z - hz)) / (2 * hz)
    dS_ex = eos.dS(z)
    err = float(np.max(np.abs(dS_fd - dS_ex) / np.abs(dS_ex)))
    out.append(_entry("entropy: S' matches structural formula", 1e-5 - err, max_rel_error=err))
    out.append(_entry("entropy: S decreasing", float(np.min((S[:-1] - S[1:]) / np.abs(S[:-1])))))
    out.append(_entry("entropy: S -> 0 at infinity", min(float(np.min(S)), -eos.entropy_decay_exponent),
                      decay_exponent=eos.entropy_decay_exponent))
    out.append(_entry("entropy: rho s >= 0", float(np.min(R * eos._s(R, T))) + 1e-12))

    b = transport.bounds()
    mu_r = transport.mu(th) / (1 + th)
    out.append(_entry("viscosity: mu >= mu_lo (1+theta)", float(np.min(mu_r) - b["mu_lo"]) + 1e-12 * b["mu_lo"]
                      if b["mu_lo"] > 0 else -1.0))
    out.append(_entry("viscosity: mu <= mu_hi (1+theta)", float(b["mu_hi"] - np.max(mu_r)) + 1e-12 * b["mu_hi"]))
    hth = 1e-6 * (1 + th)
    dmu = np.abs(transport.mu(th + hth) - transport.mu(th - hth)) / (2 * hth)
    out.append(_entry("viscosity: |mu'| bounded", b["dmu_max"] - float(np.max(dmu)), max_derivative=float(np.max(dmu))))
    eta = transport.eta(th)
    out.append(_entry("viscosity: eta >= 0", float(np.min(eta)) + 1e-12))
    out.append(_entry("viscosity: eta <= eta_hi (1+theta)", float(b["eta_hi"] - np.max(eta / (1 + th))) + 1e-12))
    out.append(_entry("conductivity: beta > 6", transport.beta - 6.0))
    kap_r = transport.kappa(th) / (1 + th**transport.beta)
    out.append(_entry("conductivity: kappa >= kappa_lo (1+theta^beta)",
                      float(np.min(kap_r) - b["kappa_lo"]) + 1e-12 * b["kappa_lo"] if b["kappa_lo"] > 0 else -1.0))
    out.append(_entry("conductivity: kappa <= kappa_hi (1+theta^beta)",
                      float(b["kappa_hi"] - np.max(kap_r)) + 1e-12 * b["kappa_hi"]))
    zeta_r = transport.zeta(th) / (1 + th)
    out.append(_entry("resistivity: zeta >= zeta_lo (1+theta)",
                      float(np.min(zeta_r) - b["zeta_lo"]) + 1e-12 * b["zeta_lo"] if b["zeta_lo"] > 0 else -1.0))
    out.append(_entry("resistivity: zeta <= zeta_hi (1+theta)", float(b["zeta_hi"] - np.max(zeta_r)) + 1e-12 * b["zeta_hi"]))
    dz = np.abs(transport.zeta(th + hth) - transport.zeta(th - hth)) / (2 * hth)
    out.append(_entry("resistivity: |zeta'| bounded", b["dzeta_max"] - float(np.max(dz)), max_derivative=float(np.max(dz))))

    # measured equivalence constants; reported, not asserted
    p = eos._p(R, T)
    rhoe = eos._rhoe(R, T)
    band = p / rhoe
    lower = p / (R ** (5.0 / 3.0) + T**4)
    upper = p / (R ** (5.0 / 3.0) + T**4 + 1.0)
    measured = {
        "p_over_rhoe": [float(band.min()), float(band.max())],
        "p_over_rho53_theta4": [float(lower.min()), float(lower.max())],
        "p_over_rho53_theta4_1": [float(upper.min()), float(upper.max())],
    }
    return {"passed": all(e["passed"] for e in out), "hypotheses": out, "measured": measured}
