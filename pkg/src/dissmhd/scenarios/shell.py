"""Steady radial conduction between two spheres and the rotating-frame obstruction.

A static state needs ``grad M x grad theta = 0``. With ``theta = theta(r)``
and ``M = g/r + |omega x x|^2 / 2`` this reduces to

    |grad M x grad theta| = |theta'(r)| / r * |omega . x| * |omega x x|

which vanishes only when ``omega = 0``. ``static_shell`` solves the radial
problem ``(r^2 kappa(theta) theta')' = 0`` by Newton's method on a
tridiagonal finite-volume system and samples this field on ``n_shells``
spherical shells (always including both walls).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded


class ShellError(RuntimeError):
    pass


@dataclass
class ShellResult:
    r: np.ndarray
    theta: np.ndarray
    flux: float
    iterations: int
    max_obstruction: float
    argmax: dict
    closed_form: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"max_obstruction": self.max_obstruction, "argmax": self.argmax, "flux": self.flux,
               "newton_iterations": self.iterations, "closed_form": self.closed_form,
               "theta_inner_slope": float(self.flux / (self.r[0] ** 2 * self.meta["kappa_inner"]))}
        if self.closed_form is not None:
            out["relative_error"] = (abs(self.max_obstruction - self.closed_form) / self.closed_form
                                     if self.closed_form > 0 else abs(self.max_obstruction))
        out.update({k: v for k, v in self.meta.items() if k != "kappa_inner"})
        return out


def _solve_radial(r1, r2, t_in, t_out, kappa, dkappa, n, tol, maxiter):
    r = np.linspace(r1, r2, n + 1)
    h = r[1] - r[0]
    # r_i r_{i+1} face weights make the scheme exact for constant kappa
    w = r[:-1] * r[1:] / h
    theta = t_in + (t_out - t_in) * (r - r1) / (r2 - r1)
    for it in range(1, maxiter + 1):
        tm = 0.5 * (theta[:-1] + theta[1:])
        km, dkm = kappa(tm), dkappa(tm)
        jump = np.diff(theta)
        flux = w * km * jump
        res = flux[1:] - flux[:-1]
        # d flux_j / d theta_j and / d theta_{j+1}
        dl = w * (-km + 0.5 * dkm * jump)
        du = w * (km + 0.5 * dkm * jump)
        m = n - 1
        ab = np.zeros((3, m))
        ab[1] = dl[1:] - du[:-1]
        ab[0, 1:] = du[1:-1]
        ab[2, :-1] = -dl[1:-1]
        step = solve_banded((1, 1), ab, -res)
        theta[1:-1] += step
        if not np.all(np.isfinite(theta)) or np.any(theta[1:-1] <= 0):
            raise ShellError(f"Newton iterate left the admissible range at iteration {it}")
        if np.max(np.abs(step)) <= tol * max(abs(t_in), abs(t_out)):
            tm = 0.5 * (theta[:-1] + theta[1:])
            q = w * kappa(tm) * np.diff(theta)
            return r, theta, float(np.mean(q)), it
    raise ShellError(f"Newton did not converge in {maxiter} iterations")


def obstruction_magnitude(x, y, z, dtheta_dr, omega):
    """``|grad M x grad theta|`` at points ``(x, y, z)`` for radial ``theta``."""
    w = np.asarray(omega, dtype=float)
    r = np.sqrt(x**2 + y**2 + z**2)
    wx = w[0] * x + w[1] * y + w[2] * z
    c = np.stack([w[1] * z - w[2] * y, w[2] * x - w[0] * z, w[0] * y - w[1] * x])
    return np.abs(dtheta_dr) / r * np.abs(wx) * np.sqrt(np.sum(c**2, axis=0))


def static_shell(r1: float, r2: float, theta_int: float, theta_ext: float, omega=(0.0, 0.0, 1.0),
                 g_bar: float = 1.0, kappa=None, dkappa=None, n: int = 400, n_polar: int = 181,
                 n_azimuth: int = 72, n_shells: int = 41, tol: float = 1e-13, maxiter: int = 50) -> ShellResult:
    """Solve the radial conduction problem and sample the obstruction field.

    ``kappa`` defaults to the constant 1, in which case the closed-form
    maximum ``|omega|^2 (theta_int - theta_ext) / (2 r1 (1/r1 - 1/r2))`` is
    reported alongside. The polar grid includes 45 degrees when ``n_polar``
    is ``4k + 1``.
    """
    if not (0 < r1 < r2):
        raise ValueError("need 0 < r1 < r2")
    if not (theta_int > theta_ext > 0):
        raise ValueError("need theta_int > theta_ext > 0")
    if len(omega) != 3:
        raise ValueError("omega needs three components")
    const = kappa is None
    if const:
        kappa, dkappa = (lambda t: np.ones_like(t)), (lambda t: np.zeros_like(t))
    elif dkappa is None:
        raise ValueError("dkappa is required with a custom kappa")
    r, theta, q, its = _solve_radial(r1, r2, theta_int, theta_ext, kappa, dkappa, n, tol, maxiter)
    slope = q / (r**2 * kappa(theta))

    pol = np.linspace(0.0, math.pi, n_polar)
    az = np.linspace(0.0, 2 * math.pi, n_azimuth, endpoint=False)
    pick = np.unique(np.linspace(0, n, min(n_shells, n + 1)).round().astype(int))
    rs = r[pick]
    R, P, A = np.meshgrid(rs, pol, az, indexing="ij")
    X, Y, Z = R * np.sin(P) * np.cos(A), R * np.sin(P) * np.sin(A), R * np.cos(P)
    ob = obstruction_magnitude(X, Y, Z, slope[pick][:, None, None], omega)
    k = np.unravel_index(int(np.argmax(ob)), ob.shape)
    wn2 = float(np.dot(omega, omega))
    closed = wn2 * (theta_int - theta_ext) / (2.0 * r1 * (1.0 / r1 - 1.0 / r2)) if const else None
    argmax = {"r": float(rs[k[0]]), "polar_deg": math.degrees(pol[k[1]]), "azimuth_deg": math.degrees(az[k[2]])}
    meta = {"r1": r1, "r2": r2, "theta_int": theta_int, "theta_ext": theta_ext, "omega": list(map(float, omega)),
            "g_bar": g_bar, "n": n, "kappa": "constant" if const else "custom", "kappa_inner": float(kappa(theta[:1])[0])}
    return ShellResult(r, theta, q, its, float(ob.max()), argmax, closed, meta)


def potential(x, y, z, g_bar, omega):
    """``M = g_bar / r + |omega x x|^2 / 2``."""
    w = np.asarray(omega, dtype=float)
    r = np.sqrt(x**2 + y**2 + z**2)
    c = np.stack([w[1] * z - w[2] * y, w[2] * x - w[0] * z, w[0] * y - w[1] * x])
    return g_bar / r + 0.5 * np.sum(c**2, axis=0)
