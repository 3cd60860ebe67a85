"""Elliptic solves: mixed Poisson, Bogovskii, boundary-field extensions,
harmonic fields and the stationarity test for magnetic boundary data."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from . import grid as g
from .grid import FACES, BoundarySpec, Grid, face_axis, face_side

log = logging.getLogger(__name__)

__all__ = [
    "EllipticError",
    "IncompatibleDataError",
    "ExtensionSet",
    "HarmonicBasis",
    "poisson_mixed",
    "harmonic_extension_temperature",
    "bogovskii",
    "cutoff",
    "default_delta0",
    "tangential_extension",
    "combined_extension",
    "stationarity_test",
    "harmonic_space",
    "project_off_harmonic",
    "poincare_constant",
]


class EllipticError(RuntimeError):
    """A linear solve failed to converge or failed residual substitution."""

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = list(history or [])


class IncompatibleDataError(ValueError):
    """Right-hand side violates a solvability condition."""

    def __init__(self, msg, defect):
        super().__init__(msg)
        self.defect = defect


# ---------------------------------------------------------------------------
# Poisson


def laplacian_matrix(grid: Grid, dirichlet_faces=()):
    """7-point Laplacian with homogeneous Dirichlet on ``dirichlet_faces``."""
    return (g.div_matrix(grid) @ g.grad_matrix(grid, tuple(dirichlet_faces))).tocsr()


def _cg(A, b, rtol, maxiter):
    diag = A.diagonal()
    M = sp.diags(1.0 / diag)
    history = []

    def cb(xk):
        history.append(float(np.linalg.norm(b - A @ xk)))

    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
    return x, info, history


def poisson_mixed(grid: Grid, rhs, dirichlet: Mapping | None = None, neumann: Mapping | None = None,
                  rtol: float = 1e-10, maxiter: int | None = None):
    """Solve ``div grad phi = rhs``.

    ``dirichlet`` maps faces to wall values, ``neumann`` to outward normal
    derivatives; faces in neither get zero flux. Without Dirichlet faces the
    data must be compatible and the result has zero mean.
    """
    dirichlet = dict(dirichlet or {})
    neumann = dict(neumann or {})
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), grid.shape)
    bc = {f: ("dirichlet", v) for f, v in dirichlet.items()}
    bc.update({f: ("neumann", v) for f, v in neumann.items() if f not in dirichlet})
    # affine part of the operator from the boundary data
    lift = g.div(grid, g.grad(grid, np.zeros(grid.shape), bc))
    b = (rhs - lift).ravel()
    A = -laplacian_matrix(grid, tuple(dirichlet))
    b = -b
    pure_neumann = not dirichlet
    if pure_neumann:
        defect = float(b.sum() * grid.cell_volume)
        scale = float(np.abs(b).sum() * grid.cell_volume) + 1e-300
        if abs(defect) > 1e-10 * max(scale, 1.0):
            raise IncompatibleDataError(
                f"pure-Neumann data incompatible: integral defect {defect:.3e}", defect)
        b = b - b.mean()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(grid.shape)
    if maxiter is None:
        maxiter = 20 * int(sum(grid.shape)) + 200
    x, info, history = _cg(A, b, rtol, maxiter)
    if pure_neumann:
        x = x - x.mean()
    res = float(np.linalg.norm(A @ x - b))
    if info != 0 or res > 10 * rtol * bnorm:
        raise EllipticError(f"Poisson solve failed: relative residual {res / bnorm:.3e}", history)
    return x.reshape(grid.shape)


def harmonic_extension_temperature(grid: Grid, spec: BoundarySpec, t: float = 0.0, rtol: float = 1e-10):
    """Discrete harmonic function with the Dirichlet temperature data."""
    faces = spec.thermal_dirichlet
    if not faces:
        raise ValueError("no Dirichlet temperature faces: harmonic extension undefined")
    data = {f: spec.eval_theta_B(grid, f, t) for f in faces}
    return poisson_mixed(grid, 0.0, dirichlet=data, rtol=rtol)


# ---------------------------------------------------------------------------
# Bogovskii


def _active_faces(grid: Grid, mask):
    """Boolean arrays per component: faces with mask cells on both sides."""
    out = []
    for c in range(3):
        act = np.zeros(grid.face_shape(c), dtype=bool)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        inner = [slice(None)] * 3
        lo[c] = slice(None, -1)
        hi[c] = slice(1, None)
        inner[c] = slice(1, -1)
        act[tuple(inner)] = mask[tuple(lo)] & mask[tuple(hi)]
        out.append(act)
    return out


def _dirichlet_gradient(grid: Grid):
    """Component-wise gradient of a face field with zero reflection at the walls."""
    mats = []
    n = grid.shape
    for c in range(3):
        fs = grid.face_shape(c)
        per = []
        for a in range(3):
            k = [g._eye(fs[i]) for i in range(3)]
            if a == c:
                k[a] = g._d_n2c(fs[a] - 1, grid.h[a])
            else:
                k[a] = g._d_c2n(n[a], grid.h[a], -1.0, -1.0)
            per.append(g._kron3(*k))
        mats.append(sp.vstack(per, format="csr"))
    return sp.block_diag(mats, format="csr")


@dataclass
class _BogovskiiInfo:
    constant: float
    div_residual: float


def bogovskii(grid: Grid, f, mask=None, return_info: bool = False, mean_tol: float = 1e-10,
              rtol: float = 1e-12, maxiter: int = 1000):
    """Face field ``v`` with ``div v = f`` on the mask and ``v = 0`` off it.

    Realized as the velocity of the discrete Stokes problem
    ``-lap v + grad q = 0, div v = f``. With ``return_info`` the ratio
    ``|v|_{H1} / |f|_{L2}`` and the divergence residual are returned too.
    """
    f = np.asarray(f, dtype=float)
    mask = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if f.shape != grid.shape:
        raise g.StaggerError("bogovskii: f must be a cell field")
    _, ncomp = ndimage.label(mask)
    if ncomp != 1:
        raise ValueError(f"mask must be one connected region (found {ncomp})")
    fm = np.where(mask, f, 0.0)
    mean = float(fm.sum() * grid.cell_volume)
    scale = float(np.abs(fm).sum() * grid.cell_volume)
    if abs(mean) > mean_tol * max(scale, 1.0):
        raise IncompatibleDataError(f"f has nonzero integral over the mask: {mean:.3e}", mean)

    zero = grid.zeros_face()
    if not np.any(fm):
        return (zero, _BogovskiiInfo(0.0, 0.0)) if return_info else zero

    active = _active_faces(grid, mask)
    act_flat = np.concatenate([a.ravel() for a in active])
    P = sp.identity(act_flat.size, format="csr")[:, np.flatnonzero(act_flat)]
    cells = np.flatnonzero(mask.ravel())
    D = (g.div_matrix(grid)[cells] @ P).tocsr()
    Gd = _dirichlet_gradient(grid) @ P
    K = (Gd.T @ Gd).tocsc()
    # K is a block-diagonal vector Laplacian; CG on the pressure Schur complement
    lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
    rhs = fm.ravel()[cells]
    S = spla.LinearOperator((D.shape[0], D.shape[0]), matvec=lambda q: D @ lu.solve(D.T @ q))
    history = []
    q, info = spla.cg(S, rhs, rtol=rtol, atol=0.0, maxiter=maxiter,
                      callback=lambda x: history.append(float(np.linalg.norm(S @ x - rhs))))
    if info != 0:
        raise EllipticError("Bogovskii pressure iteration did not converge", history)
    sol = lu.solve(D.T @ q)
    v = P @ sol
    F = g.unflatten(v, [grid.face_shape(c) for c in range(3)])
    res = float(np.max(np.abs(g.div(grid, F)[mask] - fm[mask])))
    if not np.all(np.isfinite(v)) or res > 1e-8 * max(1.0, float(np.abs(fm).max())):
        raise EllipticError(f"Bogovskii solve failed: divergence residual {res:.3e}")
    if not return_info:
        return F
    h1 = np.sqrt((float(v @ v) + float(np.sum((_dirichlet_gradient(grid) @ v) ** 2))) * grid.cell_volume)
    l2 = np.sqrt(float(np.sum(fm**2)) * grid.cell_volume)
    return F, _BogovskiiInfo(h1 / l2, res)


# ---------------------------------------------------------------------------
# extensions of the magnetic boundary data


def cutoff(d, delta):
    """Quintic smoothstep: 1 on ``[0, delta/2]``, 0 beyond ``delta``."""
    d = np.asarray(d, dtype=float)
    s = np.clip((d - 0.5 * delta) / (0.5 * delta), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _face_distance(grid: Grid, f1: str, f2: str) -> float:
    a1, a2 = face_axis(f1), face_axis(f2)
    if a1 != a2:
        return 0.0
    return 0.0 if f1 == f2 else grid.lengths[a1]


def default_delta0(grid: Grid, spec: BoundarySpec) -> float:
    """Quarter of the D-to-N face distance, at least four cells."""
    D, N = spec.magnetic_dirichlet, spec.magnetic_neumann
    if D and N:
        dist = min(_face_distance(grid, a, b) for a in D for b in N)
    else:
        dist = min(grid.lengths)
    return max(0.25 * dist, 4.0 * max(grid.h))


def _wall_distance(grid: Grid, face: str, nodal: bool):
    """Distance of cell centres (or nodes) to a box face along its normal."""
    a, side = face_axis(face), face_side(face)
    n, h = grid.shape[a], grid.h[a]
    x = h * np.arange(n + 1) if nodal else h * (np.arange(n) + 0.5)
    d = x if side == 0 else grid.lengths[a] - x
    shape = [1, 1, 1]
    shape[a] = d.size
    return d.reshape(shape)


def collar_mask(grid: Grid, faces, delta0: float):
    mask = np.zeros(grid.shape, dtype=bool)
    for f in faces:
        mask |= np.broadcast_to(_wall_distance(grid, f, False) < delta0, grid.shape)
    return mask


def tangential_extension(grid: Grid, spec: BoundarySpec, t: float, delta: float,
                         delta0: float | None = None):
    """Divergence-free face field carrying the tangential data near the Dirichlet faces."""
    if delta0 is None:
        delta0 = default_delta0(grid, spec)
    if not 0 < delta <= delta0 + 1e-14:
        raise ValueError(f"delta={delta} must lie in (0, delta0={delta0}]")
    faces = [f for f in spec.magnetic_dirichlet if f in spec.b_tau]
    B = [np.zeros(grid.face_shape(c)) for c in range(3)]
    if not faces:
        return tuple(B)
    for f in faces:
        a = face_axis(f)
        chi = cutoff(_wall_distance(grid, f, False), delta)
        for c in range(3):
            if c == a:
                continue
            B[c] += chi * spec.tangential_field(grid, f, t, c)
    for c in range(3):
        B[c][g._bslice(c, 0)] = 0.0
        B[c][g._bslice(c, -1)] = 0.0
    B = tuple(B)
    if not any(np.any(b) for b in B):
        return B
    mask = collar_mask(grid, faces, delta0)
    labels, ncomp = ndimage.label(mask)
    d = g.div(grid, B)
    out = [b.copy() for b in B]
    for k in range(1, ncomp + 1):
        mk = labels == k
        corr = bogovskii(grid, np.where(mk, -d, 0.0), mk)
        for c in range(3):
            out[c] += corr[c]
    return tuple(out)


@dataclass
class ExtensionSet:
    """Lifted boundary data at one time."""

    theta_tilde: np.ndarray | None
    B_N: tuple
    B_dD: tuple
    delta: float
    delta0: float
    phi_N: np.ndarray = field(repr=False, default=None)

    @property
    def B_B(self):
        return tuple(a + b for a, b in zip(self.B_N, self.B_dD))


def normal_extension(grid: Grid, spec: BoundarySpec, t: float, rtol: float = 1e-13):
    """Gradient of the potential with the normal data; zero potential on Dirichlet faces."""
    D = spec.magnetic_dirichlet
    neumann = {f: spec.eval_b_nu(grid, f, t) for f in spec.magnetic_neumann}
    phi = poisson_mixed(grid, 0.0, dirichlet={f: 0.0 for f in D}, neumann=neumann, rtol=rtol)
    bc = {f: ("dirichlet", 0.0) for f in D}
    bc.update({f: ("neumann", v) for f, v in neumann.items()})
    return phi, g.grad(grid, phi, bc)


def combined_extension(grid: Grid, spec: BoundarySpec, t: float = 0.0, delta: float | None = None,
                       delta0: float | None = None) -> ExtensionSet:
    if delta0 is None:
        delta0 = default_delta0(grid, spec)
    if delta is None:
        delta = delta0
    phi, BN = normal_extension(grid, spec, t)
    BD = tangential_extension(grid, spec, t, delta, delta0)
    theta = harmonic_extension_temperature(grid, spec, t) if spec.thermal_dirichlet else None
    return ExtensionSet(theta, BN, BD, delta, delta0, phi)


# ---------------------------------------------------------------------------
# stationarity


def tangential_divergence(grid: Grid, spec: BoundarySpec, face: str, t: float = 0.0):
    """Discrete surface divergence of ``b_tau`` at the interior nodes of a face.

    Uses ``div_tau(T x n) = n . curl T`` with ``T = n x b_tau`` sampled at
    the ghost points of the tangential face components.
    """
    a = face_axis(face)
    b, c = (a + 1) % 3, (a + 2) % 3
    Tb = spec.tangential_field(grid, face, t, b)
    Tc = spec.tangential_field(grid, face, t, c)
    sign = -1.0 if face[1] == "-" else 1.0
    inner_c = [slice(None)] * 3
    inner_c[c] = slice(1, -1)
    inner_b = [slice(None)] * 3
    inner_b[b] = slice(1, -1)
    w = (np.diff(Tc, axis=b) / grid.h[b])[tuple(inner_c)]
    w = w - (np.diff(Tb, axis=c) / grid.h[c])[tuple(inner_b)]
    return sign * w.squeeze(axis=a)


def _ghosts_for(spec: BoundarySpec, grid: Grid, t: float):
    """Ghost rule of a face field for the magnetic boundary data."""
    ghosts = {}
    for f in FACES:
        a = face_axis(f)
        if spec.faces[f].magnetic == "tangential":
            beta = {c: 2.0 * spec.tangential_field(grid, f, t, c) for c in range(3) if c != a}
            ghosts[f] = (-1.0, beta)
        else:
            ghosts[f] = (1.0, 0.0)
    return ghosts


def _constraint_operator(grid: Grid, spec: BoundarySpec):
    """Stacked (curl, div, normal trace on N faces) acting on flattened face fields."""
    alphas = {f: (-1.0 if spec.faces[f].magnetic == "tangential" else 1.0) for f in FACES}
    C = g.curl_face_to_edge_matrix(grid, alphas)
    D = g.div_matrix(grid)
    rows = []
    offs = np.cumsum([0] + [int(np.prod(grid.face_shape(c))) for c in range(3)])
    for f in spec.magnetic_neumann:
        a = face_axis(f)
        idx = np.zeros(grid.face_shape(a), dtype=bool)
        idx[g._bslice(a, 0 if face_side(f) == 0 else -1)] = True
        rows.append(offs[a] + np.flatnonzero(idx.ravel()))
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    N = sp.csr_matrix((np.ones(rows.size), (np.arange(rows.size), rows)), shape=(rows.size, offs[-1]))
    return C, D, N, rows


@dataclass
class StationarityVerdict:
    stationary: bool
    reason: str
    max_tangential_divergence: dict
    extension_residual: float | None = None
    witness: object = field(default=None, repr=False)

    def to_dict(self):
        return {"verdict": "stationary" if self.stationary else "non-stationary", "reason": self.reason,
                "max_tangential_divergence": self.max_tangential_divergence,
                "extension_residual": self.extension_residual}


def stationarity_test(grid: Grid, spec: BoundarySpec, t: float = 0.0, tol: float = 1e-6) -> StationarityVerdict:
    """Decide whether the magnetic boundary data admit a curl- and div-free extension.

    First the necessary surface condition ``div_tau b_tau = 0`` is checked on
    every Dirichlet face; if it holds, a least-squares curl/div-free face
    field with the data is computed and its residual reported.
    """
    scale = 0.0
    for f in spec.magnetic_dirichlet:
        for c in range(3):
            if c != face_axis(f):
                scale = max(scale, float(np.abs(spec.tangential_field(grid, f, t, c)).max()))
    for f in spec.magnetic_neumann:
        scale = max(scale, float(np.abs(spec.eval_b_nu(grid, f, t)).max()))
    scale = max(scale, 1e-300) / min(grid.lengths)

    divs, bad = {}, {}
    for f in spec.magnetic_dirichlet:
        w = tangential_divergence(grid, spec, f, t)
        divs[f] = float(np.abs(w).max()) if w.size else 0.0
        if divs[f] > tol * scale:
            bad[f] = w
    if bad:
        return StationarityVerdict(False, "tangential divergence of b_tau nonzero", divs, None, bad)

    C, D, N, rows = _constraint_operator(grid, spec)
    zero = grid.zeros_face()
    curl0 = g.flatten(g.curl_face_to_edge(grid, zero, _ghosts_for(spec, grid, t)))
    target_n = []
    for f in spec.magnetic_neumann:
        a = face_axis(f)
        bn = spec.eval_b_nu(grid, f, t)
        target_n.append(np.ravel(bn if face_side(f) == 1 else -bn))
    rhs = np.concatenate([-curl0, np.zeros(D.shape[0]), np.concatenate(target_n) if target_n else np.zeros(0)])
    A = sp.vstack([C, D, N], format="csr")
    if not np.any(rhs):
        return StationarityVerdict(True, "homogeneous data", divs, 0.0, zero)
    sol = spla.lsqr(A, rhs, atol=1e-14, btol=1e-14, iter_lim=20 * A.shape[1])[0]
    res = float(np.linalg.norm(A @ sol - rhs) / np.linalg.norm(rhs))
    ext = g.unflatten(sol, [grid.face_shape(c) for c in range(3)])
    ok = res < tol
    return StationarityVerdict(ok, "curl/div-free extension found" if ok else "no curl/div-free extension",
                               divs, res, ext)


# ---------------------------------------------------------------------------
# harmonic fields


@dataclass
class HarmonicBasis:
    fields: list
    gram: np.ndarray
    singular_values: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.fields)


def harmonic_space(grid: Grid, spec: BoundarySpec, tol: float = 1e-8, min_gap: float = 1e2,
                   k: int = 6) -> HarmonicBasis:
    """Discrete curl- and div-free face fields with homogeneous magnetic boundary conditions."""
    C, D, N, _ = _constraint_operator(grid, spec)
    A = sp.vstack([C, D, N], format="csr")
    AtA = (A.T @ A).tocsc()
    smax = float(np.sqrt(spla.eigsh(AtA, k=1, which="LM", return_eigenvectors=False, tol=1e-6)[0]))
    v0 = np.random.default_rng(0).standard_normal(AtA.shape[0])
    shift = -1e-6 * smax**2
    _, vecs = spla.eigsh(AtA, k=k, sigma=shift, which="LM", v0=v0, tol=0.0)
    sig = np.linalg.norm(A @ vecs, axis=0)
    order = np.argsort(sig)
    sig, vecs = sig[order], vecs[:, order]
    zero = sig < tol * smax
    nz = int(zero.sum())
    if nz == k:
        raise EllipticError(f"harmonic space dimension >= {k}; increase k")
    lo = sig[nz - 1] if nz else tol * smax
    if sig[nz] < min_gap * lo:
        raise EllipticError(f"no clear spectral gap at the nullspace threshold; tail {sig.tolist()}")
    shapes = [grid.face_shape(c) for c in range(3)]
    W = np.concatenate([g.face_weights(grid, c).ravel() for c in range(3)])
    basis = vecs[:, :nz]
    # orthonormal in the dual-volume inner product, deterministic sign
    if nz:
        L = np.linalg.cholesky(basis.T @ (W[:, None] * basis))
        basis = basis @ np.linalg.inv(L).T
        for j in range(nz):
            i = np.argmax(np.abs(basis[:, j]))
            if basis[i, j] < 0:
                basis[:, j] *= -1
    fields = [g.unflatten(basis[:, j], shapes) for j in range(nz)]
    gram = np.array([[g.face_inner(grid, a, b) for b in fields] for a in fields]).reshape(nz, nz)
    return HarmonicBasis(fields, gram, sig / smax)


def project_off_harmonic(grid: Grid, B, basis: HarmonicBasis):
    if basis.dim == 0:
        return tuple(np.array(b, copy=True) for b in B)
    m = np.array([g.face_inner(grid, B, h) for h in basis.fields])
    coef = np.linalg.solve(basis.gram, m)
    out = [np.array(b, dtype=float, copy=True) for b in B]
    for cj, h in zip(coef, basis.fields):
        for c in range(3):
            out[c] -= cj * h[c]
    return tuple(out)


def poincare_constant(grid: Grid, spec: BoundarySpec, basis: HarmonicBasis | None = None,
                      gamma: float = 100.0) -> float:
    """Inverse square root of the smallest ``|curl b|^2 / |b|_{H1}^2`` over div-free ``b`` off the harmonic fields.

    Divergence is penalized with weight ``gamma``; the normal trace on the
    Neumann faces is eliminated.
    """
    C, D, N, rows = _constraint_operator(grid, spec)
    nf = C.shape[1]
    keep = np.setdiff1d(np.arange(nf), rows)
    P = sp.identity(nf, format="csr")[:, keep]
    W = np.concatenate([g.face_weights(grid, c).ravel() for c in range(3)])
    vol = grid.cell_volume
    K = (P.T @ (vol * (C.T @ C) + gamma * vol * (D.T @ D)) @ P).tocsc()
    Gd = g.face_component_gradient_matrix(grid) @ P
    M = (sp.diags(W[keep]) + vol * (Gd.T @ Gd)).tocsc()
    U = None
    if basis is not None and basis.dim:
        U = np.column_stack([g.flatten(h)[keep] * W[keep] for h in basis.fields])
        U *= np.sqrt(10.0 * spla.norm(K, 1))
    sigma = -1e-8 * spla.norm(K, 1)
    lu = spla.splu((K - sigma * M).tocsc())
    if U is None:
        solve = lu.solve
    else:
        # Woodbury update for the low-rank harmonic deflation
        Z = lu.solve(U)
        S = np.eye(U.shape[1]) + U.T @ Z

        def solve(x):
            y = lu.solve(x)
            return y - Z @ np.linalg.solve(S, U.T @ y)

    n = K.shape[0]
    Aop = spla.LinearOperator((n, n), matvec=lambda x: K @ x + (U @ (U.T @ x) if U is not None else 0.0))
    OPinv = spla.LinearOperator((n, n), matvec=solve)
    try:
        lam = spla.eigsh(Aop, k=1, M=M, sigma=sigma, which="LM", OPinv=OPinv,
                         return_eigenvectors=False, v0=np.ones(n))[0]
    except spla.ArpackNoConvergence as exc:
        raise EllipticError("Poincare eigen-solve did not converge") from exc
    if not lam > 0:
        raise EllipticError(f"nonpositive Rayleigh quotient {lam:.3e}")
    return float(1.0 / np.sqrt(lam))
