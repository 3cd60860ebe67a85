"""Staggered box grid, discrete operators, boundary partition and state.

Layout (``n = (nx, ny, nz)``):

* scalars live at cell centres, shape ``n``;
* component ``c`` of a face field lives on the faces normal to ``c``,
  shape ``n + e_c``;
* component ``c`` of an edge field lives on the edges parallel to ``c``,
  shape ``n + 1 - e_c``.

Edge quantities that need face values outside the box use one ghost layer
per box face, ``ghost = alpha * interior + beta`` (``alpha=-1, beta=2v``
pins the wall value to ``v``; ``alpha=1, beta=0`` is a zero normal
derivative).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

__all__ = [
    "FACES",
    "Grid",
    "FaceBC",
    "BoundarySpec",
    "FluidState",
    "StaggerError",
    "grad",
    "div",
    "curl_edge_to_face",
    "curl_face_to_edge",
    "face_to_cell",
    "edge_to_cell",
    "face_to_edge",
    "pad_ghost",
    "volume_integral",
    "surface_integral",
    "face_inner",
    "face_weights",
    "validate_boundary_spec",
    "write_dump",
    "read_dump",
]

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")
_AXIS = {"x": 0, "y": 1, "z": 2}


class StaggerError(ValueError):
    """Field shape does not match the expected stagger location."""


def face_axis(face: str) -> int:
    return _AXIS[face[0]]


def face_side(face: str) -> int:
    return 0 if face[1] == "-" else 1


def face_normal(face: str) -> tuple[float, float, float]:
    n = [0.0, 0.0, 0.0]
    n[face_axis(face)] = -1.0 if face[1] == "-" else 1.0
    return tuple(n)


def _e(axis):
    v = [0, 0, 0]
    v[axis] = 1
    return v


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular box split into ``nx * ny * nz`` cells."""

    shape: tuple[int, int, int]
    lengths: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != 3 or min(shape) < 2:
            raise ValueError("need at least two cells per axis")
        if len(self.lengths) != 3 or min(self.lengths) <= 0:
            raise ValueError("box lengths must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @classmethod
    def cube(cls, n: int, length: float = 1.0) -> "Grid":
        return cls((n, n, n), (length, length, length))

    @property
    def h(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def cell_volume(self) -> float:
        hx, hy, hz = self.h
        return hx * hy * hz

    @property
    def volume(self) -> float:
        Lx, Ly, Lz = self.lengths
        return Lx * Ly * Lz

    def face_shape(self, c: int) -> tuple[int, int, int]:
        return tuple(n + d for n, d in zip(self.shape, _e(c)))

    def edge_shape(self, c: int) -> tuple[int, int, int]:
        return tuple(n + 1 - d for n, d in zip(self.shape, _e(c)))

    def _coords(self, axis, nodal):
        n, h, x0 = self.shape[axis], self.h[axis], self.origin[axis]
        if nodal:
            return x0 + h * np.arange(n + 1)
        return x0 + h * (np.arange(n) + 0.5)

    def _mesh(self, nodal):
        axes = [self._coords(a, nodal[a]) for a in range(3)]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def cell_centers(self):
        return self._mesh((False, False, False))

    def face_centers(self, c: int):
        return self._mesh(tuple(a == c for a in range(3)))

    def edge_centers(self, c: int):
        return self._mesh(tuple(a != c for a in range(3)))

    def zeros_cell(self):
        return np.zeros(self.shape)

    def zeros_face(self):
        return tuple(np.zeros(self.face_shape(c)) for c in range(3))

    def zeros_edge(self):
        return tuple(np.zeros(self.edge_shape(c)) for c in range(3))

    def wall_points(self, face: str, c: int | None = None):
        """Sample points on a box face.

        ``c=None`` gives the cell-centred points of the face (shape of a cell
        array with the normal axis collapsed). For a tangential component
        ``c`` it gives the points where the ghost of that face-field
        component sits, i.e. nodal along ``c``.
        """
        a, side = face_axis(face), face_side(face)
        nodal = [False, False, False]
        if c is not None:
            if c == a:
                raise ValueError("component must be tangential to the face")
            nodal[c] = True
        axes = []
        for ax in range(3):
            if ax == a:
                axes.append(np.array([self.origin[a] + side * self.lengths[a]]))
            else:
                axes.append(self._coords(ax, nodal[ax]))
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def face_area(self, face: str) -> float:
        a = face_axis(face)
        hx = self.h
        return float(np.prod([hx[i] for i in range(3) if i != a]))


# ---------------------------------------------------------------------------
# array operators


def _require(arr, shape, what):
    if np.shape(arr) != tuple(shape):
        raise StaggerError(f"{what}: expected shape {tuple(shape)}, got {np.shape(arr)}")


def _bslice(axis, idx):
    s = [slice(None)] * 3
    s[axis] = slice(idx, idx + 1) if idx >= 0 else slice(idx, None if idx == -1 else idx + 1)
    return tuple(s)


def pad_ghost(a, axis, lo=(1.0, 0.0), hi=(1.0, 0.0)):
    """Append one ghost layer on each end of ``axis``.

    ``lo``/``hi`` are ``(alpha, beta)`` pairs; the ghost value is
    ``alpha * adjacent + beta`` and both may broadcast against the boundary
    slice.
    """
    first = a[_bslice(axis, 0)]
    last = a[_bslice(axis, -1)]
    g_lo = lo[0] * first + lo[1]
    g_hi = hi[0] * last + hi[1]
    return np.concatenate([np.broadcast_to(g_lo, first.shape),
                           a, np.broadcast_to(g_hi, last.shape)], axis=axis)


def _diff(a, axis, h):
    return np.diff(a, axis=axis) / h


def _avg(a, axis):
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def grad(grid: Grid, phi, bc: Mapping | None = None):
    """Cell-centred scalar to face vector.

    ``bc`` maps a face name to ``("dirichlet", value)`` or
    ``("neumann", outward_flux)``; unlisted faces get zero flux.
    """
    _require(phi, grid.shape, "grad")
    bc = bc or {}
    out = []
    for c in range(3):
        h = grid.h[c]
        g = np.empty(grid.face_shape(c))
        inner = [slice(None)] * 3
        inner[c] = slice(1, -1)
        g[tuple(inner)] = _diff(phi, c, h)
        for side, face in ((0, FACES[2 * c]), (1, FACES[2 * c + 1])):
            kind, val = bc.get(face, ("neumann", 0.0))
            bnd = _bslice(c, 0 if side == 0 else -1)
            adj = phi[_bslice(c, 0 if side == 0 else -1)]
            if kind == "dirichlet":
                g[bnd] = (2.0 * (adj - val) if side == 0 else 2.0 * (val - adj)) / h
            elif kind == "neumann":
                g[bnd] = np.broadcast_to(-val if side == 0 else val, adj.shape)
            else:
                raise ValueError(f"unknown boundary kind {kind!r}")
        out.append(g)
    return tuple(out)


def div(grid: Grid, F):
    """Face vector to cell scalar."""
    for c in range(3):
        _require(F[c], grid.face_shape(c), f"div component {c}")
    return sum(_diff(F[c], c, grid.h[c]) for c in range(3))


def curl_edge_to_face(grid: Grid, E):
    """Edge vector to face vector; ``div(curl_edge_to_face(E)) == 0`` exactly."""
    for c in range(3):
        _require(E[c], grid.edge_shape(c), f"curl_edge_to_face component {c}")
    out = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        out.append(_diff(E[b], a, grid.h[a]) - _diff(E[a], b, grid.h[b]))
    return tuple(out)


def _ghost_pair(ghosts, face, c):
    g = ghosts.get(face) if ghosts else None
    if g is None:
        return (1.0, 0.0)
    alpha, beta = g
    if isinstance(beta, Mapping):
        beta = beta.get(c, 0.0)
    if isinstance(alpha, Mapping):
        alpha = alpha.get(c, 1.0)
    return (alpha, beta)


def padded_component(grid: Grid, F_c, c: int, axis: int, ghosts=None):
    """Face component ``c`` padded with ghosts along tangential ``axis``."""
    lo = _ghost_pair(ghosts, FACES[2 * axis], c)
    hi = _ghost_pair(ghosts, FACES[2 * axis + 1], c)
    return pad_ghost(F_c, axis, lo, hi)


def curl_face_to_edge(grid: Grid, F, ghosts: Mapping | None = None):
    """Face vector to edge vector, boundary edges included.

    ``ghosts`` maps a face name to ``(alpha, beta)`` where ``beta`` may be a
    dict keyed by tangential component. Default is zero normal derivative.
    """
    for c in range(3):
        _require(F[c], grid.face_shape(c), f"curl_face_to_edge component {c}")
    out = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        Fb = padded_component(grid, F[b], b, a, ghosts)
        Fa = padded_component(grid, F[a], a, b, ghosts)
        out.append(_diff(Fb, a, grid.h[a]) - _diff(Fa, b, grid.h[b]))
    return tuple(out)


def face_to_edge(grid: Grid, F, ghosts: Mapping | None = None):
    """Average face components onto edges.

    Returns ``{(c, e): array}`` holding component ``c`` on the edges
    parallel to ``e`` for every ``c != e``.
    """
    out = {}
    for e in range(3):
        for c in range(3):
            if c == e:
                continue
            other = 3 - c - e
            out[(c, e)] = _avg(padded_component(grid, F[c], c, other, ghosts), other)
    return out


def face_to_cell(F):
    return tuple(_avg(F[c], c) for c in range(3))


def edge_to_cell(E):
    out = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        out.append(_avg(_avg(E[c], a), b))
    return tuple(out)


# ---------------------------------------------------------------------------
# integrals


def volume_integral(grid: Grid, f) -> float:
    """Midpoint rule over cells."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return float(f) * grid.volume
    _require(f, grid.shape, "volume_integral")
    return float(f.sum() * grid.cell_volume)


def surface_integral(grid: Grid, values: Mapping | float, faces=FACES) -> float:
    """Midpoint rule over box faces.

    ``values`` is either a scalar or a mapping from face name to an array on
    the cell-centred face points (see ``Grid.wall_points``) or a scalar.
    """
    total = 0.0
    for face in faces:
        v = values if np.isscalar(values) else values.get(face, 0.0)
        a = face_axis(face)
        shape = [n for i, n in enumerate(grid.shape) if i != a]
        arr = np.broadcast_to(np.asarray(v, dtype=float).squeeze(), shape) if np.ndim(v) else np.full(shape, float(v))
        total += float(arr.sum()) * grid.face_area(face)
    return total


def face_weights(grid: Grid, c: int):
    """Dual volumes of component-``c`` faces (half cells on the boundary)."""
    w = np.full(grid.face_shape(c), grid.cell_volume)
    w[_bslice(c, 0)] *= 0.5
    w[_bslice(c, -1)] *= 0.5
    return w


def face_inner(grid: Grid, F, G) -> float:
    """Discrete L2 inner product of two face fields."""
    return float(sum((face_weights(grid, c) * F[c] * G[c]).sum() for c in range(3)))


# ---------------------------------------------------------------------------
# sparse matrices (C-order ravel, components concatenated)


def _d_n2c(n, h):
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr") / h


def _d_c2n(n, h, alpha_lo=1.0, alpha_hi=1.0):
    main = np.ones(n + 1)
    low = -np.ones(n)
    main[0] = 1.0 - alpha_lo
    main[n] = 0.0
    d = sp.diags([main[:n], low], [0, -1], shape=(n + 1, n), format="lil")
    d[n, n - 1] = alpha_hi - 1.0
    return d.tocsr() / h


def _kron3(a, b, c):
    return sp.kron(sp.kron(a, b, format="csr"), c, format="csr")


def _eye(n):
    return sp.identity(n, format="csr")


def div_matrix(grid: Grid):
    nx, ny, nz = grid.shape
    hx, hy, hz = grid.h
    return sp.hstack([
        _kron3(_d_n2c(nx, hx), _eye(ny), _eye(nz)),
        _kron3(_eye(nx), _d_n2c(ny, hy), _eye(nz)),
        _kron3(_eye(nx), _eye(ny), _d_n2c(nz, hz)),
    ], format="csr")


def grad_matrix(grid: Grid, dirichlet_faces=()):
    """Homogeneous grad: zero value on ``dirichlet_faces``, zero flux elsewhere."""
    mats = []
    n = grid.shape
    for c in range(3):
        al = -1.0 if FACES[2 * c] in dirichlet_faces else 1.0
        ah = -1.0 if FACES[2 * c + 1] in dirichlet_faces else 1.0
        blocks = [_eye(n[i]) for i in range(3)]
        blocks[c] = _d_c2n(n[c], grid.h[c], al, ah)
        mats.append(_kron3(*blocks))
    return sp.vstack(mats, format="csr")


def curl_edge_to_face_matrix(grid: Grid):
    n = grid.shape
    off = np.cumsum([0] + [int(np.prod(grid.edge_shape(c))) for c in range(3)])
    rows = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        fs = grid.face_shape(c)
        blocks = [None, None, None]
        # d/da of E_b
        k = [_eye(grid.edge_shape(b)[i]) for i in range(3)]
        k[a] = _d_n2c(n[a], grid.h[a])
        blocks[b] = _kron3(*k)
        k = [_eye(grid.edge_shape(a)[i]) for i in range(3)]
        k[b] = _d_n2c(n[b], grid.h[b])
        blocks[a] = -_kron3(*k)
        blocks[c] = sp.csr_matrix((int(np.prod(fs)), int(off[c + 1] - off[c])))
        rows.append(sp.hstack(blocks, format="csr"))
    return sp.vstack(rows, format="csr")


def curl_face_to_edge_matrix(grid: Grid, alphas: Mapping | None = None):
    """Homogeneous face-to-edge curl; ``alphas`` maps face name to ghost alpha."""
    alphas = alphas or {}
    n = grid.shape
    rows = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        es = grid.edge_shape(c)
        blocks = [None, None, None]
        k = [_eye(grid.face_shape(b)[i]) for i in range(3)]
        k[a] = _d_c2n(n[a], grid.h[a], alphas.get(FACES[2 * a], 1.0), alphas.get(FACES[2 * a + 1], 1.0))
        blocks[b] = _kron3(*k)
        k = [_eye(grid.face_shape(a)[i]) for i in range(3)]
        k[b] = _d_c2n(n[b], grid.h[b], alphas.get(FACES[2 * b], 1.0), alphas.get(FACES[2 * b + 1], 1.0))
        blocks[a] = -_kron3(*k)
        blocks[c] = sp.csr_matrix((int(np.prod(es)), int(np.prod(grid.face_shape(c)))))
        rows.append(sp.hstack(blocks, format="csr"))
    return sp.vstack(rows, format="csr")


def face_component_gradient_matrix(grid: Grid):
    """Differences of each face component along every axis (interior pairs only)."""
    mats = []
    for c in range(3):
        fs = grid.face_shape(c)
        per = []
        for a in range(3):
            k = [_eye(fs[i]) for i in range(3)]
            k[a] = _d_n2c(fs[a] - 1, grid.h[a])
            per.append(_kron3(*k))
        mats.append(sp.vstack(per, format="csr"))
    return sp.block_diag(mats, format="csr")


def flatten(F) -> np.ndarray:
    return np.concatenate([np.ravel(f) for f in F])


def unflatten(v, shapes):
    out, i = [], 0
    for s in shapes:
        m = int(np.prod(s))
        out.append(np.asarray(v[i:i + m]).reshape(s))
        i += m
    return tuple(out)


# ---------------------------------------------------------------------------
# boundary partition

VELOCITY_TAGS = ("no-slip", "slip", "navier")
TEMPERATURE_TAGS = ("dirichlet", "insulated", "radiative")
MAGNETIC_TAGS = ("tangential", "normal")


@dataclass(frozen=True)
class FaceBC:
    """Boundary tags of one box face.

    ``magnetic="tangential"`` prescribes ``B x n = b_tau``;
    ``magnetic="normal"`` prescribes ``B . n = b_nu`` with zero tangential
    electric field.
    """

    velocity: str = "no-slip"
    temperature: str = "dirichlet"
    magnetic: str = "tangential"
    navier_d: float = 0.0
    rad_d: float = 0.0
    rad_theta0: float = 1.0
    rad_k: float = 0.0


def _zero(*args):
    return 0.0


@dataclass(frozen=True)
class BoundarySpec:
    """Face-wise boundary partition, boundary data and environment.

    Data callables take ``(t, x, y, z)`` and broadcast. ``b_tau[face]``
    returns the three components of ``B x n``. ``G`` is the gravitational
    potential; the centrifugal part of ``M`` is added from ``omega``.
    """

    faces: Mapping[str, FaceBC] = field(default_factory=lambda: {f: FaceBC() for f in FACES})
    theta_B: Mapping[str, Callable] = field(default_factory=dict)
    b_tau: Mapping[str, Callable] = field(default_factory=dict)
    b_nu: Mapping[str, Callable] = field(default_factory=dict)
    G: Callable | None = None
    omega: tuple[float, float, float] = (0.0, 0.0, 0.0)
    m0: float | None = None
    time_dependent: bool = False

    @classmethod
    def uniform(cls, velocity="no-slip", temperature="dirichlet", magnetic="tangential", **kw):
        bc = FaceBC(velocity=velocity, temperature=temperature, magnetic=magnetic)
        return cls(faces={f: bc for f in FACES}, **kw)

    def with_faces(self, **tags) -> "BoundarySpec":
        """Copy with some faces retagged; keys use ``x_minus`` style names."""
        faces = dict(self.faces)
        for k, v in tags.items():
            faces[k.replace("_minus", "-").replace("_plus", "+")] = v
        return replace(self, faces=faces)

    def tagged(self, kind: str, tag: str) -> tuple[str, ...]:
        return tuple(f for f in FACES if getattr(self.faces[f], kind) == tag)

    @property
    def magnetic_dirichlet(self):
        return self.tagged("magnetic", "tangential")

    @property
    def magnetic_neumann(self):
        return self.tagged("magnetic", "normal")

    @property
    def thermal_dirichlet(self):
        return self.tagged("temperature", "dirichlet")

    def potential(self, grid: Grid, t: float, points=None):
        """``M = G + |omega x x|^2 / 2`` at cell centres (or given points)."""
        X, Y, Z = grid.cell_centers() if points is None else points
        w = np.asarray(self.omega, dtype=float)
        cx = w[1] * Z - w[2] * Y
        cy = w[2] * X - w[0] * Z
        cz = w[0] * Y - w[1] * X
        M = 0.5 * (cx**2 + cy**2 + cz**2)
        if self.G is not None:
            M = M + self.G(t, X, Y, Z)
        return np.broadcast_to(M, np.broadcast_shapes(np.shape(X), np.shape(Y), np.shape(Z))).astype(float)

    def eval_theta_B(self, grid: Grid, face: str, t: float):
        X, Y, Z = grid.wall_points(face)
        return np.broadcast_to(self.theta_B[face](t, X, Y, Z), np.broadcast_shapes(X.shape, Y.shape, Z.shape)).astype(float)

    def eval_b_nu(self, grid: Grid, face: str, t: float):
        X, Y, Z = grid.wall_points(face)
        f = self.b_nu.get(face, _zero)
        return np.broadcast_to(f(t, X, Y, Z), np.broadcast_shapes(X.shape, Y.shape, Z.shape)).astype(float)

    def tangential_field(self, grid: Grid, face: str, t: float, c: int):
        """Component ``c`` of ``n x b_tau`` (the tangential B on the wall) at ghost points of component ``c``."""
        X, Y, Z = grid.wall_points(face, c)
        shape = np.broadcast_shapes(X.shape, Y.shape, Z.shape)
        f = self.b_tau.get(face)
        if f is None:
            return np.zeros(shape)
        b = [np.broadcast_to(v, shape) for v in f(t, X, Y, Z)]
        n = face_normal(face)
        t_vec = np.cross(np.array(n)[:, None], np.stack([bi.ravel() for bi in b]), axis=0)
        return t_vec[c].reshape(shape)


def validate_boundary_spec(spec: BoundarySpec, grid: Grid, t: float = 0.0, tol: float = 1e-10) -> dict:
    """Check the partition and the compatibility of the boundary data."""
    violations, notes = [], []
    for f in FACES:
        if f not in spec.faces:
            violations.append(f"face {f} has no tags")
    for f, bc in spec.faces.items():
        if f not in FACES:
            violations.append(f"unknown face {f!r}")
            continue
        if bc.velocity not in VELOCITY_TAGS:
            violations.append(f"face {f}: unknown velocity tag {bc.velocity!r}")
        if bc.temperature not in TEMPERATURE_TAGS:
            violations.append(f"face {f}: unknown temperature tag {bc.temperature!r}")
        if bc.magnetic not in MAGNETIC_TAGS:
            violations.append(f"face {f}: unknown magnetic tag {bc.magnetic!r}")
        if bc.velocity == "navier" and not bc.navier_d > 0:
            violations.append(f"face {f}: navier-slip needs d > 0")
        if bc.temperature == "radiative" and (bc.rad_d <= 0 or bc.rad_theta0 <= 0 or bc.rad_k < 0):
            violations.append(f"face {f}: radiative condition needs d > 0, theta0 > 0, k >= 0")
    if violations:
        return {"passed": False, "violations": violations, "notes": notes}

    for f in spec.thermal_dirichlet:
        if f not in spec.theta_B:
            violations.append(f"missing theta_B on Dirichlet face {f}")
            continue
        th = spec.eval_theta_B(grid, f, t)
        if not np.all(th > 0):
            violations.append(f"theta_B not positive on face {f} (min {float(th.min()):.3g})")
    for f in spec.magnetic_dirichlet:
        fn = spec.b_tau.get(f)
        if fn is None:
            continue
        X, Y, Z = grid.wall_points(f)
        shape = np.broadcast_shapes(X.shape, Y.shape, Z.shape)
        b = [np.broadcast_to(v, shape) for v in fn(t, X, Y, Z)]
        n = face_normal(f)
        normal = sum(bi * ni for bi, ni in zip(b, n))
        scale = 1.0 + max(float(np.max(np.abs(bi))) for bi in b)
        if np.max(np.abs(normal)) > tol * scale:
            violations.append(f"b_tau has a normal component on face {f} (max {float(np.max(np.abs(normal))):.3g})")
    if not spec.magnetic_dirichlet:
        flux = surface_integral(grid, {f: spec.eval_b_nu(grid, f, t) for f in FACES})
        scale = 1.0 + sum(abs(float(np.abs(spec.eval_b_nu(grid, f, t)).sum())) * grid.face_area(f) for f in FACES)
        if abs(flux) > tol * scale:
            violations.append(f"zero-flux compatibility violated: surface integral of b_nu = {flux:.3g}")
    if not spec.thermal_dirichlet:
        notes.append("no Dirichlet temperature faces: no absorbing set expected")
    if not spec.tagged("velocity", "no-slip"):
        notes.append("no no-slip velocity faces")
    return {"passed": not violations, "violations": violations, "notes": notes}


# ---------------------------------------------------------------------------
# state and dumps


@dataclass
class FluidState:
    """Discrete fields at one instant."""

    t: float
    rho: np.ndarray
    theta: np.ndarray
    u: tuple
    B: tuple

    def copy(self) -> "FluidState":
        return FluidState(self.t, self.rho.copy(), self.theta.copy(),
                          tuple(a.copy() for a in self.u), tuple(a.copy() for a in self.B))

    @classmethod
    def at_rest(cls, grid: Grid, rho=1.0, theta=1.0, B=None, t=0.0) -> "FluidState":
        Bf = grid.zeros_face() if B is None else tuple(np.array(b, dtype=float) for b in B)
        return cls(t, np.full(grid.shape, float(rho)) if np.isscalar(rho) else np.array(rho, dtype=float),
                   np.full(grid.shape, float(theta)) if np.isscalar(theta) else np.array(theta, dtype=float),
                   grid.zeros_face(), Bf)

    def check(self, grid: Grid, div_tol: float = 1e-10) -> list[str]:
        problems = []
        if np.any(self.rho < 0):
            problems.append("negative density")
        if not np.all(self.theta > 0):
            problems.append("nonpositive temperature")
        d = np.max(np.abs(div(grid, self.B)))
        if d > div_tol:
            problems.append(f"div B = {d:.3g}")
        return problems


_DUMP_FIELDS = [("rho", "cell", None), ("theta", "cell", None)] + \
    [(f"u{c}", "face", c) for c in "xyz"] + [(f"B{c}", "face", c) for c in "xyz"]


def write_dump(path, grid: Grid, state: FluidState, extra: Mapping | None = None) -> None:
    """Write ``<path>.bin`` (raw little-endian float64) and ``<path>.json``."""
    arrays = [state.rho, state.theta, *state.u, *state.B]
    header = {"shape": list(grid.shape), "lengths": list(grid.lengths), "origin": list(grid.origin),
              "time": float(state.t).hex(), "dtype": "<f8", "fields": []}
    offset = 0
    with open(f"{path}.bin", "wb") as fh:
        for (name, stagger, comp), arr in zip(_DUMP_FIELDS, arrays):
            a = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(a.tobytes())
            header["fields"].append({"name": name, "stagger": stagger, "component": comp,
                                     "shape": list(a.shape), "offset": offset})
            offset += a.nbytes
    if extra:
        header["extra"] = dict(extra)
    tmp = f"{path}.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(header, fh, indent=1)
    os.replace(tmp, f"{path}.json")


def read_dump(path) -> tuple[Grid, FluidState]:
    with open(f"{path}.json") as fh:
        header = json.load(fh)
    raw = np.fromfile(f"{path}.bin", dtype="<f8")
    grid = Grid(tuple(header["shape"]), tuple(header["lengths"]), tuple(header["origin"]))
    got = {}
    for fld in header["fields"]:
        n = int(np.prod(fld["shape"]))
        start = fld["offset"] // 8
        got[fld["name"]] = raw[start:start + n].reshape(fld["shape"]).astype(float)
    state = FluidState(float.fromhex(header["time"]), got["rho"], got["theta"],
                       (got["ux"], got["uy"], got["uz"]), (got["Bx"], got["By"], got["Bz"]))
    return grid, state
