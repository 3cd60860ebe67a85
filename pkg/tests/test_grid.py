import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dissmhd import grid as g
from dissmhd.grid import FACES, BoundarySpec, FaceBC, FluidState, Grid

from .conftest import random_edge, random_face

SMALL = Grid((4, 3, 5), (1.2, 0.9, 1.5), (0.0, 0.5, -1.0))


def test_stagger_shapes():
    gr = Grid((4, 5, 6))
    assert gr.face_shape(0) == (5, 5, 6)
    assert gr.face_shape(2) == (4, 5, 7)
    assert gr.edge_shape(0) == (4, 6, 7)
    assert gr.edge_shape(2) == (5, 6, 6)
    X, Y, Z = gr.face_centers(1)
    assert Y.ravel()[0] == 0.0 and Y.ravel()[-1] == pytest.approx(1.0)


def test_stagger_errors():
    with pytest.raises(g.StaggerError):
        g.div(SMALL, (np.zeros((4, 3, 5)),) * 3)


def test_div_matches_loop(rng):
    F = random_face(SMALL, rng)
    hx, hy, hz = SMALL.h
    d = g.div(SMALL, F)
    nx, ny, nz = SMALL.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                ref = ((F[0][i + 1, j, k] - F[0][i, j, k]) / hx + (F[1][i, j + 1, k] - F[1][i, j, k]) / hy
                       + (F[2][i, j, k + 1] - F[2][i, j, k]) / hz)
                assert d[i, j, k] == pytest.approx(ref, rel=1e-13, abs=1e-13)


def test_grad_matches_loop_with_mixed_data(rng):
    phi = rng.standard_normal(SMALL.shape)
    bc = {"x-": ("dirichlet", 2.0), "y+": ("neumann", 0.5)}
    G = g.grad(SMALL, phi, bc)
    hx, hy, _ = SMALL.h
    nx, ny, nz = SMALL.shape
    for j in range(ny):
        for k in range(nz):
            # wall value 2 sits half a cell from the first centre
            assert G[0][0, j, k] == pytest.approx((phi[0, j, k] - 2.0) / (hx / 2))
            assert G[0][nx, j, k] == 0.0
            for i in range(1, nx):
                assert G[0][i, j, k] == pytest.approx((phi[i, j, k] - phi[i - 1, j, k]) / hx)
    assert np.all(G[1][:, ny, :] == 0.5)
    assert np.all(G[1][:, 0, :] == 0.0)


def test_curl_edge_to_face_matches_loop(rng):
    E = random_edge(SMALL, rng)
    C = g.curl_edge_to_face(SMALL, E)
    hx, hy, hz = SMALL.h
    nx, ny, nz = SMALL.shape
    for i in range(nx + 1):
        for j in range(ny):
            for k in range(nz):
                ref = (E[2][i, j + 1, k] - E[2][i, j, k]) / hy - (E[1][i, j, k + 1] - E[1][i, j, k]) / hz
                assert C[0][i, j, k] == pytest.approx(ref, abs=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_div_curl_vanishes(seed):
    rng = np.random.default_rng(seed)
    gr = Grid((5, 4, 6), (1.0, 0.7, 1.3))
    E = random_edge(gr, rng)
    assert np.max(np.abs(g.div(gr, g.curl_edge_to_face(gr, E)))) < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_curl_grad_vanishes_with_dirichlet_ghosts(seed):
    rng = np.random.default_rng(seed)
    gr = Grid((5, 4, 6), (1.0, 0.7, 1.3))
    phi = rng.standard_normal(gr.shape)
    G = g.grad(gr, phi, {f: ("dirichlet", 0.0) for f in FACES})
    ghosts = {f: (-1.0, 0.0) for f in FACES}
    assert np.max(np.abs(np.concatenate([c.ravel() for c in g.curl_face_to_edge(gr, G, ghosts)]))) < 1e-11


def test_summation_by_parts(rng):
    phi = rng.standard_normal(SMALL.shape)
    F = list(random_face(SMALL, rng))
    for c in range(3):
        F[c][g._bslice(c, 0)] = 0.0
        F[c][g._bslice(c, -1)] = 0.0
    G = g.grad(SMALL, phi)
    lhs = g.face_inner(SMALL, G, F)
    rhs = -g.volume_integral(SMALL, phi * g.div(SMALL, F))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_sparse_operators_match_array_operators(rng):
    F = random_face(SMALL, rng)
    np.testing.assert_allclose(g.div_matrix(SMALL) @ g.flatten(F), g.div(SMALL, F).ravel(), atol=1e-12)
    E = random_edge(SMALL, rng)
    np.testing.assert_allclose(g.curl_edge_to_face_matrix(SMALL) @ g.flatten(E),
                               g.flatten(g.curl_edge_to_face(SMALL, E)), atol=1e-12)
    phi = rng.standard_normal(SMALL.shape)
    D = ("x-", "z+")
    np.testing.assert_allclose(g.grad_matrix(SMALL, D) @ phi.ravel(),
                               g.flatten(g.grad(SMALL, phi, {f: ("dirichlet", 0.0) for f in D})), atol=1e-12)
    alphas = {"x-": -1.0, "y+": -1.0}
    ghosts = {f: (a, 0.0) for f, a in alphas.items()}
    np.testing.assert_allclose(g.curl_face_to_edge_matrix(SMALL, alphas) @ g.flatten(F),
                               g.flatten(g.curl_face_to_edge(SMALL, F, ghosts)), atol=1e-12)


def test_pad_ghost_rule():
    a = np.arange(6.0).reshape(2, 3, 1)
    p = g.pad_ghost(a, 1, lo=(-1.0, 2.0), hi=(1.0, 0.0))
    assert p.shape == (2, 5, 1)
    np.testing.assert_array_equal(p[:, 0, 0], -a[:, 0, 0] + 2.0)
    np.testing.assert_array_equal(p[:, -1, 0], a[:, -1, 0])


def test_integrals():
    gr = Grid((4, 4, 4), (2.0, 1.0, 3.0))
    X, Y, Z = gr.cell_centers()
    assert g.volume_integral(gr, X + 0 * Y * Z) == pytest.approx(2.0**2 / 2 * 1.0 * 3.0)
    assert g.surface_integral(gr, 1.0) == pytest.approx(2 * (2 + 6 + 3))


@given(st.integers(0, 1000))
def test_face_inner_symmetric_positive(seed):
    rng = np.random.default_rng(seed)
    F, G = random_face(SMALL, rng), random_face(SMALL, rng)
    assert g.face_inner(SMALL, F, G) == pytest.approx(g.face_inner(SMALL, G, F))
    assert g.face_inner(SMALL, F, F) > 0


def test_validate_missing_theta_names_face(grid8):
    spec = BoundarySpec.uniform(theta_B={f: (lambda t, x, y, z: 1.0) for f in FACES if f != "y+"})
    rep = g.validate_boundary_spec(spec, grid8)
    assert not rep["passed"]
    assert any("y+" in v for v in rep["violations"])


def test_validate_normal_component_of_b_tau(grid8):
    one = lambda t, x, y, z: 1.0  # noqa: E731
    spec = BoundarySpec.uniform(theta_B={f: one for f in FACES},
                                b_tau={"z+": lambda t, x, y, z: (0.0, 0.0, 1.0 + 0 * x)})
    rep = g.validate_boundary_spec(spec, grid8)
    assert any("normal component" in v for v in rep["violations"])


def test_validate_zero_flux_compatibility(grid8):
    one = lambda t, x, y, z: 1.0  # noqa: E731
    spec = BoundarySpec.uniform(magnetic="normal", theta_B={f: one for f in FACES}, b_nu={"z+": one})
    rep = g.validate_boundary_spec(spec, grid8)
    assert any("zero-flux" in v for v in rep["violations"])
    # b_nu is B . n with the outward normal: a uniform vertical field gives +1 and -1
    ok = BoundarySpec.uniform(magnetic="normal", theta_B={f: one for f in FACES},
                              b_nu={"z+": one, "z-": lambda t, x, y, z: -1.0})
    assert g.validate_boundary_spec(ok, grid8)["passed"]


def test_validate_rejects_bad_tags(grid8):
    spec = BoundarySpec(faces={f: FaceBC(velocity="navier") for f in FACES})
    rep = g.validate_boundary_spec(spec, grid8)
    assert any("navier" in v for v in rep["violations"])


def test_tangential_field_is_n_cross_b_tau(grid8):
    # b_tau = B x n for B = (1, 2, 3) on z+: tangential B = (1, 2, 0)
    B = np.array([1.0, 2.0, 3.0])
    n = np.array([0.0, 0.0, 1.0])
    bt = np.cross(B, n)
    spec = BoundarySpec.uniform(b_tau={"z+": lambda t, x, y, z: tuple(v + 0 * x for v in bt)})
    assert np.allclose(spec.tangential_field(grid8, "z+", 0.0, 0), 1.0)
    assert np.allclose(spec.tangential_field(grid8, "z+", 0.0, 1), 2.0)


@given(st.floats(0, 1e6, allow_nan=False), st.integers(0, 1000))
def test_dump_roundtrip_bit_exact(tmp_path_factory, t, seed):
    rng = np.random.default_rng(seed)
    gr = Grid((3, 4, 2), (1.0, 2.0, 0.5), (0.1, 0.2, 0.3))
    st_ = FluidState(t, rng.random(gr.shape), rng.random(gr.shape) + 0.1, random_face(gr, rng), random_face(gr, rng))
    path = str(tmp_path_factory.mktemp("dump") / "s")
    g.write_dump(path, gr, st_)
    gr2, st2 = g.read_dump(path)
    assert gr2 == gr
    assert st2.t == t
    for a, b in zip([st_.rho, st_.theta, *st_.u, *st_.B], [st2.rho, st2.theta, *st2.u, *st2.B]):
        assert np.array_equal(a, b)


def test_state_check_flags_divergence(grid8, rng):
    s = FluidState.at_rest(grid8, B=random_face(grid8, rng))
    assert any("div B" in p for p in s.check(grid8))
