import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import reference as ref
from algstab.assembly import assemble
from algstab.mesh import GridSpec, adjacency, build_grid, patch_mu_all
from algstab.problems import catalog
from algstab.stabilizers import (
    Stabilizer, StabilizerKind, artificial_diffusion, bjk_limiter, build_stabilization,
    kuzmin_limiter, muas_stabilizer, smuas_stabilizer,
)

MESHES = [(1, 0.1), (4, 0.1), (5, 0.1), (5, 0.8)]
DATA = [(1, 1e-8), (1, 10.0), (2, 1e-3), (5, 1e-2)]
METHODS = ["kuzmin", "bjk", "muas", "smuas"]


def _setup(kind, shift, example, eps, ne=4):
    mesh = build_grid(GridSpec(kind, ne, shift))
    s = assemble(mesh, catalog(example, eps))
    return mesh, s


def _fields(mesh, rng):
    n = mesh.n_nodes
    x, y = mesh.vertices.T
    yield rng.uniform(-1, 1, n)
    yield np.round(rng.uniform(-1, 1, n), 1)  # many equal values
    yield np.sin(7 * x) * np.cos(5 * y)
    yield np.zeros(n)


@pytest.mark.parametrize("kind,shift", MESHES)
@pytest.mark.parametrize("example,eps", DATA)
def test_matches_loop_reference(kind, shift, example, eps):
    mesh, s = _setup(kind, shift, example, eps)
    A = s.A.toarray()
    nb = ref.neighbours(mesh)
    M = mesh.n_interior
    mu = patch_mu_all(mesh, adjacency(mesh))
    rng = np.random.default_rng(11)
    for U in _fields(mesh, rng):
        expected = {
            "kuzmin": ref.kuzmin(A, U, nb, M),
            "bjk": ref.bjk(A, U, nb, M, mu),
            "muas": ref.muas(A, U, nb, M),
            "smuas": ref.smuas(mesh, A, U, nb, M),
        }
        for method, B_ref in expected.items():
            B = Stabilizer(StabilizerKind(method), mesh, s.A)(U).B.toarray()
            assert np.allclose(B, B_ref, rtol=1e-10, atol=1e-13 * np.abs(A).max()), method
        unit = Stabilizer(StabilizerKind("smuas", weights="unit"), mesh, s.A)(U).B.toarray()
        assert np.allclose(unit, ref.smuas(mesh, A, U, nb, M, "unit"), rtol=1e-10, atol=1e-14)


def test_artificial_diffusion_definition():
    mesh, s = _setup(4, 0.1, 1, 1e-2)
    A = s.A.toarray()
    D = artificial_diffusion(s.A).toarray()
    assert np.allclose(D, ref.diffusion(A, ref.neighbours(mesh)))
    assert np.allclose(D, D.T)


@settings(max_examples=40, deadline=None)
@given(mesh_i=st.integers(0, len(MESHES) - 1), data_i=st.integers(0, len(DATA) - 1),
       method=st.sampled_from(METHODS + ["smuas-unit"]), seed=st.integers(0, 2**32 - 1),
       scale=st.floats(1e-6, 1e6))
def test_framework_properties(mesh_i, data_i, method, seed, scale):
    kind, shift = MESHES[mesh_i]
    mesh, s = _setup(kind, shift, *DATA[data_i])
    weights = "unit" if method == "smuas-unit" else "matrix"
    stab = Stabilizer(StabilizerKind(method.split("-")[0], weights=weights), mesh, s.A)
    U = scale * np.random.default_rng(seed).uniform(-1, 1, mesh.n_nodes)
    B = stab(U).B.toarray()
    a_scale = np.abs(s.A.toarray()).max()
    assert np.array_equal(B, B.T)
    off = B - np.diag(np.diag(B))
    assert off.max() <= 0
    assert np.abs(B.sum(axis=1)).max() <= 1e-12 * a_scale
    assert U @ B @ U >= -1e-12 * a_scale * (U @ U)
    pat = stab.pattern
    assert np.all(np.abs(B[pat.rows, pat.cols]) <= stab.consistency_bound() * (1 + 1e-12))


@settings(max_examples=30, deadline=None)
@given(mesh_i=st.integers(0, len(MESHES) - 1), method=st.sampled_from(METHODS),
       seed=st.integers(0, 2**32 - 1), c=st.floats(-1e3, 1e3), s2=st.floats(1e-3, 1e3))
def test_invariance_under_affine_value_maps(mesh_i, method, seed, c, s2):
    """B depends on U only through differences and is invariant to positive scaling."""
    kind, shift = MESHES[mesh_i]
    mesh, s = _setup(kind, shift, 1, 1e-8)
    stab = Stabilizer(StabilizerKind(method), mesh, s.A)
    U = np.random.default_rng(seed).uniform(-1, 1, mesh.n_nodes)
    B0 = stab(U).B.toarray()
    B1 = stab(s2 * U + c).B.toarray()
    assert np.allclose(B0, B1, rtol=1e-7, atol=1e-9 * np.abs(B0).max() + 1e-15)


@pytest.mark.parametrize("kind,shift", MESHES)
@pytest.mark.parametrize("weights", ["matrix", "unit"])
def test_smuas_vanishes_for_linear_functions(kind, shift, weights):
    mesh, s = _setup(kind, shift, 1, 1e-8, ne=8)
    stab = Stabilizer(StabilizerKind("smuas", weights=weights), mesh, s.A)
    x, y = mesh.vertices.T
    for c in np.random.default_rng(5).uniform(-1, 1, (10, 3)):
        b = stab(c[0] + c[1] * x + c[2] * y).pairs
        assert np.abs(b).max() <= 1e-13 * np.abs(stab.a).max()


def test_kuzmin_does_not_preserve_linearity_on_grid4():
    mesh, s = _setup(4, 0.1, 2, 1e-8, ne=16)
    b = Stabilizer(StabilizerKind("kuzmin"), mesh, s.A)(mesh.vertices[:, 0]).pairs
    assert np.abs(b).max() > 1e-3 * np.abs(s.A.data).max()


def test_kuzmin_tie_takes_smaller_factor():
    # pure diffusion: a_ij = a_ji for every pair, so every edge is a tie
    from algstab.problems import ProblemData, _const
    mesh = build_grid(GridSpec(1, 4))
    p = ProblemData(1.0, (0.0, 0.0), _const(0.0), _const(0.0), _const(0.0), 0.0)
    s = assemble(mesh, p)
    U = np.random.default_rng(2).uniform(-1, 1, mesh.n_nodes)
    S = Stabilizer(StabilizerKind("kuzmin"), mesh, s.A)(U, diagnostics=True)
    assert np.allclose(S.factors, S.factors[Stabilizer(StabilizerKind("kuzmin"), mesh, s.A).pattern.rev])


def test_kuzmin_node_mu_and_pvariant():
    mesh, s = _setup(4, 0.1, 2, 1e-8, ne=8)
    U = np.random.default_rng(0).uniform(-1, 1, mesh.n_nodes)
    base = Stabilizer(StabilizerKind("kuzmin"), mesh, s.A)(U, diagnostics=True)
    big = Stabilizer(StabilizerKind("kuzmin", node_mu=np.full(mesh.n_nodes, 1e9)), mesh, s.A)(
        U, diagnostics=True)
    assert np.all(big.R_plus >= base.R_plus) and np.all(big.R_minus >= base.R_minus)
    assert np.all(big.R_plus[(base.Q_plus > 0)] == 1.0)
    bjkp = Stabilizer(StabilizerKind("kuzmin", pvariant="bjk-p"), mesh, s.A)(U, diagnostics=True)
    assert np.all(bjkp.P_plus >= base.P_plus - 1e-15)
    assert np.all(bjkp.P_minus <= base.P_minus + 1e-15)


def test_boundary_rows_have_unit_limiters():
    mesh, s = _setup(5, 0.8, 1, 1e-8)
    U = np.random.default_rng(1).uniform(-1, 1, mesh.n_nodes)
    m = mesh.n_interior
    for method in METHODS:
        S = Stabilizer(StabilizerKind(method), mesh, s.A)(U, diagnostics=True)
        assert np.all(S.R_plus[m:] == 1.0) and np.all(S.R_minus[m:] == 1.0)
        assert np.all((S.R_plus >= 0) & (S.R_plus <= 1))
        assert np.all((S.R_minus >= 0) & (S.R_minus <= 1))


def test_wrappers_agree_with_stabilizer():
    mesh, s = _setup(5, 0.8, 1, 1e-2)
    adj = adjacency(mesh)
    pat = Stabilizer(StabilizerKind("none"), mesh, s.A).pattern
    U = np.random.default_rng(4).uniform(-1, 1, mesh.n_nodes)
    m = mesh.n_interior
    D = artificial_diffusion(s.A, pat)
    st_b = Stabilizer(StabilizerKind("bjk"), mesh, s.A)
    cases = {
        "kuzmin": kuzmin_limiter(s.A, D, U, pat, m),
        "bjk": bjk_limiter(st_b.diffusion_matrix(), U, pat, m, patch_mu_all(mesh, adj)),
        "muas": muas_stabilizer(s.A, U, pat, m),
        "smuas": smuas_stabilizer(mesh, s.A, U, adj),
    }
    for method, S in cases.items():
        expect = build_stabilization(StabilizerKind(method), mesh, s.A, U).B
        assert abs(S.B - expect).max() < 1e-14


def test_bjk_constant_mu_and_errors():
    mesh, s = _setup(1, 0.1, 1, 1e-8)
    pat = Stabilizer(StabilizerKind("none"), mesh, s.A).pattern
    U = np.random.default_rng(4).uniform(-1, 1, mesh.n_nodes)
    # on Grid 1 the patch constant is 2 everywhere
    a = Stabilizer(StabilizerKind("bjk", mu=2.0), mesh, s.A)(U).B
    b = Stabilizer(StabilizerKind("bjk"), mesh, s.A)(U).B
    assert abs(a - b).max() < 1e-14
    with pytest.raises(ValueError):
        bjk_limiter(artificial_diffusion(s.A, pat), U, pat, mesh.n_interior, 0.0)
    for bad in (dict(method="afc"), dict(method="bjk", mu=-1), dict(method="bjk", mu="hull"),
                dict(method="smuas", weights="ones"), dict(method="kuzmin", pvariant="x")):
        with pytest.raises(ValueError):
            StabilizerKind(**bad)


@pytest.mark.parametrize("kind,shift", [(1, 0.1), (4, 0.1), (5, 0.8)])
@pytest.mark.parametrize("method", METHODS)
def test_flux_is_lipschitz_across_ties(kind, shift, method):
    """b_ij(U)(u_j - u_i) has no jump when u_k crosses a neighbour value."""
    mesh, s = _setup(kind, shift, 1, 1e-3, ne=6)
    stab = Stabilizer(StabilizerKind(method), mesh, s.A)
    pat = stab.pattern

    def flux(V):
        return stab(V).pairs * (V[pat.cols] - V[pat.rows])

    rng = np.random.default_rng(7)
    L = 20 * np.abs(stab.a).max()
    for _ in range(20):
        U = np.round(rng.uniform(-1, 1, mesh.n_nodes), 1)  # many exact ties
        k = int(rng.integers(mesh.n_interior))
        F0 = flux(U)
        for eta in (1e-4, 1e-6, -1e-4, -1e-6):
            V = U.copy()
            V[k] += eta
            assert np.abs(flux(V) - F0).max() <= L * abs(eta)
