import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from algstab.assembly import (
    assemble, export_matrix_market, interpolate, load_vector, matrix_pattern, p1_gradients,
)
from algstab.mesh import GridSpec, Mesh, adjacency, build_grid
from algstab.problems import ProblemData, _const, catalog


def _node(mesh, ne, ix, iy):
    v = mesh.vertices * ne
    return int(np.flatnonzero(np.hypot(v[:, 0] - ix, v[:, 1] - iy) < 1e-9)[0])


def _data(eps=1.0, b=(0.0, 0.0), c=0.0, g=0.0):
    return ProblemData(eps, b, _const(c), _const(g), _const(0.0), c)


def test_grid4_entries_for_example2():
    """Entries around the two patch orientations of Grid 4 with b = (1, 0), c = 0."""
    ne, eps = 8, 1e-3
    h = 1 / ne
    mesh = build_grid(GridSpec(4, ne))
    A = assemble(mesh, catalog(2, eps)).A.toarray()
    P = {name: _node(mesh, ne, *xy) for name, xy in dict(
        A=(3, 3), B=(3, 2), C=(4, 3), D=(3, 4), E=(2, 4), F=(2, 3), G=(2, 2),
        H=(3, 1), I=(4, 1), J=(4, 2)).items()}

    def a(p, q):
        return A[P[p], P[q]]

    for pair in ("AB", "AD", "HB"):
        assert a(*pair) == pytest.approx(-eps + h / 6, rel=1e-12)
    for pair in ("AC", "FA", "BJ", "GB"):
        assert a(*pair) == pytest.approx(-eps + h / 3, rel=1e-12)
    for pair in ("BA", "DA", "BH"):
        assert a(*pair) == pytest.approx(-eps - h / 6, rel=1e-12)
    for pair in ("CA", "AF", "JB", "BG"):
        assert a(*pair) == pytest.approx(-eps - h / 3, rel=1e-12)
    for pair in ("EA", "GA", "BC", "BI"):
        assert a(*pair) == pytest.approx(h / 6, rel=1e-12)
    for pair in ("AE", "AG", "CB", "IB"):
        assert a(*pair) == pytest.approx(-h / 6, rel=1e-12)
    assert a("A", "A") == pytest.approx(4 * eps, rel=1e-12)
    assert a("B", "B") == pytest.approx(4 * eps, rel=1e-12)


def test_grid1_laplacian_is_five_point_stencil():
    ne = 6
    mesh = build_grid(GridSpec(1, ne))
    A = assemble(mesh, _data()).A.toarray()
    i = _node(mesh, ne, 3, 3)
    expect = {(0, 0): 4.0, (1, 0): -1.0, (-1, 0): -1.0, (0, 1): -1.0, (0, -1): -1.0,
              (1, 1): 0.0, (-1, -1): 0.0}
    for (dx, dy), val in expect.items():
        assert A[i, _node(mesh, ne, 3 + dx, 3 + dy)] == pytest.approx(val, abs=1e-13)


@pytest.mark.parametrize("kind", [1, 4, 5])
def test_mass_and_load_totals(kind):
    mesh = build_grid(GridSpec(kind, 6, 0.8))
    sysm = assemble(mesh, _data(eps=1e-30, c=1.0, g=1.0))
    M = sysm.A.toarray()
    assert M.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(M, M.T, atol=1e-15)
    assert load_vector(mesh, _data(g=1.0)).sum() == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("kind", [1, 4, 5])
def test_constants_in_kernel_without_reaction(kind):
    mesh = build_grid(GridSpec(kind, 8, 0.8))
    A = assemble(mesh, catalog(2, 0.3)).A
    rows = (A @ np.ones(mesh.n_nodes))[: mesh.n_interior]
    assert np.abs(rows).max() < 1e-13


@pytest.mark.parametrize("kind", [1, 4, 5])
def test_galerkin_consistent_for_linear_solution(kind):
    mesh = build_grid(GridSpec(kind, 8, 0.8))
    p = catalog(2, 1e-3)
    s = assemble(mesh, p)
    r = (s.A @ interpolate(mesh, p.exact))[: mesh.n_interior] - s.rhs
    assert np.abs(r).max() < 1e-14


def test_example1_load_quadrature_is_converged():
    mesh = build_grid(GridSpec(1, 16))
    p = catalog(1)
    g4 = load_vector(mesh, p, 4)[: mesh.n_interior]
    g5 = load_vector(mesh, p, 5)[: mesh.n_interior]
    assert np.all(np.abs(g5 - g4) < 1e-3 * np.abs(g4))


def test_gradients_reproduce_linear_functions():
    mesh = build_grid(GridSpec(5, 4, 0.8))
    grads, areas = p1_gradients(mesh)
    u = 2.0 - 3.0 * mesh.vertices[:, 0] + 0.5 * mesh.vertices[:, 1]
    g = np.einsum("tk,tkd->td", u[mesh.triangles], grads)
    assert np.allclose(g, [-3.0, 0.5])
    assert areas.sum() == pytest.approx(1.0)


def test_pattern_maps():
    mesh = build_grid(GridSpec(4, 4))
    adj = adjacency(mesh)
    pat = matrix_pattern(adj)
    assert np.array_equal(pat.rows[pat.rev], pat.cols)
    assert np.array_equal(pat.cols[pat.rev], pat.rows)
    M = pat.from_pairs(np.arange(len(pat.rows), dtype=float) - 3)
    assert np.allclose(M.sum(axis=1), 0)
    with pytest.raises(ValueError):
        pat.positions([0], [mesh.n_nodes - 1])


def test_degenerate_and_nonfinite_rejected():
    mesh = build_grid(GridSpec(1, 2))
    v = mesh.vertices.copy()
    v[0] = v[1]  # collapse the centre onto a corner
    with pytest.raises(ValueError):
        assemble(Mesh(v, mesh.triangles, 1), catalog(2))
    bad = ProblemData(1.0, (0.0, 0.0), lambda a, b: np.full(np.shape(a), np.nan), _const(0.0),
                      _const(0.0), 0.0)
    with pytest.raises(ValueError):
        assemble(mesh, bad)


def test_matrix_market_roundtrip(tmp_path):
    mesh = build_grid(GridSpec(4, 4))
    A = assemble(mesh, catalog(1)).A
    export_matrix_market(A, tmp_path / "a.mtx")
    back = sp.csr_matrix(scipy.io.mmread(str(tmp_path / "a.mtx")))
    assert abs(back - A).max() == 0
