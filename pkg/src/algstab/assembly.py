"""Galerkin assembly for continuous P1 elements.

The matrix carries the full finite element pattern (S_i plus the diagonal) in
every row, boundary rows included, because the limiters read a_ij and a_ji for
boundary-coupled pairs. Dirichlet rows are only replaced inside the solver.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import Adjacency, Mesh, adjacency
from .problems import ProblemData
from .quadrature import triangle_rule

DEGENERATE_AREA = 1e-14


@dataclass(frozen=True, eq=False)
class MatrixPattern:
    """CSR layout of the P1 pattern plus maps for the directed pairs (i, j), j in S_i.

    ``off[k]`` is the CSR data position of pair k (pairs in adjacency order),
    ``rev[k]`` the pair index of (j, i) and ``diag[i]`` the position of (i, i).
    """

    indptr: np.ndarray
    indices: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    off: np.ndarray
    rev: np.ndarray
    diag: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def positions(self, r, c) -> np.ndarray:
        """CSR data positions of entries (r, c); all must lie in the pattern."""
        n = self.n
        keys = np.repeat(np.arange(n), np.diff(self.indptr)) * n + self.indices
        want = np.asarray(r, dtype=np.int64) * n + np.asarray(c, dtype=np.int64)
        pos = np.searchsorted(keys, want)
        if np.any(pos >= len(keys)) or np.any(keys[np.minimum(pos, len(keys) - 1)] != want):
            raise ValueError("entry outside the sparsity pattern")
        return pos

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        n = self.n
        return sp.csr_matrix((np.asarray(data, dtype=float), self.indices.copy(), self.indptr.copy()),
                             shape=(n, n))

    def from_pairs(self, offdiag: np.ndarray) -> sp.csr_matrix:
        """Matrix with the given off-diagonal pair values and zero row sums."""
        data = np.zeros(self.nnz)
        data[self.off] = offdiag
        data[self.diag] = -np.bincount(self.rows, weights=offdiag, minlength=self.n)
        return self.matrix(data)

    def pair_values(self, M: sp.csr_matrix) -> np.ndarray:
        """Off-diagonal entries m_ij of a matrix stored in this pattern, in pair order."""
        if M.nnz != self.nnz or not np.array_equal(M.indices, self.indices):
            M = M.tocsr()
            return np.asarray(M[self.rows, self.cols]).ravel()
        return M.data[self.off]


def matrix_pattern(adj: Adjacency) -> MatrixPattern:
    n = len(adj.nbr_ptr) - 1
    rows = adj.pair_rows
    cols = adj.nbr_idx
    all_r = np.concatenate((rows, np.arange(n)))
    all_c = np.concatenate((cols, np.arange(n)))
    order = np.lexsort((all_c, all_r))
    indices = all_c[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(all_r, minlength=n), out=indptr[1:])
    pos = np.empty(len(order), dtype=np.int64)
    pos[order] = np.arange(len(order))
    off = pos[: len(rows)]
    diag = pos[len(rows):]
    pair_keys = rows * n + cols  # sorted, since pairs come in CSR order
    rev = np.searchsorted(pair_keys, cols * n + rows)
    return MatrixPattern(indptr, indices, rows, cols, off, rev, diag)


def p1_gradients(mesh: Mesh):
    """Constant gradients of the three barycentric functions per triangle and areas.

    Returns ``grads`` with shape (T, 3, 2) and ``areas`` with shape (T,).
    """
    p = mesh.vertices[mesh.triangles]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    grads = np.empty((len(p), 3, 2))
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        grads[:, k, 0] = (p[:, a, 1] - p[:, b, 1]) / area2
        grads[:, k, 1] = (p[:, b, 0] - p[:, a, 0]) / area2
    return grads, 0.5 * area2


def quadrature_points(mesh: Mesh, degree: int):
    """Physical quadrature points (T, q, 2), barycentric values (q, 3), weights (q,)."""
    bary, weights = triangle_rule(degree)
    p = mesh.vertices[mesh.triangles]
    pts = np.einsum("qk,tkd->tqd", bary, p)
    return pts, bary, weights


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """A (N x N, all rows), load g_i for interior nodes and Dirichlet values."""

    A: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: np.ndarray
    pattern: MatrixPattern
    mesh: Mesh
    adj: Adjacency
    problem: ProblemData

    @property
    def n_interior(self) -> int:
        return self.mesh.n_interior


def local_matrices(mesh: Mesh, data: ProblemData, degree: int = 4) -> np.ndarray:
    """Element matrices K[t, a, b] = a(phi_b, phi_a) restricted to triangle t."""
    grads, areas = p1_gradients(mesh)
    pts, bary, w = quadrature_points(mesh, degree)
    x, y = pts[..., 0], pts[..., 1]

    K = data.epsilon * areas[:, None, None] * np.einsum("tad,tbd->tab", grads, grads)
    bx, by = data.convection_at(x, y)
    # (b . grad phi_b) at each quadrature point: (T, q, 3)
    bgrad = bx[..., None] * grads[:, None, :, 0] + by[..., None] * grads[:, None, :, 1]
    K += areas[:, None, None] * np.einsum("q,qa,tqb->tab", w, bary, bgrad)
    c = np.asarray(data.reaction(x, y), dtype=float)
    K += areas[:, None, None] * np.einsum("q,tq,qa,qb->tab", w, c, bary, bary)
    return K


def load_vector(mesh: Mesh, data: ProblemData, degree: int = 4) -> np.ndarray:
    """(g, phi_i) for all nodes."""
    _, areas = p1_gradients(mesh)
    pts, bary, w = quadrature_points(mesh, degree)
    g = np.asarray(data.source(pts[..., 0], pts[..., 1]), dtype=float)
    local = areas[:, None] * np.einsum("q,tq,qa->ta", w, g, bary)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def assemble(mesh: Mesh, data: ProblemData, adj: Adjacency | None = None,
             quad_degree: int = 4) -> GalerkinSystem:
    """Assemble the Galerkin matrix, interior load vector and Dirichlet values."""
    if np.any(mesh.signed_areas() < DEGENERATE_AREA):
        raise ValueError("degenerate triangle (area below 1e-14)")
    adj = adjacency(mesh) if adj is None else adj
    pattern = matrix_pattern(adj)

    K = local_matrices(mesh, data, quad_degree)
    t = mesh.triangles
    r = np.repeat(t, 3, axis=1)   # (T, 9): a-major
    c = np.tile(t, (1, 3))
    pos = pattern.positions(r.ravel(), c.ravel())
    values = np.bincount(pos, weights=K.reshape(-1), minlength=pattern.nnz)
    if not np.all(np.isfinite(values)):
        raise ValueError("problem data produced non-finite matrix entries")
    A = pattern.matrix(values)

    g = load_vector(mesh, data, quad_degree)
    m = mesh.n_interior
    xb = mesh.vertices[m:]
    ub = np.asarray(data.dirichlet(xb[:, 0], xb[:, 1]), dtype=float)
    return GalerkinSystem(A, g[:m], ub, pattern, mesh, adj, data)


def interpolate(mesh: Mesh, f) -> np.ndarray:
    """Nodal values (f(x_1), ..., f(x_N)) of the Lagrange interpolant."""
    v = mesh.vertices
    return np.asarray(f(v[:, 0], v[:, 1]), dtype=float) * np.ones(mesh.n_nodes)


def export_matrix_market(A: sp.spmatrix, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), precision=17)
