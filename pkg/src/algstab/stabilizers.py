"""Solution-dependent artificial diffusion matrices B(U).

Four constructions are provided: AFC with the Kuzmin limiter, AFC with the
BJK limiter, MUAS and SMUAS. Every B(U) is symmetric, has nonpositive
off-diagonal entries, zero row sums and the P1 sparsity pattern.

All per-edge quantities are stored for directed pairs (i, j), j in S_i, in the
CSR order of :class:`~algstab.assembly.MatrixPattern`; ``rev`` maps a pair to
its transpose.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import MatrixPattern, matrix_pattern
from .mesh import Adjacency, Mesh, adjacency, patch_mu_all, upwind_simplices

METHODS = ("none", "kuzmin", "bjk", "muas", "smuas")


@dataclass(frozen=True, eq=False)
class StabilizerKind:
    """Which B(U) to build, with method options.

    mu: BJK patch constants, ``"patch"`` for the convex-hull formula or a
    positive number used at every node.
    weights: SMUAS weights, ``"matrix"`` (p = max{a_ij, 0, a_ji},
    q = max{|a_ij|, a_ji}) or ``"unit"`` (p = q = 1).
    pvariant: Kuzmin only; ``"bjk-p"`` sums P over all of S_i.
    node_mu: Kuzmin only; optional per-node factor multiplying Q/P in R.
    """

    method: str = "none"
    mu: str | float = "patch"
    weights: str = "matrix"
    pvariant: str = "standard"
    node_mu: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.weights not in ("matrix", "unit"):
            raise ValueError(f"unknown weight mode {self.weights!r}")
        if self.pvariant not in ("standard", "bjk-p"):
            raise ValueError(f"unknown P variant {self.pvariant!r}")
        if self.mu != "patch":
            try:
                value = float(self.mu)
            except (TypeError, ValueError):
                raise ValueError(f"mu must be 'patch' or a number, got {self.mu!r}") from None
            if not value > 0:
                raise ValueError(f"mu must be positive, got {self.mu!r}")


@dataclass(eq=False)
class StabilizationMatrix:
    """B(U) plus, on request, the nodal limiter quantities."""

    B: sp.csr_matrix
    pairs: np.ndarray
    P_plus: np.ndarray | None = None
    P_minus: np.ndarray | None = None
    Q_plus: np.ndarray | None = None
    Q_minus: np.ndarray | None = None
    R_plus: np.ndarray | None = None
    R_minus: np.ndarray | None = None
    factors: np.ndarray | None = None  # alpha_ij (AFC) or beta_ij (MUAS/SMUAS)


def _pos(v):
    return np.maximum(v, 0.0)


def _neg(v):
    return np.minimum(v, 0.0)


def _limit_ratio(Q, P, mu=1.0):
    """min{1, mu Q/P}, and 1 wherever P vanishes."""
    R = np.ones_like(P)
    nz = P != 0
    mu = np.broadcast_to(mu, P.shape)
    R[nz] = np.minimum(1.0, mu[nz] * Q[nz] / P[nz])
    return R


def _node_sum(pat: MatrixPattern, values):
    return np.bincount(pat.rows, weights=values, minlength=pat.n)


def _entries(A, pat: MatrixPattern):
    a = pat.pair_values(A)
    return a, a[pat.rev]


def artificial_diffusion_pairs(a, at):
    return -np.maximum(np.maximum(a, 0.0), at)


def artificial_diffusion(A: sp.csr_matrix, pattern: MatrixPattern | None = None) -> sp.csr_matrix:
    """D with d_ij = d_ji = -max{a_ij, 0, a_ji} and zero row sums."""
    pat = pattern if pattern is not None else _pattern_of(A)
    a, at = _entries(A, pat)
    return pat.from_pairs(artificial_diffusion_pairs(a, at))


def _pattern_of(A) -> MatrixPattern:
    A = sp.csr_matrix(A)
    n = A.shape[0]
    coo = A.tocoo()
    keep = coo.row != coo.col
    rows, cols = coo.row[keep], coo.col[keep]
    # symmetric closure of the stored pattern
    rr = np.concatenate((rows, cols))
    cc = np.concatenate((cols, rows))
    key = np.unique(rr.astype(np.int64) * n + cc)
    rows, cols = np.divmod(key, n)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=ptr[1:])
    return matrix_pattern(Adjacency(ptr, cols, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)))


def bjk_modified_entries(a, at, pat: MatrixPattern, n_interior: int):
    """Copy of (a_ij, a_ji) with a_ji := 0 whenever a_ij < 0, i interior, j boundary."""
    a = a.copy()
    hit = (pat.rows < n_interior) & (pat.cols >= n_interior) & (a < 0)
    a[pat.rev[hit]] = 0.0
    return a, a[pat.rev]


def _finish(pat, b, diag, **extra):
    out = StabilizationMatrix(pat.from_pairs(b), b)
    if diag:
        for key, value in extra.items():
            setattr(out, key, value)
    return out


def _kuzmin_pairs(pat, n_interior, a, at, d, U, mu=1.0, pvariant="standard", diagnostics=False):
    I, J = pat.rows, pat.cols
    f = d * (U[J] - U[I])
    fp, fm = _pos(f), _neg(f)
    upwind = at <= a
    if pvariant == "bjk-p":
        Pp, Pm = _node_sum(pat, fp), _node_sum(pat, fm)
    else:
        Pp, Pm = _node_sum(pat, fp * upwind), _node_sum(pat, fm * upwind)
    Qp, Qm = -_node_sum(pat, fm), -_node_sum(pat, fp)
    Rp, Rm = _limit_ratio(Qp, Pp, mu), _limit_ratio(Qm, Pm, mu)
    Rp[n_interior:] = 1.0
    Rm[n_interior:] = 1.0
    at_ = np.where(f > 0, Rp[I], np.where(f < 0, Rm[I], 1.0))
    at_rev = at_[pat.rev]
    # the upwind end of each edge decides; equal entries take the smaller factor
    alpha = np.where(a > at, at_, np.where(a < at, at_rev, np.minimum(at_, at_rev)))
    b = (1.0 - alpha) * d
    return _finish(pat, b, diagnostics, P_plus=Pp, P_minus=Pm, Q_plus=Qp, Q_minus=Qm,
                   R_plus=Rp, R_minus=Rm, factors=alpha)


def _bjk_pairs(pat, n_interior, d, U, mu, diagnostics=False):
    I, J = pat.rows, pat.cols
    f = d * (U[J] - U[I])
    fp, fm = _pos(f), _neg(f)
    Pp, Pm = _node_sum(pat, fp), _node_sum(pat, fm)
    # pairs are grouped by row, so reduceat per row gives max/min over S_i
    uj = U[J]
    row_start = np.searchsorted(I, np.arange(pat.n))
    umax = np.maximum(U, np.maximum.reduceat(uj, row_start))
    umin = np.minimum(U, np.minimum.reduceat(uj, row_start))
    q = _node_sum(pat, d)
    Qp, Qm = q * (U - umax), q * (U - umin)
    Rp, Rm = _limit_ratio(Qp, Pp, mu), _limit_ratio(Qm, Pm, mu)
    Rp[n_interior:] = 1.0
    Rm[n_interior:] = 1.0
    at_ = np.where(f > 0, Rp[I], np.where(f < 0, Rm[I], 1.0))
    alpha = np.minimum(at_, at_[pat.rev])
    b = (1.0 - alpha) * d
    return _finish(pat, b, diagnostics, P_plus=Pp, P_minus=Pm, Q_plus=Qp, Q_minus=Qm,
                   R_plus=Rp, R_minus=Rm, factors=alpha)


def _upwind_type_pairs(pat, n_interior, a, at, U, Pp, Pm, Qp, Qm, diagnostics):
    """Shared tail of MUAS and SMUAS: R, beta and b_ij = -max{beta_ij a_ij, 0, beta_ji a_ji}."""
    I, J = pat.rows, pat.cols
    Rp, Rm = _limit_ratio(Qp, Pp), _limit_ratio(Qm, Pm)
    Rp[n_interior:] = 1.0
    Rm[n_interior:] = 1.0
    ui, uj = U[I], U[J]
    beta = np.where(ui > uj, 1.0 - Rp[I], np.where(ui < uj, 1.0 - Rm[I], 0.0))
    beta[I >= n_interior] = 0.0
    ba = beta * a
    b = -np.maximum(np.maximum(ba, 0.0), ba[pat.rev])
    return _finish(pat, b, diagnostics, P_plus=Pp, P_minus=Pm, Q_plus=Qp, Q_minus=Qm,
                   R_plus=Rp, R_minus=Rm, factors=beta)


def _muas_pairs(pat, n_interior, a, at, U, diagnostics=False):
    I, J = pat.rows, pat.cols
    du = U[I] - U[J]
    s = np.maximum(np.abs(a), at)
    w = np.where(a > 0, a, 0.0)
    Pp, Pm = _node_sum(pat, w * _pos(du)), _node_sum(pat, w * _neg(du))
    Qp, Qm = _node_sum(pat, s * _pos(-du)), _node_sum(pat, s * _neg(-du))
    return _upwind_type_pairs(pat, n_interior, a, at, U, Pp, Pm, Qp, Qm, diagnostics)


def smuas_weights(a, at, mode="matrix"):
    """(p_ij, q_ij) per pair; p is already zero where neither a_ij nor a_ji is positive."""
    active = (a > 0) | (at > 0)
    if mode == "matrix":
        p = np.maximum(np.maximum(a, 0.0), at)
        q = np.maximum(np.abs(a), at)
    elif mode == "unit":
        p = np.ones_like(a)
        q = np.ones_like(a)
    else:
        raise ValueError(f"unknown weight mode {mode!r}")
    return np.where(active, p, 0.0), q


def _smuas_pairs(pat, n_interior, a, at, U, dx, p, q, diagnostics=False):
    """``dx`` holds u_i - u_ij per pair."""
    I, J = pat.rows, pat.cols
    du = U[I] - U[J]
    Pp = _node_sum(pat, p * (_pos(du) + _pos(dx)))
    Pm = _node_sum(pat, p * (_neg(du) + _neg(dx)))
    Qp = _node_sum(pat, q * (_pos(-du) + _pos(-dx)))
    Qm = _node_sum(pat, q * (_neg(-du) + _neg(-dx)))
    return _upwind_type_pairs(pat, n_interior, a, at, U, Pp, Pm, Qp, Qm, diagnostics)


def _extension_stencils(mesh: Mesh, adj: Adjacency):
    """Per pair: the three nodes of T_ij and coefficients c with
    u_ij - u_i = sum_k c_k (u_k - u_i); zero coefficients on boundary rows."""
    rows = adj.pair_rows
    cols = adj.nbr_idx
    T = upwind_simplices(mesh, adj)
    nodes = np.repeat(rows[:, None], 3, axis=1)
    coef = np.zeros((len(rows), 3))
    inner = np.flatnonzero(T >= 0)
    i = rows[inner]
    tri = mesh.triangles[T[inner]]
    # the two other corners of T_ij, then x_i - x_j = s e1 + t e2 by Cramer's rule
    others = np.where(tri == i[:, None], -1, tri)
    others = np.sort(others, axis=1)[:, 1:]
    v = mesh.vertices
    e1 = v[others[:, 0]] - v[i]
    e2 = v[others[:, 1]] - v[i]
    d = v[i] - v[cols[inner]]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    s = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
    t = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
    nodes[inner, 1:] = others
    coef[inner, 1] = s
    coef[inner, 2] = t
    coef[inner, 0] = -(s + t)
    return nodes, coef


def extension_operator(mesh: Mesh, adj: Adjacency) -> sp.csr_matrix:
    """Sparse map U -> (u_ij) over all directed pairs.

    u_ij = u_i + grad(u_h)|T_ij . (x_i - x_j) for interior i; rows of boundary
    nodes just return u_i.
    """
    rows = adj.pair_rows
    nodes, coef = _extension_stencils(mesh, adj)
    npairs = len(rows)
    # the coefficients of a stencil sum to zero, so u_ij = u_i + sum_k c_k u_k
    r = np.concatenate((np.arange(npairs), np.repeat(np.arange(npairs), 3)))
    c = np.concatenate((rows, nodes.ravel()))
    v = np.concatenate((np.ones(npairs), coef.ravel()))
    return sp.csr_matrix((v, (r, c)), shape=(npairs, mesh.n_nodes))


def smuas_extension_values(mesh: Mesh, adj: Adjacency, U) -> np.ndarray:
    """u_ij for every directed pair in CSR order (u_i on boundary rows)."""
    return extension_operator(mesh, adj) @ np.asarray(U, dtype=float)


class Stabilizer:
    """B(U) for a fixed mesh and Galerkin matrix; caches all U-independent data."""

    def __init__(self, kind: StabilizerKind, mesh: Mesh, A: sp.csr_matrix,
                 adj: Adjacency | None = None, pattern: MatrixPattern | None = None):
        self.kind = kind
        self.mesh = mesh
        self.adj = adjacency(mesh) if adj is None else adj
        self.pattern = matrix_pattern(self.adj) if pattern is None else pattern
        self.n_interior = mesh.n_interior
        pat = self.pattern
        self.a, self.at = _entries(A, pat)
        method = kind.method
        if method == "bjk":
            self.a_mod, self.at_mod = bjk_modified_entries(self.a, self.at, pat, self.n_interior)
            self.d = artificial_diffusion_pairs(self.a_mod, self.at_mod)
            if kind.mu == "patch":
                self.mu = patch_mu_all(mesh, self.adj)
            else:
                self.mu = np.full(mesh.n_nodes, float(kind.mu))
        else:
            self.d = artificial_diffusion_pairs(self.a, self.at)
        if method == "kuzmin":
            self.mu = np.ones(mesh.n_nodes) if kind.node_mu is None else np.asarray(kind.node_mu, float)
        if method == "smuas":
            self.ext_nodes, self.ext_coef = _extension_stencils(mesh, self.adj)
            self.p, self.q = smuas_weights(self.a, self.at, kind.weights)

    def diffusion_matrix(self) -> sp.csr_matrix:
        """The matrix D the method is built from (BJK: from the modified entries)."""
        return self.pattern.from_pairs(self.d)

    def consistency_bound(self) -> np.ndarray:
        """max{|a_ij|, |a_ji|} per pair, with the BJK-modified entries for BJK."""
        if self.kind.method == "bjk":
            return np.maximum(np.abs(self.a_mod), np.abs(self.at_mod))
        return np.maximum(np.abs(self.a), np.abs(self.at))

    def __call__(self, U, diagnostics: bool = False) -> StabilizationMatrix:
        U = np.asarray(U, dtype=float)
        pat, m, method = self.pattern, self.n_interior, self.kind.method
        if method == "none":
            b = np.zeros(len(pat.rows))
            return StabilizationMatrix(pat.from_pairs(b), b)
        if method == "kuzmin":
            return _kuzmin_pairs(pat, m, self.a, self.at, self.d, U, self.mu,
                                 self.kind.pvariant, diagnostics)
        if method == "bjk":
            return _bjk_pairs(pat, m, self.d, U, self.mu, diagnostics)
        if method == "muas":
            return _muas_pairs(pat, m, self.a, self.at, U, diagnostics)
        # difference form keeps u_i - u_ij accurate when |u| >> h |grad u|
        dx = -np.einsum("pk,pk->p", self.ext_coef, U[self.ext_nodes] - U[pat.rows][:, None])
        return _smuas_pairs(pat, m, self.a, self.at, U, dx, self.p, self.q, diagnostics)


def kuzmin_limiter(A, D, U, pattern: MatrixPattern, n_interior: int, mu=1.0,
                   pvariant: str = "standard", diagnostics: bool = True) -> StabilizationMatrix:
    """AFC with the Kuzmin limiter; ``mu`` may be a per-node array."""
    a, at = _entries(A, pattern)
    d = pattern.pair_values(D)
    U = np.asarray(U, dtype=float)
    return _kuzmin_pairs(pattern, n_interior, a, at, d, U, mu, pvariant, diagnostics)


def bjk_limiter(D, U, pattern: MatrixPattern, n_interior: int, mu,
                diagnostics: bool = True) -> StabilizationMatrix:
    """AFC with the BJK limiter. ``D`` must come from the boundary-modified matrix."""
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (pattern.n,))
    if np.any(mu[:n_interior] <= 0):
        raise ValueError("BJK constants mu_i must be positive")
    d = pattern.pair_values(D)
    return _bjk_pairs(pattern, n_interior, d, np.asarray(U, dtype=float), mu, diagnostics)


def muas_stabilizer(A, U, pattern: MatrixPattern, n_interior: int,
                    diagnostics: bool = True) -> StabilizationMatrix:
    a, at = _entries(A, pattern)
    return _muas_pairs(pattern, n_interior, a, at, np.asarray(U, dtype=float), diagnostics)


def smuas_stabilizer(mesh: Mesh, A, U, adj: Adjacency, weight_mode: str = "matrix",
                     diagnostics: bool = True) -> StabilizationMatrix:
    pat = matrix_pattern(adj)
    a, at = _entries(A, pat)
    U = np.asarray(U, dtype=float)
    p, q = smuas_weights(a, at, weight_mode)
    return Stabilizer(StabilizerKind("smuas", weights=weight_mode), mesh, A, adj, pat)(U, diagnostics)


def build_stabilization(kind: StabilizerKind, mesh: Mesh, A, U, adj: Adjacency | None = None,
                        diagnostics: bool = False) -> StabilizationMatrix:
    """One-shot B(U); use :class:`Stabilizer` when evaluating repeatedly."""
    return Stabilizer(kind, mesh, A, adj)(U, diagnostics)
