"""Error norms, convergence orders, DMP and local-extremum checks, and the oscillatory
grid functions on which the limiters switch off."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import interpolate, p1_gradients, quadrature_points
from .mesh import Adjacency, Mesh
from .problems import ProblemData
from .stabilizers import StabilizationMatrix, Stabilizer, StabilizerKind

ERROR_QUAD_DEGREE = 6


@dataclass(frozen=True)
class ErrorReport:
    l2: float
    h1semi: float
    norm_h: float
    bh: float = 0.0


def _as_matrix(B):
    if B is None:
        return None
    return B.B if isinstance(B, StabilizationMatrix) else B


def error_norms(mesh: Mesh, U, problem: ProblemData, B=None,
                degree: int = ERROR_QUAD_DEGREE, sigma0: float | None = None) -> ErrorReport:
    """L2 error, H1-seminorm error and the solution-dependent norm of u - u_h.

    ``B`` is the stabilization matrix at u_h (omit for the Galerkin method);
    the b_h term uses the nodal error u(x_k) - u_k. ``sigma0`` overrides the
    weight of the L2 term (by default the problem's lower bound of c).
    """
    if not problem.has_exact:
        raise ValueError(f"problem {problem.name or '?'} has no exact solution")
    U = np.asarray(U, dtype=float)
    grads, areas = p1_gradients(mesh)
    pts, bary, w = quadrature_points(mesh, degree)
    x, y = pts[..., 0], pts[..., 1]
    Ut = U[mesh.triangles]                       # (T, 3)
    uh = Ut @ bary.T                             # (T, q)
    guh = np.einsum("tk,tkd->td", Ut, grads)     # (T, 2)
    u = problem.exact(x, y)
    ux, uy = problem.exact_grad(x, y)
    l2sq = float(np.sum(areas[:, None] * w * (u - uh) ** 2))
    h1sq = float(np.sum(areas[:, None] * w * ((ux - guh[:, None, 0]) ** 2 + (uy - guh[:, None, 1]) ** 2)))

    Bm = _as_matrix(B)
    bh = 0.0
    if Bm is not None:
        e = interpolate(mesh, problem.exact) - U
        bh = float(e @ (Bm @ e))
    s0 = problem.sigma0 if sigma0 is None else float(sigma0)
    normsq = problem.epsilon * h1sq + s0 * l2sq + bh
    return ErrorReport(math.sqrt(l2sq), math.sqrt(h1sq), math.sqrt(max(normsq, 0.0)), bh)


def _order(coarse: float, fine: float) -> float | None:
    """log2 of the error ratio; None when an error vanishes."""
    if coarse == 0 or fine == 0:
        return None
    return math.log2(coarse / fine)


@dataclass
class ConvergenceTable:
    ne: list
    errors: list
    orders: list = field(default_factory=list)  # per row: (l2, h1, normh), None = blank/exact

    COLUMNS = ("ne", "l2", "l2_order", "h1", "h1_order", "normh", "normh_order")

    def rows(self):
        for ne, err, od in zip(self.ne, self.errors, self.orders):
            yield (ne, err.l2, od[0], err.h1semi, od[1], err.norm_h, od[2])

    def to_csv(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            return f"{v:.6g}"

        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.COLUMNS)
        for r in self.rows():
            wr.writerow([r[0]] + [fmt(v) for v in r[1:]])
        return buf.getvalue()


def convergence_table(rows, coarser: ErrorReport | None = None) -> ConvergenceTable:
    """Orders between consecutive rows of (ne, ErrorReport); ne must double each time.

    The first row gets orders only when the error of an ne/2 run is supplied.
    """
    rows = list(rows)
    if len(rows) < 2 and coarser is None:
        raise ValueError("need at least two rows")
    nes = [int(r[0]) for r in rows]
    for a, b in zip(nes, nes[1:]):
        if b != 2 * a:
            raise ValueError(f"ne values must double: {a} -> {b}")
    errs = [r[1] for r in rows]
    prev = [coarser] + errs[:-1]
    orders = []
    for p, e in zip(prev, errs):
        if p is None:
            orders.append((None, None, None))
        else:
            orders.append((_order(p.l2, e.l2), _order(p.h1semi, e.h1semi), _order(p.norm_h, e.norm_h)))
    return ConvergenceTable(nes, errs, orders)


# -- discrete maximum principle ----------------------------------------------

@dataclass(frozen=True, eq=False)
class DmpRegion:
    """A nonempty set of triangles, its node set and the nodes on its boundary."""

    triangles: np.ndarray
    nodes: np.ndarray
    boundary_nodes: np.ndarray
    g_sign: int  # +1: g >= 0 on the region, -1: g <= 0, 0: g == 0


def dmp_region(mesh: Mesh, triangles, problem: ProblemData, degree: int = 4) -> DmpRegion:
    tri = np.unique(np.asarray(triangles, dtype=np.int64))
    if len(tri) == 0:
        raise ValueError("DMP region must be nonempty")
    t = mesh.triangles[tri]
    e = np.vstack((t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]))
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    bnodes = np.unique(uniq[counts == 1])
    sub = Mesh(mesh.vertices, t, mesh.n_interior)
    pts, _, _ = quadrature_points(sub, degree)
    g = np.asarray(problem.source(pts[..., 0], pts[..., 1]), dtype=float)
    g = np.concatenate((g.ravel(), problem.source(mesh.vertices[t.ravel(), 0],
                                                  mesh.vertices[t.ravel(), 1]).ravel()))
    if np.all(g == 0):
        sign = 0
    elif np.all(g >= 0):
        sign = 1
    elif np.all(g <= 0):
        sign = -1
    else:
        raise ValueError("g changes sign on the region")
    return DmpRegion(tri, np.unique(t), bnodes, sign)


@dataclass
class DmpVerdict:
    passed: bool
    violations: list
    checks: list


def check_dmp(mesh: Mesh, U, region: DmpRegion, reaction_zero: bool = False,
              slack: float = 1e-12, sign: int | None = None) -> DmpVerdict:
    """Verify the local DMP bounds on a region; ``violations`` lists offending nodes.

    With g <= 0: max over the region <= max over its boundary of u_h^+.
    With g >= 0: min over the region >= min over its boundary of u_h^-.
    With c = 0 as well the bounds hold without the positive/negative parts.
    """
    U = np.asarray(U, dtype=float)
    sign = region.g_sign if sign is None else sign
    vals = U[region.nodes]
    bvals = U[region.boundary_nodes]
    violations = set()
    checks = []
    if sign <= 0:
        bound = bvals.max() if reaction_zero else max(bvals.max(), 0.0)
        bad = region.nodes[vals > bound + slack]
        violations.update(bad.tolist())
        checks.append(("max", float(vals.max()), float(bound)))
    if sign >= 0:
        bound = bvals.min() if reaction_zero else min(bvals.min(), 0.0)
        bad = region.nodes[vals < bound - slack]
        violations.update(bad.tolist())
        checks.append(("min", float(vals.min()), float(bound)))
    return DmpVerdict(not violations, sorted(violations), checks)


@dataclass
class A2Verdict:
    status: str  # "pass", "fail" or "not-applicable"
    trials: int
    worst: float
    failures: list


def pair_condition_holds(A, pattern, n_interior: int, rtol: float = 1e-12) -> bool:
    """min{a_ij, a_ji} <= 0 for every interior i and j != i (up to rounding)."""
    a = pattern.pair_values(A)
    at = a[pattern.rev]
    rows = pattern.rows < n_interior
    scale = np.abs(a).max()
    return bool(np.all(np.minimum(a, at)[rows] <= rtol * scale))


def check_a2(mesh: Mesh, A, kind: StabilizerKind, trials: int = 100, seed: int = 0,
             adj: Adjacency | None = None, tol: float = 1e-12) -> A2Verdict:
    """Plant strict local extrema in random vectors and test a_ij + b_ij <= tol on S_i."""
    st = Stabilizer(kind, mesh, A, adj)
    pat = st.pattern
    if kind.method == "kuzmin" and not pair_condition_holds(A, pat, mesh.n_interior):
        return A2Verdict("not-applicable", 0, float("nan"), [])
    rng = np.random.default_rng(seed)
    a = st.a
    worst = -np.inf
    failures = []
    for t in range(trials):
        U = rng.uniform(-1.0, 1.0, mesh.n_nodes)
        i = int(rng.integers(mesh.n_interior))
        nb = st.adj.neighbors(i)
        gap = rng.uniform(1e-3, 1.0)
        U[i] = U[nb].max() + gap if t % 2 == 0 else U[nb].min() - gap
        b = st(U).pairs
        sel = slice(pat.indptr[i] - i, pat.indptr[i + 1] - i - 1)
        val = float(np.max(a[sel] + b[sel]))
        worst = max(worst, val)
        if val > tol:
            failures.append((i, val))
    return A2Verdict("pass" if not failures else "fail", trials, worst, failures)


# -- oscillatory fields --------------------------------------------------------

@dataclass(frozen=True)
class OscillatoryField:
    """Nodal patterns on Grid 4 for which the Kuzmin limiter can vanish.

    two-level: x + alpha on odd horizontal grid lines, x - beta on even ones.
    three-level: on odd lines x + alpha where x = (3k-1)h, else x + beta; on
    even lines x + beta where x = (3k+1)h, else x - gamma.
    """

    pattern: str
    alpha: float
    beta: float
    gamma: float = 0.0
    ne: int = 0

    def __post_init__(self):
        h = 1.0 / self.ne if self.ne else float("nan")
        if self.pattern == "two-level":
            if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta > h:
                raise ValueError("two-level field needs alpha, beta >= 0 and alpha + beta <= h")
        elif self.pattern == "three-level":
            if not math.isclose(self.alpha, 2 * self.beta + self.gamma, rel_tol=1e-12, abs_tol=1e-300):
                raise ValueError("three-level field needs alpha = 2 beta + gamma")
            if self.beta + self.gamma > h / 4:
                raise ValueError("three-level field needs beta + gamma <= h/4")
        else:
            raise ValueError(f"unknown pattern {self.pattern!r}")


def grid_indices(mesh: Mesh, ne: int):
    """Integer (column, line) indices of the nodes of an unshifted structured grid."""
    v = mesh.vertices * ne
    ix = np.rint(v[:, 0]).astype(int)
    iy = np.rint(v[:, 1]).astype(int)
    if np.max(np.abs(v - np.column_stack((ix, iy)))) > 1e-8:
        raise ValueError("mesh nodes do not lie on the ne x ne lattice")
    return ix, iy


def is_odd_line(iy) -> np.ndarray:
    """Horizontal grid lines are numbered from 1 at y = 0."""
    return np.asarray(iy) % 2 == 0


def build_oscillatory_field(mesh: Mesh, spec: OscillatoryField) -> np.ndarray:
    if mesh.spec is not None and (mesh.spec.kind != 4 or mesh.spec.ne != spec.ne):
        raise ValueError("oscillatory fields are defined on Grid 4 with matching ne")
    ix, iy = grid_indices(mesh, spec.ne)
    x = mesh.vertices[:, 0]
    odd = is_odd_line(iy)
    if spec.pattern == "two-level":
        return np.where(odd, x + spec.alpha, x - spec.beta)
    odd_val = np.where(ix % 3 == 2, x + spec.alpha, x + spec.beta)
    even_val = np.where(ix % 3 == 1, x + spec.beta, x - spec.gamma)
    return np.where(odd, odd_val, even_val)


def zero_limiter_delta(h: float, eps: float) -> float:
    """alpha + beta for which the Kuzmin limiter vanishes on the two-level field."""
    return 0.5 * h * h / (h - 3.0 * eps)


def modified_mu(h: float, eps: float) -> float:
    """Factor used in R at nodes on odd grid lines to make the Kuzmin limiter linearity preserving."""
    return (2.0 * h - 3.0 * eps) / (h - 4.0 * eps)


def graph_distance_to_boundary(mesh: Mesh, adj: Adjacency) -> np.ndarray:
    """Edge-graph distance of every node to the boundary node set (BFS)."""
    n = mesh.n_nodes
    dist = np.full(n, -1, dtype=int)
    frontier = np.arange(mesh.n_interior, n)
    dist[frontier] = 0
    level = 0
    rows = adj.pair_rows
    while len(frontier):
        level += 1
        mark = np.zeros(n, dtype=bool)
        mark[frontier] = True
        reached = np.unique(adj.nbr_idx[mark[rows]])
        frontier = reached[dist[reached] < 0]
        dist[frontier] = level
    return dist


def deep_interior(mesh: Mesh, adj: Adjacency, depth: int = 3) -> np.ndarray:
    """Nodes whose stencil and whose neighbours' stencils contain no boundary node."""
    return np.flatnonzero(graph_distance_to_boundary(mesh, adj) >= depth)


def local_average(adj: Adjacency, weights, U, i: int, uij=None) -> float:
    """Weighted neighbour average at node i.

    ``weights`` are per-pair values (e.g. d_ij or p_ij) in adjacency order;
    absolute values are used. With ``uij`` the symmetric-point values enter as
    well: sum p (u_j + u_ij) / (2 sum p).
    """
    sl = slice(adj.nbr_ptr[i], adj.nbr_ptr[i + 1])
    w = np.abs(np.asarray(weights, dtype=float)[sl])
    total = w.sum()
    if total == 0:
        raise ValueError(f"all weights vanish at node {i}")
    uj = np.asarray(U, dtype=float)[adj.nbr_idx[sl]]
    if uij is None:
        return float(w @ uj / total)
    return float(w @ (uj + np.asarray(uij, dtype=float)[sl]) / (2 * total))


# -- analytical fixtures on Grid 4 with the data of Example 2 ------------------

FIXTURES = ("residual", "delta-zero", "three-level", "linear-defect")


@dataclass
class FixtureResult:
    name: str
    ne: int
    epsilon: float
    measured: float
    expected: float
    error: float
    passed: bool


def _fixture_system(ne: int, eps: float):
    from .assembly import assemble
    from .mesh import GridSpec, build_grid
    from .problems import catalog

    mesh = build_grid(GridSpec(4, ne))
    system = assemble(mesh, catalog(2, eps))
    if not eps < mesh.spec.h / 9:
        raise ValueError("the fixtures assume eps < h/9")
    return mesh, system, deep_interior(mesh, system.adj)


def run_fixture(name: str, ne: int, eps: float = 1e-8) -> FixtureResult:
    """Evaluate one of the closed-form identities for oscillatory Grid 4 fields.

    residual: Galerkin residual of the two-level field is -2 delta eps on even
    and +2 delta eps on odd lines (error = max deviation, tolerance 1e-14).
    delta-zero: with delta from :func:`zero_limiter_delta` the Kuzmin factors
    R^+- are 1 at deep-interior nodes (error = 1 - min R, tolerance 1e-12).
    three-level: the same with the mu-modified limiter on odd lines.
    linear-defect: (B(U) U)_B = h^2/(6h - 9 eps) for U = -(x - x_B)/h at every
    deep-interior node B on an odd line (relative error, tolerance 1e-12).
    """
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}; expected one of {FIXTURES}")
    mesh, system, deep = _fixture_system(ne, eps)
    h = 1.0 / ne
    _, iy = grid_indices(mesh, ne)
    odd = is_odd_line(iy)
    m = mesh.n_interior

    if name == "residual":
        alpha, beta = 0.3 * h, 0.2 * h
        delta = alpha + beta
        U = build_oscillatory_field(mesh, OscillatoryField("two-level", alpha, beta, ne=ne))
        r = (system.A @ U)[:m] - system.rhs
        expected = np.where(odd[deep], 2 * delta * eps, -2 * delta * eps)
        err = float(np.max(np.abs(r[deep] - expected)))
        return FixtureResult(name, ne, eps, float(r[deep].max()), 2 * delta * eps, err, err <= 1e-14)

    if name == "linear-defect":
        st = Stabilizer(StabilizerKind("kuzmin"), mesh, system.A, system.adj, system.pattern)
        expected = h * h / (6 * h - 9 * eps)
        worst, val = 0.0, float("nan")
        for b in deep[odd[deep]]:
            U = -(mesh.vertices[:, 0] - mesh.vertices[b, 0]) / h
            val = float((st(U).B @ U)[b])
            worst = max(worst, abs(val - expected) / expected)
        return FixtureResult(name, ne, eps, val, expected, worst, worst <= 1e-12)

    if name == "delta-zero":
        delta = zero_limiter_delta(h, eps)
        U = build_oscillatory_field(mesh, OscillatoryField("two-level", 0.6 * delta, 0.4 * delta, ne=ne))
        kind = StabilizerKind("kuzmin")
    else:
        beta, gamma = 0.05 * h, 0.1 * h
        U = build_oscillatory_field(mesh, OscillatoryField("three-level", 2 * beta + gamma, beta, gamma, ne=ne))
        kind = StabilizerKind("kuzmin", node_mu=np.where(odd, modified_mu(h, eps), 1.0))
    st = Stabilizer(kind, mesh, system.A, system.adj, system.pattern)
    S = st(U, diagnostics=True)
    rmin = float(min(S.R_plus[deep].min(), S.R_minus[deep].min()))
    err = 1.0 - rmin
    return FixtureResult(name, ne, eps, rmin, 1.0, err, err <= 1e-12)


# -- algebraic property suites -------------------------------------------------

@dataclass
class PropertyVerdict:
    passed: bool
    trials: int
    metrics: dict


def check_matrix_properties(mesh: Mesh, A, kind: StabilizerKind, trials: int = 100,
                            seed: int = 0, adj: Adjacency | None = None,
                            rtol: float = 1e-12) -> PropertyVerdict:
    """Symmetry, sign pattern, zero row sums, semidefiniteness and |b_ij| <= max{|a_ij|, |a_ji|}
    of B(U) for random U."""
    st = Stabilizer(kind, mesh, A, adj)
    scale = float(np.abs(st.a).max())
    bound = st.consistency_bound()
    rng = np.random.default_rng(seed)
    worst = dict(asymmetry=0.0, max_offdiag=-np.inf, row_sum=0.0, min_eig=np.inf, bound_excess=-np.inf)
    dense = mesh.n_nodes <= 1500
    for _ in range(trials):
        S = st(rng.uniform(-1.0, 1.0, mesh.n_nodes))
        b = S.pairs
        Bm = S.B
        worst["asymmetry"] = max(worst["asymmetry"], float(np.abs(b - b[st.pattern.rev]).max()))
        worst["max_offdiag"] = max(worst["max_offdiag"], float(b.max()))
        worst["row_sum"] = max(worst["row_sum"], float(np.abs(np.asarray(Bm.sum(axis=1))).max()))
        worst["bound_excess"] = max(worst["bound_excess"], float((np.abs(b) - bound).max()))
        if dense:
            worst["min_eig"] = min(worst["min_eig"], float(np.linalg.eigvalsh(Bm.toarray()).min()))
    tol = rtol * max(scale, 1.0)
    ok = (worst["asymmetry"] == 0.0 and worst["max_offdiag"] <= 0.0 and worst["row_sum"] <= tol
          and worst["bound_excess"] <= tol and (not dense or worst["min_eig"] >= -tol))
    return PropertyVerdict(bool(ok), trials, worst)


def check_linearity(mesh: Mesh, A, kind: StabilizerKind, trials: int = 20, seed: int = 0,
                    adj: Adjacency | None = None, rtol: float = 1e-13) -> PropertyVerdict:
    """max |b_ij(u)| / max |a_ij| over random first degree polynomials u."""
    st = Stabilizer(kind, mesh, A, adj)
    scale = float(np.abs(st.a).max())
    rng = np.random.default_rng(seed)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    worst = 0.0
    for _ in range(trials):
        c0, c1, c2 = rng.uniform(-1.0, 1.0, 3)
        b = st(c0 + c1 * x + c2 * y).pairs
        worst = max(worst, float(np.abs(b).max()) / scale)
    return PropertyVerdict(worst <= rtol, trials, {"max_b_over_max_a": worst})
