"""Structured triangulations of the unit square and the combinatorial queries
needed by the limiters (neighbour sets, patches, upwind simplices, patch
constants).

Nodes are numbered interior-first: indices ``0 .. M-1`` are interior nodes,
``M .. N-1`` lie on the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GRID_KINDS = (1, 4, 5)

# angular slack for deciding that a ray lies in the closed cone of a corner
CONE_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh or grid specification."""


class GeometryError(RuntimeError):
    """Internal geometry failure (e.g. no upwind simplex found)."""


@dataclass(frozen=True)
class GridSpec:
    """Parameters of one of the structured grids.

    kind: 1, 4 or 5; ne: number of edges on one horizontal grid line;
    shift: fraction of ``h`` by which Grid 5 moves interior nodes on even
    horizontal lines to the right.
    """

    kind: int
    ne: int
    shift: float = 0.1

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise MeshError(f"unknown grid kind {self.kind!r}; expected one of {GRID_KINDS}")
        if int(self.ne) != self.ne or self.ne < 2:
            raise MeshError(f"ne must be an integer >= 2, got {self.ne!r}")
        if self.kind in (4, 5) and self.ne % 2:
            raise MeshError(f"Grid {self.kind} needs an even ne, got {self.ne}")
        if self.kind == 5 and not 0.0 < self.shift < 1.0:
            raise MeshError(f"shift must lie in (0, 1), got {self.shift!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.ne


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with interior-first node ordering."""

    vertices: np.ndarray
    triangles: np.ndarray
    n_interior: int
    dim: int = 2
    spec: GridSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_nodes(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary(self) -> np.ndarray:
        flags = np.zeros(self.n_nodes, dtype=bool)
        flags[self.n_interior:] = True
        return flags

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges(self) -> np.ndarray:
        """Unique edges as sorted index pairs, lexicographically ordered."""
        t = self.triangles
        e = np.vstack((t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]))
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def validate(self) -> None:
        """Raise :class:`MeshError` unless the mesh is a valid tiling of [0,1]^2."""
        n = self.n_nodes
        t = self.triangles
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must be an (n, 3) array")
        if t.min() < 0 or t.max() >= n:
            raise MeshError("triangle vertex index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("triangle with repeated vertex")
        area = self.signed_areas()
        if np.any(area <= 0):
            raise MeshError("triangle with non-positive signed area")
        if abs(area.sum() - 1.0) > 1e-12:
            raise MeshError(f"triangle areas sum to {area.sum()!r}, not 1")
        e = np.vstack((t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]))
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        once = uniq[counts == 1]
        on_bdry = _on_unit_square_boundary(self.vertices)
        if not np.all(on_bdry[once]):
            raise MeshError("interior edge owned by a single triangle")
        if np.any(on_bdry[: self.n_interior]) or not np.all(on_bdry[self.n_interior:]):
            raise MeshError("node ordering is not interior-first")


def _on_unit_square_boundary(p: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    x, y = p[:, 0], p[:, 1]
    return (np.abs(x) < tol) | (np.abs(x - 1) < tol) | (np.abs(y) < tol) | (np.abs(y - 1) < tol)


def build_grid(spec: GridSpec) -> Mesh:
    """Generate Grid 1, 4 or 5 on the unit square.

    Grid 1 splits every square by the diagonal running from its bottom-left to
    its top-right corner. Grid 4 flips the diagonal in even rows of squares.
    Grid 5 is Grid 4 with every interior node on an even horizontal grid line
    moved right by ``shift * h``. Rows and lines are numbered from 1 at y = 0,
    so even lines are those with y = h, 3h, 5h, ...
    """
    ne = spec.ne
    h = spec.h
    iy, ix = np.divmod(np.arange((ne + 1) ** 2), ne + 1)
    interior = (ix > 0) & (ix < ne) & (iy > 0) & (iy < ne)
    # stable argsort keeps the lexicographic (y, x) order inside each class
    order = np.argsort(~interior, kind="stable")
    new_index = np.empty_like(order)
    new_index[order] = np.arange(len(order))

    x = ix * h
    y = iy * h
    if spec.kind == 5:
        x = np.where(interior & (iy % 2 == 1), x + spec.shift * h, x)
    vertices = np.column_stack((x, y))[order]

    def node(i, j):
        return j * (ne + 1) + i

    tris = []
    for r in range(ne):  # r is 0-based, so row number r+1
        flip = spec.kind in (4, 5) and (r + 1) % 2 == 0
        for c in range(ne):
            ll, lr = node(c, r), node(c + 1, r)
            ul, ur = node(c, r + 1), node(c + 1, r + 1)
            if flip:
                tris.append((ll, lr, ul))
                tris.append((lr, ur, ul))
            else:
                tris.append((ll, lr, ur))
                tris.append((ll, ur, ul))
    triangles = new_index[np.asarray(tris, dtype=np.int64)]
    mesh = Mesh(vertices, triangles, int(interior.sum()), spec=spec)
    return mesh


@dataclass(frozen=True, eq=False)
class Adjacency:
    """Neighbour sets S_i (CSR layout) and patches Delta_i.

    ``nbr_idx[nbr_ptr[i]:nbr_ptr[i+1]]`` is the sorted set S_i, and
    ``patch_idx[patch_ptr[i]:patch_ptr[i+1]]`` the sorted triangle indices of
    the patch of node i. Patches are stored for every node.
    """

    nbr_ptr: np.ndarray
    nbr_idx: np.ndarray
    patch_ptr: np.ndarray
    patch_idx: np.ndarray

    def neighbors(self, i: int) -> np.ndarray:
        return self.nbr_idx[self.nbr_ptr[i]:self.nbr_ptr[i + 1]]

    def patch(self, i: int) -> np.ndarray:
        return self.patch_idx[self.patch_ptr[i]:self.patch_ptr[i + 1]]

    @property
    def pair_rows(self) -> np.ndarray:
        """Row index i of every directed pair (i, j), j in S_i, in CSR order."""
        return np.repeat(np.arange(len(self.nbr_ptr) - 1), np.diff(self.nbr_ptr))


def adjacency(mesh: Mesh) -> Adjacency:
    n = mesh.n_nodes
    e = mesh.edges()
    rows = np.concatenate((e[:, 0], e[:, 1]))
    cols = np.concatenate((e[:, 1], e[:, 0]))
    order = np.lexsort((cols, rows))
    nbr_idx = cols[order]
    nbr_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=nbr_ptr[1:])

    t = mesh.triangles
    owner = t.ravel()
    tri_id = np.repeat(np.arange(len(t)), 3)
    order = np.lexsort((tri_id, owner))
    patch_idx = tri_id[order]
    patch_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(owner, minlength=n), out=patch_ptr[1:])
    return Adjacency(nbr_ptr, nbr_idx, patch_ptr, patch_idx)


def _corner_edges(mesh: Mesh):
    """For every triangle corner: (vertex, triangle, e1, e2) with e1 x e2 > 0."""
    t = mesh.triangles
    p = mesh.vertices
    verts, tris, e1s, e2s = [], [], [], []
    for k in range(3):
        a, b, c = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        verts.append(a)
        tris.append(np.arange(len(t)))
        e1s.append(p[b] - p[a])
        e2s.append(p[c] - p[a])
    verts = np.concatenate(verts)
    tris = np.concatenate(tris)
    e1 = np.concatenate(e1s)
    e2 = np.concatenate(e2s)
    order = np.lexsort((tris, verts))
    return verts[order], tris[order], e1[order], e2[order]


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _in_cone(e1, e2, d, tol=CONE_TOL):
    n1 = np.linalg.norm(e1, axis=-1)
    n2 = np.linalg.norm(e2, axis=-1)
    nd = np.linalg.norm(d, axis=-1)
    return (_cross(e1, d) >= -tol * n1 * nd) & (_cross(d, e2) >= -tol * nd * n2)


def upwind_simplices(mesh: Mesh, adj: Adjacency) -> np.ndarray:
    """T_ij for all directed pairs in CSR order; -1 on rows of boundary nodes.

    T_ij is the patch triangle of x_i whose corner cone at x_i contains the
    direction x_i - x_j; ties go to the smallest triangle index.
    """
    verts, tris, e1, e2 = _corner_edges(mesh)
    corner_ptr = np.searchsorted(verts, np.arange(mesh.n_nodes + 1))
    rows = adj.pair_rows
    cols = adj.nbr_idx
    result = np.full(len(rows), -1, dtype=np.int64)

    sel = np.flatnonzero(rows < mesh.n_interior)
    i = rows[sel]
    start = corner_ptr[i]
    count = corner_ptr[i + 1] - start
    pair_of = np.repeat(np.arange(len(sel)), count)
    offs = np.arange(len(pair_of)) - np.repeat(np.cumsum(count) - count, count)
    corner = np.repeat(start, count) + offs
    p = mesh.vertices
    d = p[i] - p[cols[sel]]
    ok = _in_cone(e1[corner], e2[corner], d[pair_of])

    # first matching corner per pair; corners are sorted by triangle index
    hit_pair = pair_of[ok]
    hit_tri = tris[corner][ok]
    first = np.unique(hit_pair, return_index=True)
    found = np.zeros(len(sel), dtype=bool)
    found[first[0]] = True
    if not found.all():
        bad = sel[np.flatnonzero(~found)[0]]
        raise GeometryError(f"no upwind simplex for pair ({rows[bad]}, {cols[bad]})")
    result[sel[first[0]]] = hit_tri[first[1]]
    return result


def upwind_simplex(mesh: Mesh, adj: Adjacency, i: int, j: int) -> int:
    """Triangle of the patch of interior node ``i`` hit by the ray from x_i away from x_j."""
    if not 0 <= i < mesh.n_interior:
        raise ValueError(f"node {i} is not interior")
    if j not in adj.neighbors(i):
        raise ValueError(f"node {j} is not a neighbour of {i}")
    p = mesh.vertices
    d = p[i] - p[j]
    for t in adj.patch(i):
        tri = mesh.triangles[t]
        k = int(np.flatnonzero(tri == i)[0])
        e1 = p[tri[(k + 1) % 3]] - p[i]
        e2 = p[tri[(k + 2) % 3]] - p[i]
        if _in_cone(e1, e2, d):
            return int(t)
    raise GeometryError(f"no upwind simplex for pair ({i}, {j})")


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise, without repeated endpoint."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float)))
    if len(pts) <= 2:
        return np.array(pts)

    def half(seq):
        out = []
        for q in seq:
            while len(out) >= 2 and (
                (out[-1][0] - out[-2][0]) * (q[1] - out[-2][1])
                - (out[-1][1] - out[-2][1]) * (q[0] - out[-2][0])
            ) <= 0:
                out.pop()
            out.append(q)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.array(lower[:-1] + upper[:-1])


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    denom = ab @ ab
    s = 0.0 if denom == 0 else min(1.0, max(0.0, (p - a) @ ab / denom))
    return float(np.linalg.norm(p - (a + s * ab)))


def patch_mu(mesh: Mesh, adj: Adjacency, i: int) -> float:
    """Patch constant: farthest neighbour distance over distance to the hull boundary."""
    if not 0 <= i < mesh.n_interior:
        raise ValueError(f"node {i} is not interior")
    xi = mesh.vertices[i]
    nb = mesh.vertices[adj.neighbors(i)]
    hull = convex_hull(nb)
    dist = min(
        point_segment_distance(xi, hull[k], hull[(k + 1) % len(hull)])
        for k in range(len(hull))
    )
    return float(np.max(np.linalg.norm(nb - xi, axis=1)) / dist)


def patch_mu_all(mesh: Mesh, adj: Adjacency) -> np.ndarray:
    """patch_mu for every node; boundary entries are set to 1 (unused)."""
    mu = np.ones(mesh.n_nodes)
    for i in range(mesh.n_interior):
        mu[i] = patch_mu(mesh, adj, i)
    return mu


def write_mesh(mesh: Mesh, path) -> None:
    """Write the line-oriented text format (1-based triangle indices)."""
    flags = mesh.boundary.astype(int)
    lines = [f"mesh {mesh.dim} {mesh.n_nodes} {mesh.n_interior} {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g} {f}" for (x, y), f in zip(mesh.vertices, flags)]
    lines += [f"{a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "mesh":
        raise MeshError(f"bad mesh header: {lines[0]!r}")
    dim, n, m, nt = map(int, head[1:])
    if dim != 2:
        raise MeshError(f"only 2D meshes are supported, got dim={dim}")
    rows = [ln.split() for ln in lines[1:1 + n]]
    vertices = np.array([[float(r[0]), float(r[1])] for r in rows])
    flags = np.array([int(r[2]) for r in rows])
    if np.any(flags[:m] != 0) or np.any(flags[m:] != 1):
        raise MeshError("boundary flags inconsistent with interior-first ordering")
    tris = np.array([[int(v) for v in ln.split()] for ln in lines[1 + n:1 + n + nt]]) - 1
    return Mesh(vertices, tris.reshape(-1, 3), m)
