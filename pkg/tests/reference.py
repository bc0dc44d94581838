"""Slow loop-based reference implementations used as test oracles.

They work on dense arrays and Python dictionaries and share no code with the
vectorised package routines.
"""
import numpy as np


def neighbours(mesh):
    nb = {i: set() for i in range(mesh.n_nodes)}
    for t in mesh.triangles:
        for a in t:
            for b in t:
                if a != b:
                    nb[int(a)].add(int(b))
    return {i: sorted(s) for i, s in nb.items()}


def diffusion(A, nb):
    n = A.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        for j in nb[i]:
            D[i, j] = -max(A[i, j], 0.0, A[j, i])
        D[i, i] = -sum(D[i, j] for j in nb[i])
    return D


def _finish(b, nb):
    n = len(nb)
    B = np.zeros((n, n))
    for (i, j), v in b.items():
        B[i, j] = v
    for i in range(n):
        B[i, i] = -sum(B[i, j] for j in nb[i])
    return B


def kuzmin(A, U, nb, M):
    D = diffusion(A, nb)
    f = {(i, j): D[i, j] * (U[j] - U[i]) for i in nb for j in nb[i]}
    R = {}
    for i in nb:
        if i >= M:
            R[i] = (1.0, 1.0)
            continue
        Pp = sum(max(f[i, j], 0) for j in nb[i] if A[j, i] <= A[i, j])
        Pm = sum(min(f[i, j], 0) for j in nb[i] if A[j, i] <= A[i, j])
        Qp = -sum(min(f[i, j], 0) for j in nb[i])
        Qm = -sum(max(f[i, j], 0) for j in nb[i])
        R[i] = (min(1, Qp / Pp) if Pp != 0 else 1.0, min(1, Qm / Pm) if Pm != 0 else 1.0)

    def at(i, j):
        if f[i, j] > 0:
            return R[i][0]
        if f[i, j] < 0:
            return R[i][1]
        return 1.0

    b = {}
    for i in nb:
        for j in nb[i]:
            if A[i, j] > A[j, i]:
                a = at(i, j)
            elif A[i, j] < A[j, i]:
                a = at(j, i)
            else:
                a = min(at(i, j), at(j, i))
            b[i, j] = (1 - a) * D[i, j]
    return _finish(b, nb)


def bjk(A, U, nb, M, mu):
    Am = A.copy()
    for i in range(M):
        for j in nb[i]:
            if j >= M and A[i, j] < 0:
                Am[j, i] = 0.0
    D = diffusion(Am, nb)
    f = {(i, j): D[i, j] * (U[j] - U[i]) for i in nb for j in nb[i]}
    R = {}
    for i in nb:
        if i >= M:
            R[i] = (1.0, 1.0)
            continue
        Pp = sum(max(f[i, j], 0) for j in nb[i])
        Pm = sum(min(f[i, j], 0) for j in nb[i])
        q = sum(D[i, j] for j in nb[i])
        umax = max([U[i]] + [U[j] for j in nb[i]])
        umin = min([U[i]] + [U[j] for j in nb[i]])
        Qp, Qm = q * (U[i] - umax), q * (U[i] - umin)
        R[i] = (min(1, mu[i] * Qp / Pp) if Pp != 0 else 1.0,
                min(1, mu[i] * Qm / Pm) if Pm != 0 else 1.0)

    def at(i, j):
        if f[i, j] > 0:
            return R[i][0]
        if f[i, j] < 0:
            return R[i][1]
        return 1.0

    b = {(i, j): (1 - min(at(i, j), at(j, i))) * D[i, j] for i in nb for j in nb[i]}
    return _finish(b, nb)


def _upwind_type(A, U, nb, M, Pp, Pm, Qp, Qm):
    R = {}
    for i in nb:
        R[i] = (min(1, Qp[i] / Pp[i]) if Pp[i] != 0 else 1.0,
                min(1, Qm[i] / Pm[i]) if Pm[i] != 0 else 1.0)
    beta = {}
    for i in nb:
        for j in nb[i]:
            if i >= M:
                beta[i, j] = 0.0
            elif U[i] > U[j]:
                beta[i, j] = 1 - R[i][0]
            elif U[i] < U[j]:
                beta[i, j] = 1 - R[i][1]
            else:
                beta[i, j] = 0.0
    b = {(i, j): -max(beta[i, j] * A[i, j], 0.0, beta[j, i] * A[j, i]) for i in nb for j in nb[i]}
    return _finish(b, nb)


def muas(A, U, nb, M):
    Pp, Pm, Qp, Qm = {}, {}, {}, {}
    for i in nb:
        Pp[i] = sum(A[i, j] * max(U[i] - U[j], 0) for j in nb[i] if A[i, j] > 0)
        Pm[i] = sum(A[i, j] * min(U[i] - U[j], 0) for j in nb[i] if A[i, j] > 0)
        s = {j: max(abs(A[i, j]), A[j, i]) for j in nb[i]}
        Qp[i] = sum(s[j] * max(U[j] - U[i], 0) for j in nb[i])
        Qm[i] = sum(s[j] * min(U[j] - U[i], 0) for j in nb[i])
    return _upwind_type(A, U, nb, M, Pp, Pm, Qp, Qm)


def _contains(p, tri_pts, tol=1e-12):
    a, b, c = tri_pts
    T = np.column_stack((b - a, c - a))
    lam = np.linalg.solve(T, p - a)
    return lam.min() >= -tol and lam.sum() <= 1 + tol


def symmetric_value(mesh, U, i, j):
    """u_i + grad(u_h)|_T . (x_i - x_j) with T the patch triangle entered by the ray."""
    v = mesh.vertices
    d = v[i] - v[j]
    probe = v[i] + 1e-6 * d / np.linalg.norm(d)
    for t in mesh.triangles:
        if i in t and _contains(probe, v[t]):
            a, b, c = v[t]
            T = np.column_stack((b - a, c - a))
            g = np.linalg.solve(T.T, np.array([U[t[1]] - U[t[0]], U[t[2]] - U[t[0]]]))
            return U[i] + g @ d
    raise AssertionError(f"no triangle of the patch of {i} in direction of {i}-{j}")


def smuas(mesh, A, U, nb, M, weights="matrix"):
    uij = {}
    for i in range(M):
        for j in nb[i]:
            uij[i, j] = symmetric_value(mesh, U, i, j)
    Pp, Pm, Qp, Qm = {}, {}, {}, {}
    for i in nb:
        if i >= M:
            Pp[i] = Pm[i] = Qp[i] = Qm[i] = 0.0
            continue
        Pp[i] = Pm[i] = Qp[i] = Qm[i] = 0.0
        for j in nb[i]:
            if weights == "matrix":
                p = max(A[i, j], 0.0, A[j, i])
                q = max(abs(A[i, j]), A[j, i])
            else:
                p = q = 1.0
            if not (A[i, j] > 0 or A[j, i] > 0):
                p = 0.0
            du, dx = U[i] - U[j], U[i] - uij[i, j]
            Pp[i] += p * (max(du, 0) + max(dx, 0))
            Pm[i] += p * (min(du, 0) + min(dx, 0))
            Qp[i] += q * (max(-du, 0) + max(-dx, 0))
            Qm[i] += q * (min(-du, 0) + min(-dx, 0))
    return _upwind_type(A, U, nb, M, Pp, Pm, Qp, Qm)
