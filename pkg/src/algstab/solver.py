"""Damped fixed-point iteration for sum_j (a_ij + b_ij(U)) u_j = g_i, i <= M,
with u_i = u_i^b on the boundary."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import GalerkinSystem
from .stabilizers import StabilizationMatrix, Stabilizer, StabilizerKind

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Singular linear system or non-finite iterate."""


SCHEMES = ("auto", "matrix", "rhs")


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls.

    ``scheme`` selects the linear problem solved per step: "matrix" solves
    with A + B(U^k); "rhs" keeps the matrix A + D (factored once) and moves
    (D - B(U^k)) U^k to the right-hand side; "auto" starts with "rhs" and
    swaps schemes whenever the best residual has not dropped by 10% within
    ``stall_window`` steps.
    """

    tol_rel: float = 1e-10
    tol_abs: float = 1e-13
    max_iter: int = 50_000
    damping: float = 1.0
    damping_floor: float = 1e-3
    linear_solver: str = "direct"
    scheme: str = "auto"
    stall_window: int = 100

    def __post_init__(self):
        if not 0 < self.tol_rel < 1:
            raise ValueError("tol_rel must lie in (0, 1)")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not 0 < self.damping_floor <= self.damping:
            raise ValueError("damping_floor must lie in (0, damping]")
        if self.linear_solver != "direct":
            raise ValueError("only the direct sparse LU solver is available")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.max_iter < 0 or self.stall_window < 1:
            raise ValueError("max_iter must be >= 0 and stall_window >= 1")


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    tolerance: float
    residual_history: list = field(default_factory=list)
    damping_history: list = field(default_factory=list)
    forced_steps: int = 0
    scheme_switches: int = 0

    def summary(self) -> dict:
        d = np.asarray(self.damping_history) if self.damping_history else np.array([np.nan])
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "tolerance": self.tolerance,
            "damping_min": float(np.min(d)),
            "damping_mean": float(np.mean(d)),
            "forced_steps": self.forced_steps,
            "scheme_switches": self.scheme_switches,
        }


def interior_residual(system: GalerkinSystem, B: sp.csr_matrix, U) -> np.ndarray:
    """((A + B(U)) U - g)_i for interior rows."""
    m = system.n_interior
    return ((system.A + B) @ U)[:m] - system.rhs


def _factor(K_ii):
    try:
        return spla.splu(K_ii.tocsc())
    except RuntimeError as exc:  # SuperLU raises RuntimeError on exact singularity
        raise SolverError(f"singular linear system: {exc}") from exc


def _finish(system, ui):
    if not np.all(np.isfinite(ui)):
        raise SolverError("linear solve produced non-finite values")
    return np.concatenate((ui, system.dirichlet))


def _linear_solve(system: GalerkinSystem, K: sp.csr_matrix) -> np.ndarray:
    """Solve rows i <= M of K U = g with boundary values pinned."""
    m = system.n_interior
    K = K.tocsr()
    rhs = system.rhs - K[:m, m:] @ system.dirichlet
    return _finish(system, _factor(K[:m, :m]).solve(rhs))


class _RhsScheme:
    """(A + D) U_hat = g + (D - B(U)) U with one factorization of A + D."""

    def __init__(self, system, D):
        m = system.n_interior
        K = (system.A + D).tocsr()
        self.system = system
        self.D = D
        self.m = m
        self.lu = _factor(K[:m, :m])
        self.base = system.rhs - K[:m, m:] @ system.dirichlet

    def __call__(self, U, B):
        m = self.m
        return _finish(self.system, self.lu.solve(self.base + ((self.D - B) @ U)[:m]))


def solve(system: GalerkinSystem, kind: StabilizerKind, cfg: SolverConfig | None = None,
          stabilizer: Stabilizer | None = None, U0=None):
    """Return (U, report, stabilization at U).

    The iterate starts from the solution with B = D. Each step builds
    B(U^k), solves a linear problem for U_hat (see ``SolverConfig.scheme``)
    and accepts U^k + w (U_hat - U^k) once the interior residual decreases.
    A rejected step halves w; at the damping floor the step is taken anyway.
    """
    cfg = SolverConfig() if cfg is None else cfg
    st = stabilizer if stabilizer is not None else Stabilizer(
        kind, system.mesh, system.A, system.adj, system.pattern)
    A = system.A
    D = st.diffusion_matrix()
    tol = max(cfg.tol_rel * float(np.linalg.norm(system.rhs)), cfg.tol_abs)

    if U0 is None:
        U = _linear_solve(system, A + D)
    else:
        U = np.array(U0, dtype=float)
        U[system.n_interior:] = system.dirichlet
    stab = st(U)
    res = float(np.linalg.norm(interior_residual(system, stab.B, U)))
    report = SolveReport(0, res, res <= tol, tol, [res])

    rhs_step = None
    # B = 0 makes the problem linear; one matrix step then solves it exactly
    linear = st.kind.method == "none"
    scheme = "matrix" if cfg.scheme == "matrix" or linear else "rhs"
    omega = cfg.damping
    best, best_at = res, 0

    while not report.converged and report.iterations < cfg.max_iter:
        if scheme == "rhs":
            if rhs_step is None:
                rhs_step = _RhsScheme(system, D)
            U_hat = rhs_step(U, stab.B)
        else:
            U_hat = _linear_solve(system, A + stab.B)
        step = U_hat - U
        while True:
            trial = U + omega * step
            trial_stab = st(trial)
            trial_res = float(np.linalg.norm(interior_residual(system, trial_stab.B, trial)))
            if not np.isfinite(trial_res):
                raise SolverError("non-finite residual")
            if trial_res < res:
                report.damping_history.append(omega)
                omega = min(1.0, 1.2 * omega)
                break
            if omega <= cfg.damping_floor:
                report.damping_history.append(omega)
                report.forced_steps += 1
                break
            omega = max(cfg.damping_floor, 0.5 * omega)
        U, stab, res = trial, trial_stab, trial_res
        report.iterations += 1
        report.residual = res
        report.residual_history.append(res)
        report.converged = res <= tol
        if res < 0.9 * best:
            best, best_at = res, report.iterations
        elif cfg.scheme == "auto" and report.iterations - best_at >= cfg.stall_window:
            scheme = "matrix" if scheme == "rhs" else "rhs"
            report.scheme_switches += 1
            omega = cfg.damping
            best, best_at = res, report.iterations
            log.debug("switching to %s scheme at iteration %d", scheme, report.iterations)
    if not report.converged:
        log.warning("fixed-point iteration stopped after %d iterations, residual %.3e > %.3e",
                    report.iterations, res, tol)
    # boundary values are copied, never computed
    U[system.n_interior:] = system.dirichlet
    return U, report, stab


def solve_linear(system: GalerkinSystem) -> np.ndarray:
    """Galerkin solution (B = 0)."""
    return _linear_solve(system, system.A)


__all__ = ["SolverConfig", "SolveReport", "SolverError", "solve", "solve_linear",
           "interior_residual", "StabilizationMatrix"]
