"""Algebraically stabilized P1 finite elements for steady convection-diffusion-reaction
problems on the unit square."""
from .mesh import GridSpec, Mesh, build_grid, adjacency
from .problems import ProblemData, catalog
from .assembly import GalerkinSystem, assemble
from .stabilizers import StabilizerKind, Stabilizer, StabilizationMatrix
from .solver import SolverConfig, SolveReport, SolverError, solve
from .analysis import ErrorReport, error_norms, convergence_table

__all__ = [
    "GridSpec", "Mesh", "build_grid", "adjacency", "ProblemData", "catalog",
    "GalerkinSystem", "assemble", "StabilizerKind", "Stabilizer", "StabilizationMatrix",
    "SolverConfig", "SolveReport", "SolverError", "solve",
    "ErrorReport", "error_norms", "convergence_table",
]
__version__ = "0.1.0"
