"""Discontinuous least-squares finite elements for the Helmholtz equation."""

from .analysis import adaptive_solve, compute_errors, compute_indicators, mark_dorfler
from .assembly import assemble, evaluate_functional, evaluate_solution
from .mesh import SimplicialMesh, read_mesh, refine_bisection, refine_uniform, write_mesh
from .problems import PROBLEMS, make_problem
from .solver import SolverConfig, solve

__all__ = [
    "PROBLEMS",
    "SimplicialMesh",
    "SolverConfig",
    "adaptive_solve",
    "assemble",
    "compute_errors",
    "compute_indicators",
    "evaluate_functional",
    "evaluate_solution",
    "make_problem",
    "mark_dorfler",
    "read_mesh",
    "refine_bisection",
    "refine_uniform",
    "solve",
    "write_mesh",
]
