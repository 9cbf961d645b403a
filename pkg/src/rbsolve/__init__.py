"""Reduced-basis iterative solvers for parameter-dependent SPD systems.

The package couples a Galerkin reduced basis with a stationary smoother,
either as a stand-alone iteration (RBI) or as a CG preconditioner (RBCG),
and ships the 3D Poisson benchmarks, a multigrid baseline and an
experiment runner.
"""
from .affine import AffineOperator, AffineRhs, ParameterDomain, assemble_matrix, assemble_rhs
from .basis import ReducedBasis, extend, load_basis, online_assemble, save_basis
from .greedy import TrainingSet, adaptive_greedy_build, greedy_build, multifidelity_build
from .multigrid import MgHierarchy, mgcg_solve, v_cycle
from .poisson import GridProblem, assemble_case
from .smoothing import SmootherSpec, smooth
from .solvers import ConvergenceHistory, SolverConfig, cg_solve, rbcg_solve, rbi_solve
from .sparse import CSRMatrix
from .work import WorkCounter, counting

__version__ = "0.1.0"

__all__ = [
    "AffineOperator",
    "AffineRhs",
    "ParameterDomain",
    "assemble_matrix",
    "assemble_rhs",
    "ReducedBasis",
    "extend",
    "online_assemble",
    "save_basis",
    "load_basis",
    "TrainingSet",
    "greedy_build",
    "adaptive_greedy_build",
    "multifidelity_build",
    "MgHierarchy",
    "mgcg_solve",
    "v_cycle",
    "GridProblem",
    "assemble_case",
    "SmootherSpec",
    "smooth",
    "ConvergenceHistory",
    "SolverConfig",
    "cg_solve",
    "rbcg_solve",
    "rbi_solve",
    "CSRMatrix",
    "WorkCounter",
    "counting",
]
