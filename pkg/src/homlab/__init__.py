"""Periodic homogenization lab for Neumann problems of elliptic systems.

Operators of the form ``-div(A(x/eps) grad u + V(x/eps) u) + B(x/eps) grad u
+ (c(x/eps) + lam) u`` on the unit interval or square: spectral cell solvers,
homogenized coefficients, Q1 Neumann solvers, corrector expansions and
epsilon-sweep rate studies.
"""

from .cell_solver import CorrectorSet, cell_residual, solve_cell_corrector, solve_cell_problems
from .corrector_expansion import ExpansionErrors, PhiStrategy, build_phi, build_w, expansion_errors
from .domain_solver import (
    ProblemData,
    SolveResult,
    coercivity_threshold,
    compatibility_residual,
    solve_boundary_corrector,
    solve_homogenized_problem,
    solve_oscillating,
)
from .errors import (
    CoefficientError,
    CoercivityError,
    CompatibilityError,
    ConvergenceError,
    HomlabError,
    UnderResolvedError,
)
from .grid import GridFunction, grid_norm
from .homogenize import HomogenizedSet, assemble_homogenized, oracle_1d_homogenize
from .periodic_fields import (
    CoefficientSet,
    PeriodicTensorField,
    build_preset,
    sample_field,
    validate_coefficients,
)
from .rate_harness import ConvergenceReport, SweepConfig, emit_report, fit_rate, run_convergence_sweep
from .smoothing import boundary_cutoff, layer_norm, smooth_seps, smooth_steklov

__all__ = [
    "CorrectorSet",
    "cell_residual",
    "solve_cell_corrector",
    "solve_cell_problems",
    "ExpansionErrors",
    "PhiStrategy",
    "build_phi",
    "build_w",
    "expansion_errors",
    "ProblemData",
    "SolveResult",
    "coercivity_threshold",
    "compatibility_residual",
    "solve_boundary_corrector",
    "solve_homogenized_problem",
    "solve_oscillating",
    "CoefficientError",
    "CoercivityError",
    "CompatibilityError",
    "ConvergenceError",
    "HomlabError",
    "UnderResolvedError",
    "GridFunction",
    "grid_norm",
    "HomogenizedSet",
    "assemble_homogenized",
    "oracle_1d_homogenize",
    "CoefficientSet",
    "PeriodicTensorField",
    "build_preset",
    "sample_field",
    "validate_coefficients",
    "ConvergenceReport",
    "SweepConfig",
    "emit_report",
    "fit_rate",
    "run_convergence_sweep",
    "boundary_cutoff",
    "layer_norm",
    "smooth_seps",
    "smooth_steklov",
]

__version__ = "0.1.0"
