"""Cavity-method theory and Monte Carlo checks for l1 / Elastic Net signal reconstruction."""
from __future__ import annotations

__version__ = "0.1.0"

from .boundary import (BoundaryPoint, bp_alpha_c, bp_boundary_parametric, bp_sparse_asymptote,
                       critical_alpha, en_boundary, en_boundary_parametric)
from .cavity import CavityState, EnsembleSpec, solve, solve_bp_full, solve_bp_perfect_phase, solve_en_full, \
    solve_ridge, sweep
from .errors import (CavityError, NonConvergenceError, ParameterDomainError, PhaseDomainError,
                     QuadratureError, SolverFailure, SweepError)
from .priors import SignalPrior

__all__ = [
    "BoundaryPoint", "CavityError", "CavityState", "EnsembleSpec", "NonConvergenceError",
    "ParameterDomainError", "PhaseDomainError", "QuadratureError", "SignalPrior", "SolverFailure",
    "SweepError", "__version__", "bp_alpha_c", "bp_boundary_parametric", "bp_sparse_asymptote",
    "critical_alpha", "en_boundary", "en_boundary_parametric", "solve", "solve_bp_full",
    "solve_bp_perfect_phase", "solve_en_full", "solve_ridge", "sweep",
]
