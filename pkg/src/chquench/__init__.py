"""Boundary optimal control of a Cahn-Hilliard-type phase-field system with
dynamic boundary conditions, and its deep-quench limit."""
from .adjoint import AdjointTrajectory, complementarity_products, solve_adjoint
from .control import (AdmissibleSet, ControlProblem, OptimizeResult, gradient_check, optimize,
                      project, reduced_gradient, stationarity_residual)
from .cost import CostWeights, adapted_cost, cost, cost_terms
from .grid import StripGrid
from .physics import (AssumptionError, DomainError, PotentialSet, default_potentials,
                      subdifferential_check)
from .problems import pure_control_problem, tracking_problem
from .quench import QuenchReport, QuenchSchedule, run_quench, xi_limit_check
from .state import SolveError, SolverOptions, StateTrajectory, energy_ledger, solve_state

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory", "AdmissibleSet", "AssumptionError", "ControlProblem", "CostWeights",
    "DomainError", "OptimizeResult", "PotentialSet", "QuenchReport", "QuenchSchedule",
    "SolveError", "SolverOptions", "StateTrajectory", "StripGrid", "adapted_cost",
    "complementarity_products", "cost", "cost_terms", "default_potentials", "energy_ledger",
    "gradient_check", "optimize", "project", "pure_control_problem", "reduced_gradient", "run_quench", "solve_adjoint",
    "solve_state", "stationarity_residual", "subdifferential_check", "tracking_problem",
    "xi_limit_check",
]
