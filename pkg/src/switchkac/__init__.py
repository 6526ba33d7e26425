"""Regime-switching jump diffusions: simulation, Feynman-Kac estimators and PIDE checks."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DomainError, NumericalError, QuadratureError,
                     SimulationError, StabilityError, SwitchKacError)
from .estimate import Accumulator, Estimate
from .levy import CompoundPoisson, QuadParams, SeparableJump, StableLike, Tabulated
from .model import HybridState, ModelSpec, ScalarField, apply_generator, validate_model
from .path_sim import Box, Path, SimParams, simulate_ensemble, simulate_path
from .feynman_kac import (DirichletProblemSpec, dynkin_residual, estimate_dirichlet,
                          estimate_initial_value, estimate_terminal_value)
from .pide import Extension, Grid1D, PideSolution, apply_discrete_generator, solve_cauchy, solve_dirichlet

__all__ = [
    "Accumulator", "Box", "CompoundPoisson", "ConfigurationError", "DirichletProblemSpec",
    "DomainError", "Estimate", "Extension", "Grid1D", "HybridState", "ModelSpec",
    "NumericalError", "Path", "PideSolution", "QuadParams", "QuadratureError", "ScalarField",
    "SeparableJump", "SimParams", "SimulationError", "StabilityError", "StableLike",
    "SwitchKacError", "Tabulated", "apply_discrete_generator", "apply_generator",
    "dynkin_residual", "estimate_dirichlet", "estimate_initial_value", "estimate_terminal_value",
    "simulate_ensemble", "simulate_path", "solve_cauchy", "solve_dirichlet", "validate_model",
]
