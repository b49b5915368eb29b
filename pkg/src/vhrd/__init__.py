"""Finite-difference toolkit for a vector-host reaction-diffusion epidemic model."""

from .errors import ConfigError, ConvergenceError, PositivityError, StepRejected
from .grid import (Bump, Constant, Field, Grid, ModelCoefficients, Nodes, Ramp, assemble_diffusion,
                   build_grid, diffusion_operator, field_from_profile, integrate_field)
from .linalg import (EigenResult, cooperative_principal_eigenvalue, principal_eigenvalue, solve_linear,
                     spectral_radius_positive)
from .equilibria import compute_endemic, compute_vhat, enumerate_equilibria, steady_residual
from .r0 import compute_r0_direct, compute_r0_factored, spectral_report
from .state import SimState
from .dynamics import run_until_steady, step_full, verify_logistic_reduction
from .ode import OdeParams, OdeState, ode_equilibria, ode_r0, ode_step

__version__ = "0.1.0"

__all__ = [
    "Bump", "ConfigError", "Constant", "ConvergenceError", "EigenResult", "Field", "Grid",
    "ModelCoefficients", "Nodes", "OdeParams", "OdeState", "PositivityError", "Ramp", "SimState",
    "StepRejected", "assemble_diffusion", "build_grid", "compute_endemic", "compute_r0_direct",
    "compute_r0_factored", "compute_vhat", "cooperative_principal_eigenvalue", "diffusion_operator",
    "enumerate_equilibria", "field_from_profile", "integrate_field", "ode_equilibria", "ode_r0",
    "ode_step", "principal_eigenvalue", "run_until_steady", "solve_linear", "spectral_radius_positive",
    "spectral_report", "step_full", "steady_residual", "verify_logistic_reduction",
]
