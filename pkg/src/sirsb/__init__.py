"""Numerical laboratory for the SIRS-B reaction-convection-diffusion cholera model."""

__version__ = "0.1.0"

from .model import Parameters, State, default_parameters, dfe, reaction, validate
from .operators import (
    Grid,
    TridiagonalOperator,
    apply,
    assemble_convection_diffusion_robin,
    assemble_diffusion_neumann,
    make_grid,
    solve_shifted,
)
from .solver import (
    SolverConfig,
    Trajectory,
    residual,
    simulate,
    simulate_scalar,
    steady_state_scalar,
    step,
)
from .spectral import (
    SpectralReport,
    principal_eigen_theta,
    r0_ode,
    r0_pde,
    sign_consistency,
)
