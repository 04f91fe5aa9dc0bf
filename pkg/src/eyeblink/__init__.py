"""Spectral simulation of diffusion on a blinking eye-shaped domain."""

from .diagnostics import MassSeries, l2_relative_error, lid_center_values, mass
from .experiments import ExperimentConfig, PRESETS, preset, simulate, validate
from .geometry import (
    LidMotion,
    MappedGrid,
    StripMap,
    build_mapped_grid,
    complex_gradient,
    physical_divergence,
    physical_gradient,
)
from .integrator import DaeOptions, DaeProblem, StagnationError, make_consistent, solve_dae
from .pde import BlinkModel, DirichletHeatKernel, FluxModel, NoFlux, dae_residual, rhs_phi
from .spectral import ChebGrid1D, cheb_diffmat, cheb_points, clenshaw_curtis_weights

__version__ = "0.1.0"
