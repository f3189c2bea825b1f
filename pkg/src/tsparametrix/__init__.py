"""Transition densities of SDEs driven by tempered stable processes.

Parametrix series for the density, its two-sided bounds, the frozen
(constant-coefficient) densities it is built from, and a Monte Carlo
simulator for cross-checks.
"""
from .errors import (AssumptionError, ConfigurationError, DivergenceError, FlowIntegrationError, PrecisionError,
                     QuadratureError, ResolutionError, SimulationError, TsParametrixError)
from .flow import Coefficients, constant_coefficients, flow, flow_map, holder_coefficients, make_coefficients
from .frozen import DensityField, SpaceGrid, dirac_probe, frozen_density_grid, frozen_density_point
from .levy import (LevyModel, SpectralMeasure, Tempering, exponent, isotropic_stable, product_stable,
                   relativistic_stable, sample_large_jump, small_jump_covariance, tail_mass, validate_assumptions)
from .parametrix import ConvolutionScheme, KernelField, SeriesState, convolve, density, kernel_H, series
from .bounds import QProfile, hbar, pbar, plow, smoothing_integral
from .mc import EmpiricalDensity, PathEnsemble, SimConfig, compare, empirical_density, simulate

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "Coefficients",
    "ConfigurationError",
    "ConvolutionScheme",
    "DensityField",
    "DivergenceError",
    "EmpiricalDensity",
    "FlowIntegrationError",
    "KernelField",
    "LevyModel",
    "PathEnsemble",
    "PrecisionError",
    "QProfile",
    "QuadratureError",
    "ResolutionError",
    "SeriesState",
    "SimConfig",
    "SimulationError",
    "SpaceGrid",
    "SpectralMeasure",
    "Tempering",
    "TsParametrixError",
    "compare",
    "constant_coefficients",
    "convolve",
    "density",
    "dirac_probe",
    "empirical_density",
    "exponent",
    "flow",
    "flow_map",
    "frozen_density_grid",
    "frozen_density_point",
    "hbar",
    "holder_coefficients",
    "isotropic_stable",
    "kernel_H",
    "make_coefficients",
    "pbar",
    "plow",
    "product_stable",
    "relativistic_stable",
    "sample_large_jump",
    "series",
    "simulate",
    "small_jump_covariance",
    "smoothing_integral",
    "tail_mass",
    "validate_assumptions",
]
