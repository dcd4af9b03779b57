"""Small-noise exit asymptotics near an unstable fixed point.

Spectral data, unstable curve and time-shift constants of the deterministic
flow, the Gaussian scale of the limiting exit time, and Monte Carlo
validation of the resulting exit law.
"""

from .dynsys import (
    Ball,
    Box,
    LevelSet,
    SpectralData,
    VectorFieldModel,
    find_fixed_point,
    project_L,
    project_v,
    spectral_data,
)
from .errors import SaddleExitError
from .flow import boundary_hits, h_constants, integrate_flow, unstable_curve_point
from .mc import compare_to_limit, convergence_sweep, gronwall_check, ks_distance, lemma_tests, run_batch
from .models import build_model, linear_model, registry_model, truth_card
from .noise import NoiseStream
from .sde import simulate_exit, simulate_linearized, simulate_path, tau_linear_threshold
from .theory import ExitLawParams, LimitLaw, estimate_N, sigma_at_origin, sigma_via_adjoint

__version__ = "0.1.0"

__all__ = [
    "Ball", "Box", "ExitLawParams", "LevelSet", "LimitLaw", "NoiseStream", "SaddleExitError",
    "SpectralData", "VectorFieldModel", "boundary_hits", "build_model", "compare_to_limit",
    "convergence_sweep", "estimate_N", "find_fixed_point", "gronwall_check", "h_constants",
    "integrate_flow", "ks_distance", "lemma_tests", "linear_model", "project_L", "project_v",
    "registry_model", "run_batch", "sigma_at_origin", "sigma_via_adjoint", "simulate_exit",
    "simulate_linearized", "simulate_path", "spectral_data", "tau_linear_threshold", "truth_card",
]
