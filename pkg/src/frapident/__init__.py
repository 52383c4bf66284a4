"""Transport/diffusion FRAP model with identifiability analysis."""

from .core import (
    BleachSpec,
    Config,
    FieldState,
    FrapCurve,
    FrapError,
    ModelParams,
    RegionConfig,
    SpatialGrid,
    load_config,
)
from .estimation import FitOptions, estimate_sigma, fit, generate_synthetic, read_curve_csv
from .estimator import FrapRegressor
from .likelihood import Identifiability, profile_1d, profile_2d, threshold
from .pipeline import run_pipeline
from .relationships import s_profile, slope_field, tau_curve, trace_contour
from .solver import SpotResponse, simulate_frap

__version__ = "0.1.0"

__all__ = [
    "BleachSpec", "Config", "FieldState", "FitOptions", "FrapCurve", "FrapError",
    "FrapRegressor", "Identifiability", "ModelParams", "RegionConfig", "SpatialGrid",
    "SpotResponse", "estimate_sigma", "fit", "generate_synthetic", "load_config",
    "profile_1d", "profile_2d", "read_curve_csv", "run_pipeline", "s_profile",
    "simulate_frap", "slope_field", "tau_curve", "threshold", "trace_contour",
]
