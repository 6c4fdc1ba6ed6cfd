"""Numerical surrogates for the regularity theory: parabolicity, Hoelder, stopping, Ito-Wentzell."""

from .parabolicity import (
    ParabolicityReport,
    AlphaBoundsReport,
    parabolicity_report,
    ellipticity_ratio,
    ellipticity_ratio_field,
    lambda_tail_probability,
    alpha_bounds_check,
)
from .hoelder import HoelderEstimate, fit_modulus, hoelder_estimate, inverse_temporal_hoelder
from .stopping import StoppingReport, StoppingMonitor, flow_distortion, stopping_time_first_exceed
from .ito_wentzell import TrigonometricInterpolant, cosine_test_function, ito_wentzell_residual
from .kolmogorov import empirical_kc_constant

__all__ = [
    "ParabolicityReport",
    "AlphaBoundsReport",
    "parabolicity_report",
    "ellipticity_ratio",
    "ellipticity_ratio_field",
    "lambda_tail_probability",
    "alpha_bounds_check",
    "HoelderEstimate",
    "fit_modulus",
    "hoelder_estimate",
    "inverse_temporal_hoelder",
    "StoppingReport",
    "StoppingMonitor",
    "flow_distortion",
    "stopping_time_first_exceed",
    "cosine_test_function",
    "TrigonometricInterpolant",
    "ito_wentzell_residual",
    "empirical_kc_constant",
]
