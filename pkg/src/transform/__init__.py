"""Transformation of the SPDE data into an omega-wise parabolic PDE."""

from .coefficients import (
    CoefficientFn,
    CoefficientSet,
    TransformedCoefficients,
    constant_coefficient,
    coefficient_from_field,
    checkerboard_diffusion,
    inverse_jacobian_divergence,
    transformed_coefficients,
    transformed_rhs,
    combined_rhs,
    degeneracy_mask,
    transform_level,
)
from .heat import HeatSplitStepper, solve_h

__all__ = [
    "CoefficientFn",
    "CoefficientSet",
    "TransformedCoefficients",
    "constant_coefficient",
    "coefficient_from_field",
    "checkerboard_diffusion",
    "inverse_jacobian_divergence",
    "transformed_coefficients",
    "transformed_rhs",
    "combined_rhs",
    "degeneracy_mask",
    "transform_level",
    "HeatSplitStepper",
    "solve_h",
]
