"""Brownian drivers and transport-noise families."""

from .brownian import BrownianPath, derive_path_seed, sample_brownian_increments
from .families import (
    NoiseFamily,
    PeriodicProfile,
    BUILTIN_FAMILIES,
    builtin_noise_family,
    custom_noise_family,
    lie_bracket,
)

__all__ = [
    "BrownianPath",
    "derive_path_seed",
    "sample_brownian_increments",
    "NoiseFamily",
    "PeriodicProfile",
    "BUILTIN_FAMILIES",
    "builtin_noise_family",
    "custom_noise_family",
    "lie_bracket",
]
