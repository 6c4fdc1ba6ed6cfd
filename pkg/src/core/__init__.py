"""Periodic grids, node fields and finite-difference operators."""

from .grid import (
    PeriodicGrid,
    GridField,
    ScalarField,
    VectorField,
    MatrixField,
    DisplacementField,
    RatioField,
    wrap_index,
    interpolate,
    interpolate_gradient,
)
from . import stencils

__all__ = [
    "PeriodicGrid",
    "GridField",
    "ScalarField",
    "VectorField",
    "MatrixField",
    "DisplacementField",
    "RatioField",
    "wrap_index",
    "interpolate",
    "interpolate_gradient",
    "stencils",
]
