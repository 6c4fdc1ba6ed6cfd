"""Inverse flow: Newton inversion of xi_t at grid nodes."""

from .inverter import (
    InverseFlowField,
    invert_flow_at,
    invert_flow_field,
    reverse_round_trip_residual,
)

__all__ = [
    "InverseFlowField",
    "invert_flow_at",
    "invert_flow_field",
    "reverse_round_trip_residual",
]
