"""Stochastic flow integration: positions, Jacobian and inverse Jacobian."""

from .integrator import (
    FlowState,
    FlowTrajectory,
    stratonovich_drift,
    stratonovich_drift_jacobian,
    step_flow,
    iter_flow,
    evolve_flow,
    flow_property_residual,
    commuting_flow_reference,
    sincos_rotated_driver,
)

__all__ = [
    "FlowState",
    "FlowTrajectory",
    "stratonovich_drift",
    "stratonovich_drift_jacobian",
    "step_flow",
    "iter_flow",
    "evolve_flow",
    "flow_property_residual",
    "commuting_flow_reference",
    "sincos_rotated_driver",
]
