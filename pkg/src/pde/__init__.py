"""Parabolic solvers for the transformed PDE and the direct SPDE."""

from .models import SolverConfig
from .solver import (
    ThetaSystem,
    RandomPDEStepper,
    DirectSPDEStepper,
    solve_random_pde,
    compose_level,
    compose_back,
    solve_spde_direct,
)
from .quasilinear import frozen_parabolicity, solve_quasilinear

__all__ = [
    "SolverConfig",
    "ThetaSystem",
    "RandomPDEStepper",
    "DirectSPDEStepper",
    "solve_random_pde",
    "compose_level",
    "compose_back",
    "solve_spde_direct",
    "frozen_parabolicity",
    "solve_quasilinear",
]
