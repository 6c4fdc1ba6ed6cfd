"""Solver settings."""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dt: float = Field(default=1e-4, gt=0)
    theta: float = Field(default=1.0, ge=0.0, le=1.0)
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=1000, gt=0)
    cfl: float = Field(default=0.5, gt=0)
    blowup_bound: float = Field(default=1e6, gt=0)
    noise_scheme: Literal["euler", "milstein"] = "milstein"
    flow_scheme: Literal["euler", "exponential"] = "euler"
    face_average: Literal["arithmetic", "harmonic"] = "arithmetic"
    linear_solver: Literal["bicgstab", "splu"] = "bicgstab"
    inversion_tol: float = Field(default=1e-10, gt=0)
    inversion_max_iter: int = Field(default=50, gt=0)
    include_diffusion_remainder: bool = True
