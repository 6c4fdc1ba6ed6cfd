"""Auxiliary heat equation dh = Delta h dt + G_n dW_n absorbing the additive noise."""

import logging
import math
from typing import List, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..core import stencils
from ..core.grid import PeriodicGrid, ScalarField
from ..noise.brownian import BrownianPath
from ..utils.errors import ConfigurationError, LinearSolveError

logger = logging.getLogger(__name__)


class HeatSplitStepper:
    """Semi-implicit steps (Id - dt Delta_h) h^{k+1} = h^k + sum_n G_n^k dW_n^k."""

    def __init__(self, grid: PeriodicGrid, dt: float):
        self.grid = grid
        self.dt = dt
        system = sp.identity(grid.size, format="csc") - dt * stencils.laplacian_matrix(grid).tocsc()
        self._lu = splu(system.tocsc())

    def initial(self) -> ScalarField:
        return ScalarField(self.grid, np.zeros(self.grid.size))

    def step(self, h: ScalarField, G: np.ndarray, dW: np.ndarray, t: float = 0.0) -> ScalarField:
        rhs = h.values + (G @ dW if G.size else 0.0)
        out = self._lu.solve(np.asarray(rhs, dtype=float))
        if not np.isfinite(out).all():
            raise LinearSolveError(-1, t + self.dt)
        return ScalarField(self.grid, out)


def solve_h(
    G_levels: Sequence[np.ndarray],
    grid: PeriodicGrid,
    path: BrownianPath,
    T: float,
    dt: float,
) -> List[ScalarField]:
    """h at t_0..t_K from per-level forcing G_levels[k] of shape (size, N); h^0 = 0."""
    K = int(round(T / dt))
    if not math.isclose(K * dt, T, rel_tol=1e-9) or not math.isclose(dt, path.dt, rel_tol=1e-12):
        raise ConfigurationError(f"T={T}, dt={dt} incompatible with path step {path.dt}", field_path="time")
    if len(G_levels) < K:
        raise ConfigurationError(f"need forcing on {K} levels, got {len(G_levels)}")
    stepper = HeatSplitStepper(grid, dt)
    h = stepper.initial()
    out = [h]
    for k in range(K):
        h = stepper.step(h, np.asarray(G_levels[k], dtype=float), path.increments[k], k * dt)
        out.append(h)
    return out
