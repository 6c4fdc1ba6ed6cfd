"""Quasilinear SPDE dU = d_i(A^{ij}(U) d_j U) dt + (b_n . grad U) dW_n by coefficient freezing."""

import logging
import math
from typing import Callable, List, Optional

import numpy as np

from ..core.grid import PeriodicGrid, ScalarField
from ..noise.brownian import BrownianPath
from ..noise.families import NoiseFamily
from ..transform.coefficients import CoefficientSet
from ..utils.errors import ConfigurationError, ParabolicityError
from .models import SolverConfig
from .solver import DirectSPDEStepper

logger = logging.getLogger(__name__)

QuasilinearFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def frozen_parabolicity(a_nodes: np.ndarray, b: np.ndarray) -> float:
    """Smallest eigenvalue of sym(a - 1/2 sum_n b_n (x) b_n) over the nodes."""
    reduced = a_nodes - 0.5 * np.einsum("qni,qnj->qij", b, b)
    sym = 0.5 * (reduced + np.swapaxes(reduced, -1, -2))
    return float(np.linalg.eigvalsh(sym)[:, 0].min())


def solve_quasilinear(
    A_fn: QuasilinearFn,
    family: NoiseFamily,
    U0: ScalarField,
    path: BrownianPath,
    grid: PeriodicGrid,
    T: float,
    cfg: SolverConfig,
    nu: Optional[float] = None,
    record_every: int = 1,
) -> List[ScalarField]:
    """Freeze a^k(x) = A(t_k, x, U^k(x)) and take one direct step per level.

    With ``nu`` set, every frozen coefficient is checked against it. Levels
    0, record_every, 2 record_every, ... and the final one are returned.
    """
    if not math.isclose(path.dt, cfg.dt, rel_tol=1e-12):
        raise ConfigurationError(f"path step {path.dt} differs from solver dt {cfg.dt}", field_path="solver.dt")
    K = int(round(T / cfg.dt))
    if not math.isclose(K * cfg.dt, T, rel_tol=1e-9) or K > path.K:
        raise ConfigurationError(f"T={T} does not fit the path ({path.K} steps of {cfg.dt})", field_path="time")

    x = grid.coordinates()

    def frozen(t, points):
        raise ConfigurationError("quasilinear coefficients are frozen per step")

    coeffs = CoefficientSet(dim=grid.dim, a=frozen, nu=nu or 0.0, M=math.inf)
    stepper = DirectSPDEStepper(grid, family, coeffs, cfg)
    U = U0
    out = [U]
    for k in range(K):
        t = k * cfg.dt
        a_nodes = np.asarray(A_fn(t, x, U.values), dtype=float).reshape(grid.size, grid.dim, grid.dim)
        if nu is not None:
            nu_hat = frozen_parabolicity(a_nodes, family.field(t, x))
            if nu_hat < nu - 1e-9:
                raise ParabolicityError(nu_hat, nu, t)
        U = stepper.step(U, t, path.increments[k], a_nodes=a_nodes)
        if (k + 1) % record_every == 0 or k + 1 == K:
            out.append(U)
    logger.debug("quasilinear solve: %d steps, |U_T|_inf=%.4g", K, np.abs(U.values).max())
    return out
