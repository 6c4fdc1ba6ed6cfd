"""Pathwise inversion of the flow map at one time level."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..core.grid import DisplacementField, interpolate, interpolate_gradient
from ..flow.integrator import FlowState
from ..utils.errors import InversionFailureError

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITER = 50
_BACKTRACK = 12
_ROUNDOFF = 64.0 * np.finfo(float).eps
_MIN_CELL_DET = 1e-12


@dataclass(frozen=True)
class InverseFlowField:
    """Psi_t(y) - y at the nodes together with the achieved residual."""

    t: float
    displacement: DisplacementField
    residual: float
    iterations: int

    @property
    def grid(self):
        return self.displacement.grid

    def positions(self) -> np.ndarray:
        return self.displacement.positions()


def _residual(state: FlowState, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    r = state.displacement.apply(x) - y
    return r, np.linalg.norm(r, axis=-1)


def _accepted(y: np.ndarray, tol: float) -> np.ndarray:
    """Per-point tolerance: tol, or the roundoff level of evaluating xi near y."""
    return np.maximum(tol, _ROUNDOFF * (1.0 + np.linalg.norm(y, axis=-1)))


def _newton_direction(state: FlowState, x: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve (Id + D delta(x)) s = r with the cell Jacobian of the interpolated map."""
    jac = np.eye(state.grid.dim) + interpolate_gradient(state.displacement, x)
    step = np.einsum("qij,qj->qi", interpolate(state.inv_jacobian, x), r)
    regular = np.linalg.det(jac) > _MIN_CELL_DET
    if regular.any():
        step[regular] = np.linalg.solve(jac[regular], r[regular][..., None])[..., 0]
    return step


def _solve(
    state: FlowState,
    y: np.ndarray,
    x0: np.ndarray,
    tol: float,
    max_iter: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Damped Newton iteration on x + delta(x) = y, vectorised over points.

    Returns the points, their residual norms, the per-point accepted
    tolerance and the number of sweeps.
    """
    x = np.array(x0, dtype=float)
    accepted = _accepted(y, tol)
    r, norm = _residual(state, x, y)
    iterations = 0
    while iterations < max_iter:
        active = norm > accepted
        if not active.any():
            break
        iterations += 1
        xa, ra, na, ya = x[active], r[active], norm[active], y[active]
        newton = _newton_direction(state, xa, ra)

        candidate = xa - newton
        rc, nc = _residual(state, candidate, ya)
        # plain contraction step where Newton made things worse
        worse = nc > na
        if worse.any():
            fixed = xa[worse] - ra[worse]
            rf, nf = _residual(state, fixed, ya[worse])
            better = nf < nc[worse]
            idx = np.flatnonzero(worse)[better]
            candidate[idx], rc[idx], nc[idx] = fixed[better], rf[better], nf[better]
        # damp whatever still does not decrease
        stalled = np.flatnonzero(nc > na)
        scale = 0.5
        for _ in range(_BACKTRACK):
            if not len(stalled):
                break
            trial = xa[stalled] - scale * newton[stalled]
            rt, nt = _residual(state, trial, ya[stalled])
            improved = nt < nc[stalled]
            idx = stalled[improved]
            candidate[idx], rc[idx], nc[idx] = trial[improved], rt[improved], nt[improved]
            stalled = stalled[nc[stalled] > na[stalled]]
            scale *= 0.5

        x[active], r[active], norm[active] = candidate, rc, nc
    return x, norm, accepted, iterations


def invert_flow_at(
    state: FlowState,
    y,
    x0=None,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Return x with |xi_t(x) - y| <= tol, xi_t and psi_t interpolated."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x0 = y if x0 is None else np.atleast_2d(np.asarray(x0, dtype=float))
    x, norm, accepted, iterations = _solve(state, y, x0, tol, max_iter)
    if norm[0] > accepted[0]:
        raise InversionFailureError(-1, float(norm[0]), iterations)
    return x[0]


def invert_flow_field(
    state: FlowState,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    previous: Optional[InverseFlowField] = None,
) -> InverseFlowField:
    """Invert the flow at every node, warm-started from the previous level."""
    grid = state.grid
    y = grid.coordinates()
    x0 = y if previous is None else previous.positions()
    x, norm, accepted, iterations = _solve(state, y, x0, tol, max_iter)
    failed = norm > accepted
    if failed.any():
        node = int(np.argmax(np.where(failed, norm, -np.inf)))
        raise InversionFailureError(node, float(norm[node]), iterations)
    logger.debug("inverse flow at t=%.6g: %d iterations, residual %.3e", state.t, iterations, norm.max())
    return InverseFlowField(state.t, DisplacementField(grid, x - y), float(norm.max()), iterations)


def reverse_round_trip_residual(
    state: FlowState,
    inverse: InverseFlowField,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """max_x |Psi_t(xi_t(x)) - x| over nodes.

    Psi_t at the off-grid points xi_t(x) is obtained by Newton inversion seeded
    from the interpolated inverse field.
    """
    x = state.grid.coordinates()
    targets = state.positions()
    seed = inverse.displacement.apply(targets)
    back, norm, accepted, iterations = _solve(state, targets, seed, tol, max_iter)
    failed = norm > accepted
    if failed.any():
        node = int(np.argmax(np.where(failed, norm, -np.inf)))
        raise InversionFailureError(node, float(norm[node]), iterations)
    return float(np.linalg.norm(back - x, axis=-1).max())
