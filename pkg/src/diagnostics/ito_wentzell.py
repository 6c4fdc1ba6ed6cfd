"""Weak Ito-Wentzell check along a simulated path.

For v_t = u_t o xi_t and a test function phi,

    <v_t, phi> = <u_t, phibar_t> = sum_x u_t(xi_t(x)) phi(x) h^d,

with phibar_t(y) = phi(Psi_t(y)) det psi_t(Psi_t(y)). The pairing is taken in
the Lagrangian form on the right, u being evaluated off the grid through its
trigonometric interpolant, so no inverse flow enters.

Per step the increment of the pairing is compared with the Ito-Wentzell terms

    du(xi) + grad u(xi) . dxi + 1/2 D^2 u(xi) : dxi dxi + grad du(xi) . dxi

where du is the direct solver's increment (theta-weighted drift plus its
explicit noise part) and dxi = mu dt - sum_n b_n dW_n is the flow increment.
Quadratic terms use the products of the increments that drove the step, so
the residual is of order dt.
"""

import logging
from itertools import combinations_with_replacement
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..core import stencils
from ..core.grid import PeriodicGrid, ScalarField
from ..flow.integrator import FlowState
from ..noise.brownian import BrownianPath
from ..noise.families import NoiseFamily
from ..pde.models import SolverConfig
from ..pde.solver import DirectSPDEStepper
from ..transform.coefficients import CoefficientSet

logger = logging.getLogger(__name__)

TestFunction = Callable[[np.ndarray], np.ndarray]


def cosine_test_function(x: np.ndarray) -> np.ndarray:
    return np.cos(2.0 * np.pi * x[:, 0])


class TrigonometricInterpolant:
    """Periodic trigonometric interpolant of node values and its derivatives.

    The Nyquist mode is carried with frequency -n/2 and only the real part is
    returned, so node values are reproduced exactly.
    """

    def __init__(self, grid: PeriodicGrid, values: np.ndarray):
        self.grid = grid
        self.coefficients = np.fft.fftn(grid.reshape(np.asarray(values, dtype=float))) / grid.size
        self.waves = 2j * np.pi * np.fft.fftfreq(grid.n, d=1.0 / grid.n)

    def phases(self, points: np.ndarray) -> List[np.ndarray]:
        """exp(2 pi i k x_axis) per axis, each of shape (Q, n)."""
        return [np.exp(np.outer(points[:, axis], self.waves)) for axis in range(self.grid.dim)]

    def derivative(self, phases: List[np.ndarray], orders: Tuple[int, ...]) -> np.ndarray:
        c = self.coefficients
        for axis, order in enumerate(orders):
            if order:
                shape = [1] * self.grid.dim
                shape[axis] = self.grid.n
                c = c * (self.waves ** order).reshape(shape)
        if self.grid.dim == 1:
            out = phases[0] @ c
        else:
            out = np.einsum("qb,qb->q", phases[0] @ c, phases[1])
        return out.real

    def gradient(self, phases: List[np.ndarray]) -> np.ndarray:
        dim = self.grid.dim
        return np.stack([self.derivative(phases, _orders(dim, (i,))) for i in range(dim)], axis=-1)

    def hessian(self, phases: List[np.ndarray]) -> np.ndarray:
        dim = self.grid.dim
        out = np.zeros((phases[0].shape[0], dim, dim))
        for i, j in combinations_with_replacement(range(dim), 2):
            out[:, i, j] = out[:, j, i] = self.derivative(phases, _orders(dim, (i, j)))
        return out


def _orders(dim: int, axes: Tuple[int, ...]) -> Tuple[int, ...]:
    return tuple(axes.count(axis) for axis in range(dim))


def _pairing(grid: PeriodicGrid, values: np.ndarray, positions: np.ndarray, weight: np.ndarray) -> float:
    """sum_x u(xi(x)) phi(x) h^d."""
    interpolant = TrigonometricInterpolant(grid, values)
    return float(np.dot(interpolant.derivative(interpolant.phases(positions), (0,) * grid.dim), weight))


def ito_wentzell_residual(
    u_levels: Sequence[ScalarField],
    states: Sequence[FlowState],
    family: NoiseFamily,
    coeffs: CoefficientSet,
    path: BrownianPath,
    cfg: SolverConfig,
    phi: Optional[TestFunction] = None,
) -> float:
    """|LHS - RHS| of the tested Ito-Wentzell identity at the final level."""
    phi = phi or cosine_test_function
    K = len(u_levels) - 1
    if len(states) != K + 1:
        raise ValueError(f"{K + 1} solution levels but {len(states)} flow levels")
    grid: PeriodicGrid = u_levels[0].grid
    x = grid.coordinates()
    dt = path.dt
    weight = phi(x) * grid.cell_volume
    stepper = DirectSPDEStepper(grid, family, coeffs, cfg)

    rhs = 0.0
    operator_key, operator = None, None
    for k in range(K):
        t = k * dt
        u, u_next = u_levels[k].values, u_levels[k + 1].values
        dW = path.increments[k]

        a, a_lin, a0 = coeffs.eval_a(t, x), coeffs.eval_a_lin(t, x), coeffs.eval_a0(t, x)
        key = (a, a_lin, a0)
        if operator_key is None or not all(np.array_equal(p, q) for p, q in zip(key, operator_key)):
            operator_key = key
            operator = stencils.parabolic_operator(grid, a, a_lin, a0, averaging=cfg.face_average)
        drift = cfg.theta * (operator @ u_next) + (1.0 - cfg.theta) * (operator @ u)
        drift = drift + coeffs.eval_f0(t, x) + stencils.face_divergence(grid, coeffs.eval_f_vec(t, x))
        du = dt * drift + stepper.noise_increment(u, t, dW)

        xi = states[k].positions()
        if family.n_modes:
            b = family.field(t, xi)
            mu = 0.5 * np.einsum("qnij,qnj->qi", family.jacobian(t, xi), b)
            dxi = mu * dt - np.einsum("qni,n->qi", b, dW)
        else:
            dxi = np.zeros_like(xi)

        current = TrigonometricInterpolant(grid, u)
        increment = TrigonometricInterpolant(grid, du)
        phases = current.phases(xi)
        terms = increment.derivative(phases, (0,) * grid.dim)
        terms = terms + np.einsum("qi,qi->q", current.gradient(phases) + increment.gradient(phases), dxi)
        terms = terms + 0.5 * np.einsum("qij,qi,qj->q", current.hessian(phases), dxi, dxi)
        rhs += float(np.dot(terms, weight))

    lhs = _pairing(grid, u_levels[K].values, states[K].positions(), weight)
    lhs -= _pairing(grid, u_levels[0].values, states[0].positions(), weight)
    residual = abs(lhs - rhs)
    logger.debug("Ito-Wentzell: lhs=%.6e rhs=%.6e residual=%.3e", lhs, rhs, residual)
    return residual
