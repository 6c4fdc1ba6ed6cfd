"""SPDE data and its transformation along the stochastic flow.

Index conventions: Dxi[i, j] = d_j xi^i, psi = Dxi^{-1} and psi^i_j = psi[i, j].
All quantities are evaluated at the moved points xi_t(x) of the grid nodes x.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from ..core import stencils
from ..core.grid import GridField, MatrixField, PeriodicGrid, ScalarField, VectorField, interpolate
from ..flow.integrator import FlowState
from ..noise.families import NoiseFamily
from ..utils.errors import ConfigurationError, TransformationError

logger = logging.getLogger(__name__)

CoefficientFn = Callable[[float, np.ndarray], np.ndarray]


def constant_coefficient(value) -> CoefficientFn:
    value = np.asarray(value, dtype=float)

    def fn(t: float, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(value, (len(x),) + value.shape).copy()

    return fn


def coefficient_from_field(field: GridField, method: str = "linear") -> CoefficientFn:
    """Sample a stored grid field at arbitrary points (time independent)."""

    def fn(t: float, x: np.ndarray) -> np.ndarray:
        return np.asarray(interpolate(field, np.atleast_2d(x), method=method))

    return fn


def checkerboard_diffusion(dim: int, cells: int, low: float, high: float, seed: int) -> CoefficientFn:
    """Piecewise-constant a = c(cell) Id with c ~ U[low, high] per cell, nearest-cell sampling."""
    if not 0 < low <= high:
        raise ConfigurationError("checkerboard needs 0 < low <= high", field_path="coefficients.a")
    values = np.random.Generator(np.random.Philox(key=seed)).uniform(low, high, size=(cells,) * dim)
    eye = np.eye(dim)

    def fn(t: float, x: np.ndarray) -> np.ndarray:
        idx = np.floor(np.mod(x, 1.0) * cells).astype(np.int64) % cells
        return values[tuple(idx.T)][:, None, None] * eye

    return fn


@dataclass(frozen=True)
class CoefficientSet:
    """Data (a, a^i, a^0, b^0, f^0, f^i, g_n) of the linear SPDE and declared (nu, M).

    Missing optional terms evaluate to zero.
    """

    dim: int
    a: CoefficientFn
    nu: float
    M: float
    a_lin: Optional[CoefficientFn] = None
    a0: Optional[CoefficientFn] = None
    b0: Optional[CoefficientFn] = None
    f0: Optional[CoefficientFn] = None
    f_vec: Optional[CoefficientFn] = None
    g: Optional[CoefficientFn] = None
    rough: bool = False

    def eval_a(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.a(t, x), dtype=float).reshape(len(x), self.dim, self.dim)

    def eval_a_lin(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._optional(self.a_lin, t, x, (self.dim,))

    def eval_a0(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._optional(self.a0, t, x, ())

    def eval_f0(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._optional(self.f0, t, x, ())

    def eval_f_vec(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._optional(self.f_vec, t, x, (self.dim,))

    def eval_b0(self, t: float, x: np.ndarray, n_modes: int) -> np.ndarray:
        return self._optional(self.b0, t, x, (n_modes,))

    def eval_g(self, t: float, x: np.ndarray, n_modes: int) -> np.ndarray:
        return self._optional(self.g, t, x, (n_modes,))

    @staticmethod
    def _optional(fn: Optional[CoefficientFn], t: float, x: np.ndarray, tail) -> np.ndarray:
        if fn is None:
            return np.zeros((len(x),) + tuple(tail))
        return np.asarray(fn(t, x), dtype=float).reshape((len(x),) + tuple(tail))

    @property
    def has_noise_forcing(self) -> bool:
        return self.g is not None


@dataclass(frozen=True)
class TransformedCoefficients:
    """omega-wise PDE data at one time level."""

    t: float
    alpha: MatrixField
    alpha_lin: VectorField
    F0: ScalarField
    F_vec: VectorField
    G: Tuple[ScalarField, ...]
    Fbar0: Optional[ScalarField] = None
    Fbar_vec: Optional[VectorField] = None
    degeneracy: np.ndarray = field(default=None)

    @property
    def grid(self) -> PeriodicGrid:
        return self.alpha.grid

    @property
    def degenerate_count(self) -> int:
        return 0 if self.degeneracy is None else int(np.count_nonzero(self.degeneracy))

    def G_array(self) -> np.ndarray:
        if not self.G:
            return np.zeros((self.grid.size, 0))
        return np.stack([g.values for g in self.G], axis=-1)


def _check_finite(values: np.ndarray, quantity: str):
    bad = ~np.isfinite(values.reshape(len(values), -1)).all(axis=1)
    if bad.any():
        raise TransformationError(int(np.argmax(bad)), quantity)


def inverse_jacobian_divergence(state: FlowState) -> np.ndarray:
    """c_j = sum_k d_k psi[k, j], with d_k psi = -psi (d_k Dxi) psi."""
    psi = state.inv_jacobian.values
    d_jac = stencils.central_jacobian(state.grid, state.jacobian.values)
    d_psi = -np.einsum("qij,kqjl,qlm->kqim", psi, d_jac, psi)
    return np.einsum("kqkj->qj", d_psi)


def transformed_coefficients(
    coeffs: CoefficientSet,
    family: NoiseFamily,
    state: FlowState,
    t: float,
    include_diffusion_remainder: bool = True,
) -> Tuple[MatrixField, VectorField]:
    """(alpha^{ij}, alpha^i) of the transformed equation at every node.

    With ``include_diffusion_remainder`` the drift also carries -(psi a^T c),
    the lower order part left over when d_i(a^{ij} d_j .) is rewritten in
    divergence form in the moved coordinates.
    """
    if coeffs.a0 is not None or coeffs.b0 is not None:
        raise ConfigurationError("zeroth-order terms a0/b0 are only supported by the direct solver")
    grid = state.grid
    x = state.positions()
    psi = state.inv_jacobian.values
    a = coeffs.eval_a(t, x)
    b = family.field(t, x)
    jac = family.jacobian(t, x)
    div_b = np.trace(jac, axis1=-2, axis2=-1)
    mu = 0.5 * np.einsum("qnij,qnj->qi", jac, b)
    c = inverse_jacobian_divergence(state)

    reduced = a - 0.5 * family.sum_outer(t, x)
    alpha = np.einsum("qik,qkl,qjl->qij", psi, reduced, psi)

    psi_b = np.einsum("qij,qnj->qni", psi, b)
    drift = np.einsum("qij,qj->qi", psi, mu + coeffs.eval_a_lin(t, x))
    drift -= 0.5 * np.einsum("qij,qnjk,qnk->qi", psi, jac, b)
    drift += 0.5 * np.einsum("qn,qni->qi", div_b, psi_b)
    drift += 0.5 * np.einsum("qj,qnj,qni->qi", c, b, psi_b)
    if include_diffusion_remainder:
        drift -= np.einsum("qil,qkl,qk->qi", psi, a, c)

    _check_finite(alpha, "alpha")
    _check_finite(drift, "alpha_lin")
    return MatrixField(grid, alpha), VectorField(grid, drift)


def transformed_rhs(
    coeffs: CoefficientSet,
    family: NoiseFamily,
    state: FlowState,
    t: float,
) -> Tuple[ScalarField, VectorField, Tuple[ScalarField, ...]]:
    """(F^0, F^i, G_n) at every node."""
    grid = state.grid
    x = state.positions()
    psi = state.inv_jacobian.values
    n_modes = family.n_modes
    f0 = coeffs.eval_f0(t, x)
    f_vec = coeffs.eval_f_vec(t, x)
    g = coeffs.eval_g(t, x, n_modes)

    F0 = f0.copy()
    F_vec = np.einsum("qij,qj->qi", psi, f_vec)
    if np.any(f_vec):
        F0 -= np.einsum("qj,qj->q", inverse_jacobian_divergence(state), f_vec)
    if n_modes and np.any(g):
        psi_b = np.einsum("qij,qnj->qni", psi, family.field(t, x))
        div_psi_b = np.stack([stencils.divergence(grid, psi_b[:, n]) for n in range(n_modes)], axis=-1)
        F0 += np.einsum("qn,qn->q", div_psi_b, g)
        F_vec -= np.einsum("qni,qn->qi", psi_b, g)

    _check_finite(F0, "F0")
    _check_finite(F_vec, "F_vec")
    _check_finite(g, "G")
    G = tuple(ScalarField(grid, g[:, n]) for n in range(n_modes))
    return ScalarField(grid, F0), VectorField(grid, F_vec), G


def combined_rhs(
    F0: ScalarField,
    F_vec: VectorField,
    alpha: MatrixField,
    alpha_lin: VectorField,
    h_level: ScalarField,
) -> Tuple[ScalarField, VectorField]:
    """Right-hand sides of z = v - h: F0 + alpha^i d_i h and F^i + alpha^{ij} d_j h - d_i h."""
    grid = h_level.grid
    grad_h = stencils.gradient(grid, h_level.values)
    Fbar0 = F0.values + np.einsum("qi,qi->q", alpha_lin.values, grad_h)
    Fbar_vec = F_vec.values + np.einsum("qij,qj->qi", alpha.values, grad_h) - grad_h
    return ScalarField(grid, Fbar0), VectorField(grid, Fbar_vec)


def degeneracy_mask(alpha: MatrixField, floor: float = 0.0) -> np.ndarray:
    """Nodes where sym(alpha) is not positive definite."""
    return np.linalg.eigvalsh(alpha.symmetric_part())[:, 0] <= floor


def transform_level(
    coeffs: CoefficientSet,
    family: NoiseFamily,
    state: FlowState,
    t: float,
    h_level: Optional[ScalarField] = None,
    include_diffusion_remainder: bool = True,
) -> TransformedCoefficients:
    """Assemble every transformed quantity for one level."""
    alpha, alpha_lin = transformed_coefficients(coeffs, family, state, t, include_diffusion_remainder)
    F0, F_vec, G = transformed_rhs(coeffs, family, state, t)
    Fbar0, Fbar_vec = F0, F_vec
    if h_level is not None:
        Fbar0, Fbar_vec = combined_rhs(F0, F_vec, alpha, alpha_lin, h_level)
    mask = degeneracy_mask(alpha)
    if mask.any():
        logger.warning("t=%.6g: %d nodes with non-positive transformed diffusion", t, int(mask.sum()))
    return TransformedCoefficients(t, alpha, alpha_lin, F0, F_vec, G, Fbar0, Fbar_vec, mask)
