"""Finite-difference solvers: the transformed random PDE and the SPDE itself."""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import bicgstab, splu

from ..core import stencils
from ..core.grid import PeriodicGrid, ScalarField, interpolate
from ..inverse.inverter import InverseFlowField
from ..noise.brownian import BrownianPath
from ..noise.families import NoiseFamily
from ..transform.coefficients import CoefficientSet, TransformedCoefficients
from ..utils.errors import (
    BlowUpError,
    CFLViolationError,
    ConfigurationError,
    DegenerateCoefficientsError,
    LinearSolveError,
)
from .models import SolverConfig

logger = logging.getLogger(__name__)


class ThetaSystem:
    """Solves (Id - theta dt L) x = rhs, reusing work while L stays the same."""

    def __init__(self, grid: PeriodicGrid, cfg: SolverConfig):
        self.grid = grid
        self.cfg = cfg
        self._key: Optional[tuple] = None
        self._operator: Optional[sp.csr_matrix] = None
        self._system: Optional[sp.csr_matrix] = None
        self._lu = None
        self._precond = None

    def operator(self, key: tuple, build) -> sp.csr_matrix:
        """Return L, rebuilding only when the coefficient arrays in ``key`` change."""
        if self._key is None or len(key) != len(self._key) or not all(
            np.array_equal(a, b) for a, b in zip(key, self._key)
        ):
            self._key = tuple(np.array(k, copy=True) for k in key)
            self._operator = build()
            eye = sp.identity(self.grid.size, format="csr")
            self._system = (eye - self.cfg.theta * self.cfg.dt * self._operator).tocsr()
            self._lu = None
            self._precond = sp.diags(1.0 / self._system.diagonal())
        return self._operator

    def solve(self, rhs: np.ndarray, x0: np.ndarray, t: float) -> np.ndarray:
        if self.cfg.linear_solver == "splu":
            if self._lu is None:
                self._lu = splu(self._system.tocsc())
            out = self._lu.solve(rhs)
            info = 0 if np.isfinite(out).all() else -1
        else:
            out, info = bicgstab(
                self._system, rhs, x0=x0, rtol=self.cfg.tol, atol=0.0, maxiter=self.cfg.max_iter, M=self._precond
            )
        if info != 0:
            raise LinearSolveError(int(info), t)
        return out


def _step_count(T: float, dt: float) -> int:
    K = int(round(T / dt))
    if K < 0 or not math.isclose(K * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigurationError(f"T={T} is not a multiple of dt={dt}", field_path="time")
    return K


class RandomPDEStepper:
    """theta-scheme for dv = [d_i(alpha^{ij} d_j v) + alpha^i d_i v + Fbar^0 + d_i Fbar^i] dt."""

    def __init__(self, grid: PeriodicGrid, cfg: SolverConfig):
        self.grid = grid
        self.cfg = cfg
        self.system = ThetaSystem(grid, cfg)

    def step(self, v: ScalarField, tc: TransformedCoefficients) -> ScalarField:
        if tc.degenerate_count:
            raise DegenerateCoefficientsError(tc.degenerate_count, tc.t)
        grid, cfg = self.grid, self.cfg
        alpha, alpha_lin = tc.alpha.values, tc.alpha_lin.values
        L = self.system.operator(
            (alpha, alpha_lin),
            lambda: stencils.parabolic_operator(grid, alpha, alpha_lin, averaging=cfg.face_average),
        )
        F0 = tc.Fbar0 if tc.Fbar0 is not None else tc.F0
        F_vec = tc.Fbar_vec if tc.Fbar_vec is not None else tc.F_vec
        source = F0.values + stencils.face_divergence(grid, F_vec.values)
        rhs = v.values + cfg.dt * source
        if cfg.theta < 1.0:
            rhs = rhs + (1.0 - cfg.theta) * cfg.dt * (L @ v.values)
        return ScalarField(grid, self.system.solve(rhs, v.values, tc.t + cfg.dt))


def solve_random_pde(
    tc_levels: Sequence[TransformedCoefficients],
    v0: ScalarField,
    grid: PeriodicGrid,
    T: float,
    cfg: SolverConfig,
    h_levels: Optional[Sequence[ScalarField]] = None,
) -> List[ScalarField]:
    """v at t_0..t_K. With ``h_levels`` the z = v - h equation is stepped and v = z + h."""
    K = _step_count(T, cfg.dt)
    if len(tc_levels) < K:
        raise ConfigurationError(f"need transformed coefficients on {K} levels, got {len(tc_levels)}")
    stepper = RandomPDEStepper(grid, cfg)
    if h_levels is None:
        v = v0
        out = [v]
        for k in range(K):
            v = stepper.step(v, tc_levels[k])
            out.append(v)
        return out
    z = ScalarField(grid, v0.values - h_levels[0].values)
    out = [ScalarField(grid, z.values + h_levels[0].values)]
    for k in range(K):
        z = stepper.step(z, tc_levels[k])
        out.append(ScalarField(grid, z.values + h_levels[k + 1].values))
    return out


def compose_level(v: ScalarField, inverse: InverseFlowField) -> ScalarField:
    """u(y) = v(Psi_t(y)) by periodic interpolation."""
    return ScalarField(v.grid, interpolate(v, inverse.positions()))


def compose_back(v_levels: Sequence[ScalarField], inverse_levels: Sequence[InverseFlowField]) -> List[ScalarField]:
    if len(v_levels) != len(inverse_levels):
        raise ValueError(f"{len(v_levels)} solution levels but {len(inverse_levels)} inverse flows")
    return [compose_level(v, inv) for v, inv in zip(v_levels, inverse_levels)]


class DirectSPDEStepper:
    """Semi-implicit step of the SPDE with explicit transport noise.

    (Id - theta dt L) u+ = u + (1 - theta) dt L u + dt (f^0 + d_i f^i)
                           + sum_n (b_n . grad u + b^0_n u + g_n) dW_n
    where L = d_i(a^{ij} d_j .) + a^i d_i + a^0.
    """

    def __init__(self, grid: PeriodicGrid, family: NoiseFamily, coeffs: CoefficientSet, cfg: SolverConfig):
        if family.dim != grid.dim or coeffs.dim != grid.dim:
            raise ConfigurationError("noise family, coefficients and grid disagree on d")
        self.grid = grid
        self.family = family
        self.coeffs = coeffs
        self.cfg = cfg
        self.nodes = grid.coordinates()
        self.system = ThetaSystem(grid, cfg)

    def _noise_operator(self, b: np.ndarray, b0: np.ndarray, n: int, u: np.ndarray) -> np.ndarray:
        grad = stencils.gradient(self.grid, u)
        return np.einsum("qi,qi->q", b[:, n], grad) + b0[:, n] * u

    def check_cfl(self, b: np.ndarray, t: float):
        if not b.size:
            return
        ratio = self.cfg.dt * float(np.linalg.norm(b, axis=-1).max()) / self.grid.h
        if ratio > self.cfg.cfl:
            raise CFLViolationError(
                f"dt*max|b|/h = {ratio:.4g} exceeds cfl={self.cfg.cfl} at t={t:.6g}", field_path="solver.dt"
            )

    def noise_increment(self, values: np.ndarray, t: float, dW: np.ndarray) -> np.ndarray:
        """Explicit stochastic part of one step, including the Milstein term when configured."""
        n_modes = self.family.n_modes
        if not n_modes:
            return np.zeros_like(values)
        x, coeffs = self.nodes, self.coeffs
        b = self.family.field(t, x)
        self.check_cfl(b, t)
        b0 = coeffs.eval_b0(t, x, n_modes)
        g = coeffs.eval_g(t, x, n_modes)
        kicks = np.stack([self._noise_operator(b, b0, n, values) + g[:, n] for n in range(n_modes)], axis=-1)
        out = kicks @ dW
        if self.cfg.noise_scheme == "milstein":
            weights = np.outer(dW, dW) - self.cfg.dt * np.eye(n_modes)
            mixed = kicks @ weights.T
            out = out + 0.5 * sum(self._noise_operator(b, b0, n, mixed[:, n]) for n in range(n_modes))
        return out

    def step(self, u: ScalarField, t: float, dW: np.ndarray, a_nodes: Optional[np.ndarray] = None) -> ScalarField:
        grid, cfg, coeffs, x = self.grid, self.cfg, self.coeffs, self.nodes
        n_modes = self.family.n_modes
        a = coeffs.eval_a(t, x) if a_nodes is None else a_nodes
        a_lin = coeffs.eval_a_lin(t, x)
        a0 = coeffs.eval_a0(t, x)
        L = self.system.operator(
            (a, a_lin, a0),
            lambda: stencils.parabolic_operator(grid, a, a_lin, a0, averaging=cfg.face_average),
        )

        values = u.values
        rhs = values.copy()
        if coeffs.f0 is not None or coeffs.f_vec is not None:
            rhs += cfg.dt * (coeffs.eval_f0(t, x) + stencils.face_divergence(grid, coeffs.eval_f_vec(t, x)))
        if cfg.theta < 1.0:
            rhs += (1.0 - cfg.theta) * cfg.dt * (L @ values)

        if n_modes:
            rhs += self.noise_increment(values, t, dW)

        out = self.system.solve(rhs, values, t + cfg.dt)
        sup = float(np.max(np.abs(out))) if np.isfinite(out).all() else math.inf
        if sup > cfg.blowup_bound:
            raise BlowUpError(t + cfg.dt, sup, cfg.blowup_bound)
        return ScalarField(grid, out)


def solve_spde_direct(
    coeffs: CoefficientSet,
    family: NoiseFamily,
    u0: ScalarField,
    path: BrownianPath,
    grid: PeriodicGrid,
    T: float,
    cfg: SolverConfig,
) -> List[ScalarField]:
    """u at t_0..t_K driven by the increments of ``path``."""
    if not math.isclose(path.dt, cfg.dt, rel_tol=1e-12):
        raise ConfigurationError(f"path step {path.dt} differs from solver dt {cfg.dt}", field_path="solver.dt")
    K = _step_count(T, cfg.dt)
    if K > path.K:
        raise ConfigurationError(f"path covers {path.K} steps, T={T} needs {K}", field_path="time")
    stepper = DirectSPDEStepper(grid, family, coeffs, cfg)
    u = u0
    out = [u]
    for k in range(K):
        u = stepper.step(u, k * cfg.dt, path.increments[k])
        out.append(u)
    logger.debug("direct solve: %d steps, |u_T|_inf=%.4g", K, np.abs(u.values).max())
    return out
