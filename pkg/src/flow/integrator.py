"""Stochastic flow of diffeomorphisms on grid nodes.

The flow solves the Stratonovich SDE dxi = -sum_n b_n(xi) o dW_n, integrated in
Ito form with the drift correction mu = 1/2 sum_n (b_n . grad) b_n. Along with
the positions we carry the Jacobian Dxi[i, j] = d_j xi^i and its inverse psi.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from ..core.grid import DisplacementField, MatrixField, PeriodicGrid
from ..noise.brownian import BrownianPath
from ..noise.families import NoiseFamily
from ..utils.errors import ConfigurationError, FlowDegeneracyError

logger = logging.getLogger(__name__)

REPROJECT_THRESHOLD = 1e-8
MAX_REPROJECT_ITER = 20
MAX_CONDITION = 1e12
FLOW_SCHEMES = ("euler", "exponential")


@dataclass(frozen=True)
class FlowState:
    t: float
    displacement: DisplacementField
    jacobian: MatrixField
    inv_jacobian: MatrixField

    @classmethod
    def identity(cls, grid: PeriodicGrid, t: float = 0.0) -> "FlowState":
        return cls(t, DisplacementField.zero(grid), MatrixField.identity(grid), MatrixField.identity(grid))

    @property
    def grid(self) -> PeriodicGrid:
        return self.displacement.grid

    def positions(self) -> np.ndarray:
        return self.displacement.positions()

    def determinant(self) -> np.ndarray:
        return np.linalg.det(self.jacobian.values)

    def orthogonality_defect(self) -> float:
        """max over nodes of |psi Dxi - Id| (entrywise)."""
        return float(_defect(self.inv_jacobian.values, self.jacobian.values).max())

    def jacobian_norm(self) -> np.ndarray:
        return np.linalg.norm(self.jacobian.values, ord=2, axis=(-2, -1))

    def inverse_norm(self) -> np.ndarray:
        return np.linalg.norm(self.inv_jacobian.values, ord=2, axis=(-2, -1))


@dataclass(frozen=True)
class FlowTrajectory:
    states: Tuple[FlowState, ...]

    def __post_init__(self):
        times = [s.t for s in self.states]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("flow trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, k: int) -> FlowState:
        return self.states[k]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    def at_time(self, t: float) -> FlowState:
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        spacing = times[1] - times[0] if len(times) > 1 else 1.0
        if abs(times[k] - t) > 1e-9 * max(spacing, 1.0):
            raise ValueError(f"no flow level at t={t}")
        return self.states[k]


def _defect(psi: np.ndarray, jac: np.ndarray) -> np.ndarray:
    eye = np.eye(psi.shape[-1])
    return np.abs(psi @ jac - eye).max(axis=(-2, -1))


def reproject_inverse(psi: np.ndarray, jac: np.ndarray) -> np.ndarray:
    """Pull psi back onto jac^-1 where |psi jac - Id| > REPROJECT_THRESHOLD.

    Newton-Schulz sweeps psi <- psi (2 Id - jac psi) run on the drifted nodes
    only; nodes that stall or diverge after MAX_REPROJECT_ITER sweeps are
    inverted directly.
    """
    psi = np.array(psi, dtype=float)
    eye = np.eye(psi.shape[-1])
    defect = _defect(psi, jac)
    drifted = np.flatnonzero(defect > REPROJECT_THRESHOLD)
    for _ in range(MAX_REPROJECT_ITER):
        if not len(drifted):
            break
        swept = psi[drifted] @ (2.0 * eye - jac[drifted] @ psi[drifted])
        with np.errstate(invalid="ignore", over="ignore"):
            new_defect = _defect(swept, jac[drifted])
        improving = np.isfinite(new_defect) & (new_defect < defect[drifted])
        psi[drifted[improving]] = swept[improving]
        defect[drifted[improving]] = new_defect[improving]
        drifted = drifted[improving & (new_defect > REPROJECT_THRESHOLD)]
    remaining = np.flatnonzero(defect > REPROJECT_THRESHOLD)
    if len(remaining):
        logger.debug("inverting %d nodes directly after Newton-Schulz", len(remaining))
        psi[remaining] = np.linalg.inv(jac[remaining])
    return psi


def stratonovich_drift(family: NoiseFamily, t: float, x) -> np.ndarray:
    """mu^i = 1/2 sum_n b_n^j d_j b_n^i."""
    single = np.asarray(x).ndim == 1
    b = family.field(t, x)
    jac = family.jacobian(t, x)
    mu = 0.5 * np.einsum("qnij,qnj->qi", jac, b)
    return mu[0] if single else mu


def stratonovich_drift_jacobian(family: NoiseFamily, t: float, x) -> np.ndarray:
    """Dmu[i, k] = 1/2 sum_n (J_n J_n)[i, k] + b_n^j d_j d_k b_n^i."""
    single = np.asarray(x).ndim == 1
    b = family.field(t, x)
    jac = family.jacobian(t, x)
    hess = family.hessian(t, x)
    dmu = 0.5 * (np.einsum("qnij,qnjk->qik", jac, jac) + np.einsum("qnj,qnijk->qik", b, hess))
    return dmu[0] if single else dmu


def _raise_degenerate(state: FlowState, node: int, t: float, reason: str):
    raise FlowDegeneracyError(node, state.grid.node_coordinate(node), t, reason)


def step_flow(
    state: FlowState,
    family: NoiseFamily,
    dW: np.ndarray,
    dt: float,
    scheme: str = "euler",
) -> FlowState:
    """One Euler-Maruyama step of (xi, Dxi, psi), sigma_n = -b_n.

    With ``scheme="exponential"`` the linear Jacobian equation is advanced by
    the stochastic exponential E = expm(dt (Dmu - 1/2 sum J_n J_n) - sum J_n dW_n),
    Dxi <- E Dxi and psi <- psi E^-1, which keeps det Dxi > 0 for any increment.
    Positions are stepped by Euler-Maruyama in both cases.
    """
    if scheme not in FLOW_SCHEMES:
        raise ValueError(f"unknown flow scheme {scheme!r}")
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (family.n_modes,):
        raise ValueError(f"expected {family.n_modes} increments, got shape {dW.shape}")
    t_next = state.t + dt
    if family.n_modes == 0:
        return FlowState(t_next, state.displacement, state.jacobian, state.inv_jacobian)

    x = state.positions()
    b = family.field(state.t, x)
    jac = family.jacobian(state.t, x)
    hess = family.hessian(state.t, x)
    mu = 0.5 * np.einsum("qnij,qnj->qi", jac, b)
    jj = np.einsum("qnij,qnjk->qik", jac, jac)
    dmu = 0.5 * (jj + np.einsum("qnj,qnijk->qik", b, hess))
    jac_dw = np.einsum("qnij,n->qij", jac, dW)

    d_xi = state.jacobian.values
    psi = state.inv_jacobian.values
    displacement = state.displacement.values + mu * dt - np.einsum("qni,n->qi", b, dW)
    if scheme == "exponential":
        generator = dt * (dmu - 0.5 * jj) - jac_dw
        d_xi_next = expm(generator) @ d_xi
        psi_next = psi @ expm(-generator)
    else:
        d_xi_next = d_xi + dt * (dmu @ d_xi) - jac_dw @ d_xi
        psi_next = psi - dt * (psi @ dmu) + dt * (psi @ jj) + psi @ jac_dw

    for name, values in (("position", displacement), ("jacobian", d_xi_next), ("inverse jacobian", psi_next)):
        bad = ~np.isfinite(values.reshape(len(values), -1)).all(axis=1)
        if bad.any():
            _raise_degenerate(state, int(np.argmax(bad)), t_next, f"non-finite {name}")

    det = np.linalg.det(d_xi_next)
    if (det <= 0).any():
        _raise_degenerate(state, int(np.argmax(det <= 0)), t_next, f"det Dxi = {det.min():.3e}")

    condition = np.linalg.cond(d_xi_next)
    if (condition > MAX_CONDITION).any():
        node = int(np.argmax(condition))
        _raise_degenerate(state, node, t_next, f"cond Dxi = {condition[node]:.3e}")

    psi_next = reproject_inverse(psi_next, d_xi_next)

    grid = state.grid
    return FlowState(
        t_next,
        DisplacementField(grid, displacement),
        MatrixField(grid, d_xi_next),
        MatrixField(grid, psi_next),
    )


def iter_flow(
    family: NoiseFamily,
    path: BrownianPath,
    grid: PeriodicGrid,
    steps: Optional[int] = None,
    t0: float = 0.0,
    scheme: str = "euler",
) -> Iterator[FlowState]:
    """Yield the flow levels t0, t0 + dt, ... without keeping them."""
    if family.dim != grid.dim:
        raise ConfigurationError(f"noise family is {family.dim}-dimensional, grid has d={grid.dim}")
    if family.n_modes != path.N:
        raise ConfigurationError(f"path has {path.N} modes, noise family {family.name!r} has {family.n_modes}")
    steps = path.K if steps is None else steps
    state = FlowState.identity(grid, t0)
    yield state
    for k in range(steps):
        state = step_flow(state, family, path.increments[k], path.dt, scheme)
        yield state


def _step_count(path: BrownianPath, T: float) -> int:
    K = int(round(T / path.dt))
    if not math.isclose(K * path.dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigurationError(f"T={T} is not a multiple of dt={path.dt}", field_path="time")
    if K > path.K:
        raise ConfigurationError(f"path covers {path.K} steps, T={T} needs {K}", field_path="time")
    return K


def evolve_flow(
    family: NoiseFamily,
    path: BrownianPath,
    grid: PeriodicGrid,
    T: float,
    t0: float = 0.0,
    scheme: str = "euler",
) -> FlowTrajectory:
    """Materialise all K + 1 levels; meant for small grids and short horizons."""
    K = _step_count(path, T)
    states = tuple(iter_flow(family, path, grid, K, t0, scheme))
    logger.debug("flow %s: %d levels on n=%d, d=%d", family.name, len(states), grid.n, grid.dim)
    return FlowTrajectory(states)


def flow_property_residual(traj_a: FlowTrajectory, traj_b: FlowTrajectory, t: float) -> float:
    """sup_x |xi_{r,t}(x) - xi_{s,t}(xi_{r,s}(x))| for traj_a from r and traj_b from s."""
    s = traj_b[0].t
    direct = traj_a.at_time(t).positions()
    inner = traj_a.at_time(s).positions()
    composed = traj_b.at_time(t).displacement.apply(inner)
    return float(np.linalg.norm(direct - composed, axis=-1).max())


def commuting_flow_reference(
    family: NoiseFamily,
    w: Sequence[float],
    x: np.ndarray,
    max_step: float = 1e-3,
) -> np.ndarray:
    """Exact flow of an axis_commuting family driven by the Brownian values w.

    Coordinate n is carried along the deterministic flow of p_n for time -w_n,
    integrated with classical RK4.
    """
    if family.name != "axis_commuting":
        raise ValueError("reference flow is only available for axis_commuting families")
    x = np.array(np.atleast_2d(x), dtype=float)
    for n, profile in enumerate(family.profiles):
        duration = -float(w[n])
        steps = max(1, int(math.ceil(abs(duration) / max_step)))
        h = duration / steps
        z = x[:, n].copy()
        for _ in range(steps):
            k1 = profile.value(z)
            k2 = profile.value(z + 0.5 * h * k1)
            k3 = profile.value(z + 0.5 * h * k2)
            k4 = profile.value(z + h * k3)
            z = z + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        x[:, n] = z
    return x


def sincos_rotated_driver(states: Sequence[FlowState], path: BrownianPath) -> List[np.ndarray]:
    """Per-node drivers What^a += cos(2 pi xi^a) dW^{2a} - sin(2 pi xi^a) dW^{2a+1}.

    For the sincos2d family d_a xi^a = exp(2 pi What^a - 2 pi^2 t) exactly.
    Returns one (size, 2) array per level.
    """
    grid = states[0].grid
    current = np.zeros((grid.size, 2))
    out = [current.copy()]
    for k, state in enumerate(states[:-1]):
        phase = 2.0 * np.pi * state.positions()
        dW = path.increments[k]
        for axis in range(2):
            current[:, axis] += np.cos(phase[:, axis]) * dW[2 * axis] - np.sin(phase[:, axis]) * dW[2 * axis + 1]
        out.append(current.copy())
    return out
