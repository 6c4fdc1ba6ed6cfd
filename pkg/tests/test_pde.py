"""Tests for pde module."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.grid import PeriodicGrid, ScalarField
from src.flow.integrator import FlowState, evolve_flow
from src.inverse.inverter import invert_flow_field
from src.noise.brownian import sample_brownian_increments
from src.noise.families import builtin_noise_family
from src.pde.models import SolverConfig
from src.pde.quasilinear import frozen_parabolicity, solve_quasilinear
from src.pde.solver import (
    DirectSPDEStepper,
    compose_back,
    compose_level,
    solve_random_pde,
    solve_spde_direct,
)
from src.transform.coefficients import CoefficientSet, constant_coefficient, transform_level
from src.utils.errors import CFLViolationError, ConfigurationError, ParabolicityError


def sine(grid: PeriodicGrid) -> ScalarField:
    return ScalarField.from_function(grid, lambda x: np.sin(2 * np.pi * x[:, 0]))


def heat_coefficients(dim: int = 1, value: float = 1.0) -> CoefficientSet:
    return CoefficientSet(dim=dim, a=constant_coefficient(value * np.eye(dim)), nu=0.1, M=10.0)


def discrete_heat_factor(grid: PeriodicGrid, dt: float, theta: float, K: int) -> float:
    """Exact amplification of the theta scheme on the sin(2 pi x) mode."""
    lam = -4.0 * np.sin(np.pi * grid.h) ** 2 / grid.h ** 2
    return ((1.0 + (1.0 - theta) * dt * lam) / (1.0 - theta * dt * lam)) ** K


def test_solver_config_validation():
    assert SolverConfig().theta == 1.0
    assert SolverConfig().noise_scheme == "milstein"
    with pytest.raises(ValidationError):
        SolverConfig(theta=1.5)
    with pytest.raises(ValidationError):
        SolverConfig(unknown=1)


@pytest.mark.parametrize("theta,linear_solver", [(1.0, "bicgstab"), (0.5, "splu")])
def test_random_pde_matches_discrete_heat_solution(theta, linear_solver):
    grid = PeriodicGrid(dim=1, n=32)
    cfg = SolverConfig(dt=1e-4, theta=theta, linear_solver=linear_solver)
    family = builtin_noise_family("zero", dim=1)
    coeffs = heat_coefficients()
    K = 50
    state = FlowState.identity(grid)
    levels = [transform_level(coeffs, family, state, k * cfg.dt) for k in range(K)]
    v = solve_random_pde(levels, sine(grid), grid, K * cfg.dt, cfg)
    expected = discrete_heat_factor(grid, cfg.dt, theta, K) * sine(grid).values
    assert len(v) == K + 1
    assert np.allclose(v[-1].values, expected, atol=1e-7)


def test_direct_solver_agrees_without_noise():
    grid = PeriodicGrid(dim=1, n=32)
    cfg = SolverConfig(dt=1e-4, theta=0.5, linear_solver="splu")
    path = sample_brownian_increments(0, 40, 0, cfg.dt)
    u = solve_spde_direct(heat_coefficients(), builtin_noise_family("zero", dim=1), sine(grid), path, grid, 40e-4, cfg)
    expected = discrete_heat_factor(grid, cfg.dt, 0.5, 40) * sine(grid).values
    assert np.allclose(u[-1].values, expected, atol=1e-10)


def test_direct_solver_preserves_constants():
    grid = PeriodicGrid(dim=1, n=16)
    cfg = SolverConfig(dt=1e-4)
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    path = sample_brownian_increments(3, 20, 1, cfg.dt)
    u0 = ScalarField(grid, np.full(16, 2.0))
    u = solve_spde_direct(heat_coefficients(), family, u0, path, grid, 20e-4, cfg)
    assert np.allclose(u[-1].values, 2.0, atol=1e-8)


def test_flow_method_agrees_with_direct_solver_for_constant_noise():
    grid = PeriodicGrid(dim=1, n=64)
    cfg = SolverConfig(dt=1e-4)
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    coeffs = heat_coefficients()
    K = 100
    path = sample_brownian_increments(17, K, 1, cfg.dt)
    traj = evolve_flow(family, path, grid, K * cfg.dt)
    levels = [transform_level(coeffs, family, s, s.t) for s in traj.states[:-1]]
    v = solve_random_pde(levels, sine(grid), grid, K * cfg.dt, cfg)
    inverses = [invert_flow_field(s) for s in traj.states]
    u_flow = compose_back(v, inverses)[-1].values
    u_direct = solve_spde_direct(coeffs, family, sine(grid), path, grid, K * cfg.dt, cfg)[-1].values
    gap = np.linalg.norm(u_flow - u_direct) / np.linalg.norm(u_direct)
    assert gap < 0.05


def test_compose_level_with_identity_inverse():
    grid = PeriodicGrid(dim=1, n=8)
    v = sine(grid)
    inverse = invert_flow_field(FlowState.identity(grid))
    assert np.array_equal(compose_level(v, inverse).values, v.values)
    with pytest.raises(ValueError):
        compose_back([v, v], [inverse])


def test_cfl_guard():
    grid = PeriodicGrid(dim=1, n=64)
    cfg = SolverConfig(dt=0.01, cfl=0.5)
    family = builtin_noise_family("constant", {"vectors": [[1.0]]}, dim=1)
    stepper = DirectSPDEStepper(grid, family, heat_coefficients(), cfg)
    with pytest.raises(CFLViolationError):
        stepper.step(sine(grid), 0.0, np.array([0.1]))


def test_milstein_scheme_runs():
    grid = PeriodicGrid(dim=1, n=32)
    cfg = SolverConfig(dt=1e-4, noise_scheme="milstein")
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    path = sample_brownian_increments(5, 30, 1, cfg.dt)
    u = solve_spde_direct(heat_coefficients(), family, sine(grid), path, grid, 30e-4, cfg)
    assert np.abs(u[-1].values).max() <= 1.0 + 1e-3


def test_direct_solver_rejects_mismatched_step():
    grid = PeriodicGrid(dim=1, n=8)
    path = sample_brownian_increments(0, 10, 0, 1e-3)
    with pytest.raises(ConfigurationError):
        solve_spde_direct(
            heat_coefficients(), builtin_noise_family("zero", dim=1), sine(grid), path, grid, 0.01, SolverConfig(dt=1e-4)
        )


def test_quasilinear_with_constant_closure_matches_linear_solve():
    grid = PeriodicGrid(dim=1, n=32)
    cfg = SolverConfig(dt=1e-4)
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    path = sample_brownian_increments(6, 20, 1, cfg.dt)

    def closure(t, x, y):
        return np.ones((len(y), 1, 1))

    U = solve_quasilinear(closure, family, sine(grid), path, grid, 20e-4, cfg, nu=0.5)
    u = solve_spde_direct(heat_coefficients(), family, sine(grid), path, grid, 20e-4, cfg)
    assert np.array_equal(U[-1].values, u[-1].values)


def test_quasilinear_record_every():
    grid = PeriodicGrid(dim=1, n=16)
    cfg = SolverConfig(dt=1e-4)
    path = sample_brownian_increments(0, 10, 0, cfg.dt)

    def closure(t, x, y):
        return (1.0 + 0.5 / (1.0 + y * y))[:, None, None] * np.eye(1)

    U = solve_quasilinear(closure, builtin_noise_family("zero", dim=1), sine(grid), path, grid, 10e-4, cfg, record_every=4)
    assert len(U) == 4  # levels 0, 4, 8, 10


def test_quasilinear_parabolicity_guard():
    grid = PeriodicGrid(dim=1, n=16)
    cfg = SolverConfig(dt=1e-4)
    family = builtin_noise_family("constant", {"vectors": [[1.0]]}, dim=1)
    path = sample_brownian_increments(0, 5, 1, cfg.dt)

    def closure(t, x, y):
        return np.full((len(y), 1, 1), 0.6)

    with pytest.raises(ParabolicityError):
        solve_quasilinear(closure, family, sine(grid), path, grid, 5e-4, cfg, nu=0.2)
    assert frozen_parabolicity(np.full((4, 1, 1), 0.6), np.ones((4, 1, 1))) == pytest.approx(0.1)


def test_direct_solver_respects_maximum_principle():
    grid = PeriodicGrid(dim=1, n=128)
    cfg = SolverConfig(dt=1e-4)
    family = builtin_noise_family("constant", {"vectors": [[0.8]]}, dim=1)
    u0 = sine(grid)
    lo, hi = u0.values.min(), u0.values.max()
    for seed in range(20):
        path = sample_brownian_increments(seed, 500, 1, cfg.dt)
        u = solve_spde_direct(heat_coefficients(), family, u0, path, grid, 0.05, cfg)
        values = np.stack([level.values for level in u])
        assert values.min() >= lo - 1e-3
        assert values.max() <= hi + 1e-3


def test_flow_method_respects_maximum_principle():
    grid = PeriodicGrid(dim=1, n=64)
    cfg = SolverConfig(dt=1e-4)
    family = builtin_noise_family("constant", {"vectors": [[0.8]]}, dim=1)
    coeffs = heat_coefficients()
    u0 = sine(grid)
    lo, hi = u0.values.min(), u0.values.max()
    K = 200
    for seed in range(5):
        path = sample_brownian_increments(seed, K, 1, cfg.dt)
        traj = evolve_flow(family, path, grid, K * cfg.dt)
        levels = [transform_level(coeffs, family, s, s.t) for s in traj.states[:-1]]
        v = solve_random_pde(levels, u0, grid, K * cfg.dt, cfg)
        inverses = [invert_flow_field(s) for s in traj.states]
        values = np.stack([level.values for level in compose_back(v, inverses)])
        assert values.min() >= lo - 1e-3
        assert values.max() <= hi + 1e-3
