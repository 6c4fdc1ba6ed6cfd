"""Tests for flow module."""

from collections import deque

import numpy as np
import pytest

from src.core.grid import PeriodicGrid
from src.flow.integrator import (
    REPROJECT_THRESHOLD,
    FlowState,
    commuting_flow_reference,
    evolve_flow,
    flow_property_residual,
    iter_flow,
    reproject_inverse,
    sincos_rotated_driver,
    step_flow,
    stratonovich_drift,
    stratonovich_drift_jacobian,
)
from src.noise.brownian import derive_path_seed, sample_brownian_increments
from src.noise.families import PeriodicProfile, builtin_noise_family, sincos2d_family
from src.utils.errors import ConfigurationError


def test_zero_noise_flow_is_identity():
    grid = PeriodicGrid(dim=1, n=8)
    family = builtin_noise_family("zero", dim=1)
    path = sample_brownian_increments(0, 5, 0, 0.01)
    traj = evolve_flow(family, path, grid, 0.05)
    assert len(traj) == 6
    assert traj.final.t == pytest.approx(0.05)
    assert np.array_equal(traj.final.positions(), grid.coordinates())
    assert traj.final.orthogonality_defect() == 0.0


def test_constant_noise_translates_by_brownian_motion():
    grid = PeriodicGrid(dim=2, n=8)
    c = np.array([[0.3, 0.1], [0.0, 0.5]])
    family = builtin_noise_family("constant", {"vectors": c}, dim=2)
    path = sample_brownian_increments(11, 50, 2, 1e-3)
    traj = evolve_flow(family, path, grid, 0.05)
    W = path.cumulative()[-1]
    assert np.allclose(traj.final.positions(), grid.coordinates() - W @ c, atol=1e-12)
    assert np.allclose(traj.final.jacobian.values, np.eye(2))


def test_sincos2d_drift_and_its_jacobian():
    family = sincos2d_family()
    x = np.random.default_rng(0).uniform(size=(20, 2))
    # mu = 1/2 sum b_n . grad b_n vanishes for this family, and so does its Jacobian
    assert np.allclose(stratonovich_drift(family, 0.0, x), 0.0, atol=1e-12)
    assert np.allclose(stratonovich_drift_jacobian(family, 0.0, x), 0.0, atol=1e-9)
    assert stratonovich_drift(family, 0.0, x[0]).shape == (2,)


def test_sincos2d_jacobian_is_geometric_brownian_motion():
    grid = PeriodicGrid(dim=2, n=8)
    family = sincos2d_family()
    dt, K = 1e-5, 1000
    path = sample_brownian_increments(2024, K, 4, dt)
    traj = evolve_flow(family, path, grid, K * dt)
    drivers = sincos_rotated_driver(traj.states, path)
    T = K * dt
    exact = np.exp(2 * np.pi * drivers[-1][:, 0] - 2 * np.pi ** 2 * T)
    numeric = traj.final.jacobian.values[:, 0, 0]
    assert np.median(np.abs(numeric - exact) / exact) < 0.05
    assert traj.final.orthogonality_defect() < 1e-6
    assert (traj.final.determinant() > 0).all()


def test_commuting_family_matches_reference_flow():
    grid = PeriodicGrid(dim=1, n=16)
    profile = PeriodicProfile(mean=1.0, cos=[0.2])
    family = builtin_noise_family("axis_commuting", {"profiles": [profile]}, dim=1)
    dt, K = 1e-4, 1000
    path = sample_brownian_increments(9, K, 1, dt)
    traj = evolve_flow(family, path, grid, K * dt)
    reference = commuting_flow_reference(family, path.cumulative()[-1], grid.coordinates())
    assert np.abs(traj.final.positions() - reference).max() < 0.02


def test_commuting_reference_requires_axis_family():
    with pytest.raises(ValueError):
        commuting_flow_reference(sincos2d_family(), [0.0] * 4, np.zeros((1, 2)))


def test_flow_property_is_exact_for_translations():
    grid = PeriodicGrid(dim=1, n=8)
    family = builtin_noise_family("constant", {"vectors": [[0.7]]}, dim=1)
    dt, K, ks = 1e-3, 40, 15
    path = sample_brownian_increments(3, K, 1, dt)
    from_zero = evolve_flow(family, path, grid, K * dt)
    from_s = evolve_flow(family, path.window(ks, K), grid, (K - ks) * dt, t0=ks * dt)
    assert flow_property_residual(from_zero, from_s, K * dt) < 1e-12


def test_flow_property_for_sincos2d():
    grid = PeriodicGrid(dim=2, n=32)
    family = sincos2d_family()
    dt, K, ks = 1e-4, 100, 50
    path = sample_brownian_increments(5, K, 4, dt)
    from_zero = evolve_flow(family, path, grid, K * dt)
    from_s = evolve_flow(family, path.window(ks, K), grid, (K - ks) * dt, t0=ks * dt)
    assert flow_property_residual(from_zero, from_s, K * dt) < 1e-2


def test_iter_flow_streams_levels():
    grid = PeriodicGrid(dim=2, n=8)
    path = sample_brownian_increments(1, 10, 4, 1e-4)
    levels = list(iter_flow(sincos2d_family(), path, grid, steps=4))
    assert [round(s.t / 1e-4) for s in levels] == [0, 1, 2, 3, 4]


def test_mode_count_mismatch():
    grid = PeriodicGrid(dim=2, n=8)
    path = sample_brownian_increments(1, 10, 2, 1e-4)
    with pytest.raises(ConfigurationError):
        list(iter_flow(sincos2d_family(), path, grid))
    with pytest.raises(ConfigurationError):
        evolve_flow(sincos2d_family(), sample_brownian_increments(1, 10, 4, 1e-4), grid, 0.5)


def test_step_flow_checks_increment_shape():
    grid = PeriodicGrid(dim=2, n=8)
    with pytest.raises(ValueError):
        step_flow(FlowState.identity(grid), sincos2d_family(), np.zeros(3), 1e-3)


def test_reproject_inverse_repairs_drifted_inverse():
    rng = np.random.default_rng(8)
    jac = np.eye(2) + 0.3 * rng.normal(size=(50, 2, 2))
    exact = np.linalg.inv(jac)
    drifted = exact + 0.2 * rng.normal(size=exact.shape) @ exact
    repaired = reproject_inverse(drifted, jac)
    assert np.abs(repaired @ jac - np.eye(2)).max() <= REPROJECT_THRESHOLD
    # Newton-Schulz diverges from 3 * inverse, the nodes are inverted directly
    repaired = reproject_inverse(3.0 * exact, jac)
    assert np.allclose(repaired, exact, atol=1e-10)


@pytest.mark.parametrize("seed,scheme", [(0, "euler"), (1, "euler"), (0, "exponential"), (1, "exponential")])
def test_sincos2d_flow_survives_coarse_steps(seed, scheme):
    grid = PeriodicGrid(dim=2, n=8)
    path = sample_brownian_increments(seed, 500, 4, 1e-3)
    worst = 0.0
    for state in iter_flow(sincos2d_family(), path, grid, scheme=scheme):
        worst = max(worst, state.orthogonality_defect())
        assert (state.determinant() > 0).all()
    assert state.t == pytest.approx(0.5)
    assert worst <= 1e-7


def test_exponential_scheme_reproduces_geometric_brownian_motion():
    grid = PeriodicGrid(dim=2, n=8)
    family = sincos2d_family()
    dt, K = 1e-3, 250
    path = sample_brownian_increments(31, K, 4, dt)
    traj = evolve_flow(family, path, grid, K * dt, scheme="exponential")
    drivers = sincos_rotated_driver(traj.states, path)
    exact = np.exp(2 * np.pi * drivers[-1][:, 0] - 2 * np.pi ** 2 * K * dt)
    numeric = traj.final.jacobian.values[:, 0, 0]
    assert np.allclose(numeric, exact, rtol=1e-8)
    assert np.allclose(traj.final.jacobian.values[:, 0, 1], 0.0)


def test_unknown_flow_scheme():
    grid = PeriodicGrid(dim=2, n=8)
    with pytest.raises(ValueError):
        step_flow(FlowState.identity(grid), sincos2d_family(), np.zeros(4), 1e-3, scheme="heun")


def test_flow_property_residual_shrinks_under_refinement():
    family = sincos2d_family()
    fine = sample_brownian_increments(13, 200, 4, 5e-5)
    residuals = []
    for n, path in ((32, fine.coarsen(2)), (64, fine)):
        grid = PeriodicGrid(dim=2, n=n)
        K = path.K
        from_zero = evolve_flow(family, path, grid, K * path.dt)
        from_s = evolve_flow(family, path.window(K // 2, K), grid, (K - K // 2) * path.dt, t0=(K // 2) * path.dt)
        residuals.append(flow_property_residual(from_zero, from_s, K * path.dt))
    assert residuals[0] >= 1.4 * residuals[1]


@pytest.mark.slow
def test_jacobian_mean_is_one():
    grid = PeriodicGrid(dim=2, n=8)
    family = sincos2d_family()
    dt, K, paths = 1e-3, 50, 10_000
    samples = np.empty(paths)
    for i in range(paths):
        path = sample_brownian_increments(derive_path_seed(7, i), K, 4, dt)
        final = deque(iter_flow(family, path, grid, scheme="exponential"), maxlen=1)[0]
        samples[i] = final.jacobian.values[0, 0, 0]
    se = samples.std(ddof=1) / np.sqrt(paths)
    assert abs(samples.mean() - 1.0) <= 3.0 * se
