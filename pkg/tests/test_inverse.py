"""Tests for inverse module."""

from collections import deque

import numpy as np
import pytest

from src.core.grid import PeriodicGrid
from src.flow.integrator import FlowState, evolve_flow, iter_flow
from src.inverse.inverter import invert_flow_at, invert_flow_field, reverse_round_trip_residual
from src.noise.brownian import sample_brownian_increments
from src.noise.families import builtin_noise_family, sincos2d_family


def sincos_state(n: int = 32, K: int = 200, seed: int = 4) -> FlowState:
    grid = PeriodicGrid(dim=2, n=n)
    path = sample_brownian_increments(seed, K, 4, 1e-4)
    return evolve_flow(sincos2d_family(), path, grid, K * 1e-4).final


def test_identity_inverse():
    grid = PeriodicGrid(dim=2, n=8)
    inverse = invert_flow_field(FlowState.identity(grid))
    assert inverse.residual == 0.0
    assert inverse.iterations == 0
    assert np.array_equal(inverse.positions(), grid.coordinates())


def test_translation_inverse_at_point():
    grid = PeriodicGrid(dim=1, n=8)
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    path = sample_brownian_increments(1, 20, 1, 1e-3)
    state = evolve_flow(family, path, grid, 0.02).final
    W = path.cumulative()[-1, 0]
    x = invert_flow_at(state, [0.3])
    assert x[0] == pytest.approx(0.3 + 0.5 * W, abs=1e-10)


def test_sincos2d_inverse_residual():
    state = sincos_state()
    inverse = invert_flow_field(state)
    assert inverse.residual <= 1e-10
    images = state.displacement.apply(inverse.positions())
    assert np.abs(images - state.grid.coordinates()).max() <= 1e-10


def test_warm_start_reaches_same_inverse():
    state = sincos_state(K=100)
    cold = invert_flow_field(state)
    earlier = invert_flow_field(sincos_state(K=99))
    warm = invert_flow_field(state, previous=earlier)
    assert np.abs(warm.positions() - cold.positions()).max() < 1e-9


def test_reverse_round_trip():
    state = sincos_state()
    inverse = invert_flow_field(state)
    assert reverse_round_trip_residual(state, inverse) <= 1e-8


def test_tolerance_must_be_positive():
    with pytest.raises(ValueError):
        invert_flow_at(FlowState.identity(PeriodicGrid(dim=1, n=8)), [0.1], tol=0.0)


def streamed_final_state(grid: PeriodicGrid, seed: int, K: int, dt: float) -> FlowState:
    path = sample_brownian_increments(seed, K, 4, dt)
    return deque(iter_flow(sincos2d_family(), path, grid), maxlen=1)[0]


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_strongly_distorted_sincos2d_flows_invert(seed):
    grid = PeriodicGrid(dim=2, n=64)
    state = streamed_final_state(grid, seed, 500, 1e-4)
    inverse = invert_flow_field(state)
    assert inverse.residual <= 1e-10
    assert reverse_round_trip_residual(state, inverse) <= 1e-6


def test_newton_uses_cell_jacobian_of_interpolated_map():
    # coarse grid, so the interpolated map differs visibly from node values of psi
    grid = PeriodicGrid(dim=2, n=8)
    state = streamed_final_state(grid, 6, 300, 1e-4)
    targets = np.random.default_rng(2).uniform(size=(40, 2))
    for y in targets:
        x = invert_flow_at(state, y)
        assert np.linalg.norm(state.displacement.apply(x)[0] - y) <= 1e-10


def test_roundoff_level_residual_is_accepted():
    grid = PeriodicGrid(dim=1, n=8)
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    path = sample_brownian_increments(3, 20, 1, 1e-3)
    state = evolve_flow(family, path, grid, 0.02).final
    inverse = invert_flow_field(state, tol=1e-300)
    assert inverse.residual < 1e-13
