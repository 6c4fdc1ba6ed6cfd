"""Tests for transform module."""

import numpy as np
import pytest

from src.core.grid import MatrixField, PeriodicGrid, ScalarField, VectorField
from src.flow.integrator import FlowState, evolve_flow
from src.noise.brownian import sample_brownian_increments
from src.noise.families import builtin_noise_family, sincos2d_family
from src.transform.coefficients import (
    CoefficientSet,
    checkerboard_diffusion,
    combined_rhs,
    constant_coefficient,
    degeneracy_mask,
    inverse_jacobian_divergence,
    transform_level,
    transformed_coefficients,
    transformed_rhs,
)
from src.transform.heat import HeatSplitStepper, solve_h
from src.utils.errors import ConfigurationError


def identity_coefficients(dim: int, **optional) -> CoefficientSet:
    return CoefficientSet(dim=dim, a=constant_coefficient(np.eye(dim)), nu=0.1, M=10.0, **optional)


def test_zero_noise_leaves_coefficients_unchanged():
    grid = PeriodicGrid(dim=2, n=8)
    state = FlowState.identity(grid)
    alpha, alpha_lin = transformed_coefficients(
        identity_coefficients(2), builtin_noise_family("zero", dim=2), state, 0.0
    )
    assert np.allclose(alpha.values, np.eye(2))
    assert not alpha_lin.values.any()


def test_constant_noise_reduces_diffusion():
    grid = PeriodicGrid(dim=1, n=16)
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    path = sample_brownian_increments(0, 10, 1, 1e-3)
    state = evolve_flow(family, path, grid, 0.01).final
    alpha, alpha_lin = transformed_coefficients(identity_coefficients(1), family, state, 0.01)
    assert np.allclose(alpha.values, 1.0 - 0.5 * 0.25)
    assert np.allclose(alpha_lin.values, 0.0)


def test_sincos2d_at_time_zero():
    grid = PeriodicGrid(dim=2, n=16)
    alpha, alpha_lin = transformed_coefficients(
        identity_coefficients(2), sincos2d_family(), FlowState.identity(grid), 0.0
    )
    assert np.allclose(alpha.values, 0.5 * np.eye(2), atol=1e-12)
    assert np.allclose(alpha_lin.values, 0.0, atol=1e-9)


def test_alpha_is_congruent_to_reduced_diffusion():
    grid = PeriodicGrid(dim=2, n=16)
    family = sincos2d_family()
    path = sample_brownian_increments(8, 50, 4, 1e-4)
    state = evolve_flow(family, path, grid, 50e-4).final
    alpha, _ = transformed_coefficients(identity_coefficients(2), family, state, 50e-4)
    # psi Dxi = Id, so Dxi alpha Dxi^T recovers a - 1/2 Id
    jac = state.jacobian.values
    recovered = np.einsum("qik,qkl,qjl->qij", jac, alpha.values, jac)
    assert np.allclose(recovered, 0.5 * np.eye(2), atol=1e-5)


def test_zeroth_order_terms_are_rejected():
    grid = PeriodicGrid(dim=1, n=8)
    coeffs = identity_coefficients(1, a0=constant_coefficient(1.0))
    with pytest.raises(ConfigurationError):
        transformed_coefficients(coeffs, builtin_noise_family("zero", dim=1), FlowState.identity(grid), 0.0)


def test_noise_forcing_enters_divergence_part():
    grid = PeriodicGrid(dim=1, n=8)
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    coeffs = identity_coefficients(1, g=constant_coefficient([1.0]))
    F0, F_vec, G = transformed_rhs(coeffs, family, FlowState.identity(grid), 0.0)
    assert np.allclose(F0.values, 0.0)
    assert np.allclose(F_vec.values, -0.5)
    assert len(G) == 1 and np.allclose(G[0].values, 1.0)


def test_identity_flow_has_divergence_free_inverse_jacobian():
    grid = PeriodicGrid(dim=2, n=8)
    assert not inverse_jacobian_divergence(FlowState.identity(grid)).any()


def test_combined_rhs_with_constant_h():
    grid = PeriodicGrid(dim=1, n=8)
    F0 = ScalarField(grid, np.ones(8))
    F_vec = VectorField(grid, np.zeros((8, 1)))
    alpha = MatrixField.identity(grid)
    alpha_lin = VectorField(grid, np.ones((8, 1)))
    Fbar0, Fbar_vec = combined_rhs(F0, F_vec, alpha, alpha_lin, ScalarField(grid, np.full(8, 3.0)))
    assert np.allclose(Fbar0.values, 1.0)
    assert np.allclose(Fbar_vec.values, 0.0)


def test_degeneracy_mask():
    grid = PeriodicGrid(dim=2, n=8)
    values = np.broadcast_to(np.eye(2), (grid.size, 2, 2)).copy()
    values[5] = np.diag([1.0, -1.0])
    mask = degeneracy_mask(MatrixField(grid, values))
    assert np.flatnonzero(mask).tolist() == [5]


def test_transform_level_carries_h():
    grid = PeriodicGrid(dim=1, n=8)
    family = builtin_noise_family("constant", {"vectors": [[0.5]]}, dim=1)
    coeffs = identity_coefficients(1, g=constant_coefficient([1.0]))
    h = ScalarField.from_function(grid, lambda x: np.sin(2 * np.pi * x[:, 0]))
    tc = transform_level(coeffs, family, FlowState.identity(grid), 0.0, h_level=h)
    assert tc.degenerate_count == 0
    assert tc.G_array().shape == (8, 1)
    # alpha = 7/8 and alpha^i = 0, so Fbar^i = F^i - 1/8 d_x h
    assert not np.allclose(tc.Fbar_vec.values, tc.F_vec.values)


def test_checkerboard_diffusion():
    fn = checkerboard_diffusion(2, 4, 0.6, 1.5, seed=12)
    x = np.random.default_rng(0).uniform(size=(100, 2))
    a = fn(0.0, x)
    assert a.shape == (100, 2, 2)
    assert ((a[:, 0, 0] >= 0.6) & (a[:, 0, 0] <= 1.5)).all()
    assert np.array_equal(a[:, 0, 1], np.zeros(100))
    assert np.array_equal(a, checkerboard_diffusion(2, 4, 0.6, 1.5, seed=12)(0.0, x))
    with pytest.raises(ConfigurationError):
        checkerboard_diffusion(1, 4, 0.0, 1.0, seed=0)


def test_heat_stepper_preserves_mean():
    grid = PeriodicGrid(dim=1, n=16)
    path = sample_brownian_increments(2, 30, 2, 1e-3)
    G = np.zeros((grid.size, 2))
    G[:, 0] = 1.0 + 0.5 * np.cos(2 * np.pi * grid.coordinates()[:, 0])
    G[:, 1] = 0.25
    h = solve_h([G] * 30, grid, path, 0.03, 1e-3)
    assert len(h) == 31
    W = path.cumulative()[-1]
    assert h[-1].values.mean() == pytest.approx(W[0] + 0.25 * W[1], abs=1e-12)


def test_heat_stepper_without_forcing():
    grid = PeriodicGrid(dim=1, n=8)
    stepper = HeatSplitStepper(grid, 1e-3)
    h = stepper.step(stepper.initial(), np.zeros((8, 0)), np.zeros(0))
    assert not h.values.any()
    with pytest.raises(ConfigurationError):
        solve_h([], grid, sample_brownian_increments(0, 5, 1, 1e-3), 0.005, 1e-3)
