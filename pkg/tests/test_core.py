"""Tests for core module."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.core import stencils
from src.core.grid import (
    DisplacementField,
    MatrixField,
    PeriodicGrid,
    RatioField,
    ScalarField,
    VectorField,
    interpolate,
    interpolate_gradient,
    wrap_index,
)
from src.utils.errors import NonFiniteFieldError


def sine_field(grid: PeriodicGrid) -> ScalarField:
    return ScalarField.from_function(grid, lambda x: np.sin(2 * np.pi * x[:, 0]))


def test_grid_geometry():
    """Node coordinates, spacing and node numbering."""
    grid = PeriodicGrid(dim=2, n=16)
    x = grid.coordinates()
    assert x.shape == (256, 2)
    assert grid.h == 1 / 16
    assert grid.cell_volume == 1 / 256
    node = int(np.ravel_multi_index((3, 5), grid.shape))
    assert np.array_equal(x[node], [3 / 16, 5 / 16])
    assert np.array_equal(grid.node_coordinate(node), x[node])
    assert np.array_equal(grid.reshape(x)[3, 5], x[node])


def test_grid_rejects_inexact_spacing():
    with pytest.raises(ValidationError):
        PeriodicGrid(dim=1, n=49)
    with pytest.raises(ValidationError):
        PeriodicGrid(dim=3, n=16)


def test_wrap_index():
    assert wrap_index(-1, 8) == 7
    assert wrap_index(8, 8) == 0
    with pytest.raises(ValueError):
        wrap_index(0, 0)
    assert np.array_equal(wrap_index(np.array([-9, 0, 17]), 8), [7, 0, 1])


def test_field_shapes_and_finiteness():
    grid = PeriodicGrid(dim=1, n=8)
    with pytest.raises(ValueError):
        VectorField(grid, np.zeros(8))
    with pytest.raises(NonFiniteFieldError):
        ScalarField(grid, np.full(8, np.nan))
    ratio = RatioField(grid, np.full(8, np.inf))
    assert np.isinf(ratio.values).all()
    assert np.array_equal(MatrixField.identity(grid).values[3], [[1.0]])


def test_interpolation_is_exact_at_nodes():
    grid = PeriodicGrid(dim=2, n=8)
    field = ScalarField(grid, np.arange(grid.size, dtype=float))
    x = grid.coordinates()
    assert np.array_equal(interpolate(field, x), field.values)
    assert np.array_equal(interpolate(field, x + 1.0), field.values)


def test_interpolation_is_periodic_and_linear():
    grid = PeriodicGrid(dim=1, n=8)
    field = ScalarField(grid, np.arange(8, dtype=float))
    assert interpolate(field, [0.5 / 8]) == pytest.approx(0.5)
    # between the last node and the wrapped first node
    assert interpolate(field, [7.5 / 8]) == pytest.approx(3.5)
    assert interpolate(field, [7.6 / 8], method="nearest") == 0.0


def test_interpolation_gradient_is_cellwise_exact():
    grid = PeriodicGrid(dim=1, n=8)
    field = ScalarField(grid, np.arange(8, dtype=float))
    assert np.allclose(interpolate_gradient(field, [[0.5 / 8], [7.5 / 8]])[:, 0], [8.0, -56.0])

    grid = PeriodicGrid(dim=2, n=8)
    field = ScalarField.from_function(grid, lambda x: x[:, 0] * x[:, 1])
    points = np.array([[0.3, 0.45], [0.61, 0.2]])
    assert np.allclose(interpolate_gradient(field, points), points[:, ::-1])


def test_displacement_field_apply():
    grid = PeriodicGrid(dim=1, n=8)
    shift = DisplacementField(grid, np.full((8, 1), 0.25))
    assert np.allclose(shift.apply([[0.3]]), [[0.55]])
    assert np.allclose(shift.positions()[:, 0], grid.coordinates()[:, 0] + 0.25)


def test_laplacian_matches_discrete_eigenvalue():
    grid = PeriodicGrid(dim=1, n=32)
    u = sine_field(grid).values
    eigenvalue = -4.0 * np.sin(np.pi * grid.h) ** 2 / grid.h ** 2
    assert np.allclose(stencils.laplacian_matrix(grid) @ u, eigenvalue * u, atol=1e-9)


def test_divergence_form_with_identity_is_laplacian():
    grid = PeriodicGrid(dim=2, n=8)
    identity = MatrixField.identity(grid).values
    difference = stencils.divergence_form_matrix(grid, identity) - stencils.laplacian_matrix(grid)
    assert abs(difference).max() < 1e-9


def test_parabolic_operator_annihilates_constants():
    grid = PeriodicGrid(dim=2, n=8)
    rng = np.random.default_rng(3)
    diffusion = rng.uniform(0.5, 1.5, size=(grid.size, 2, 2))
    drift = rng.normal(size=(grid.size, 2))
    operator = stencils.parabolic_operator(grid, diffusion, drift, averaging="harmonic")
    assert np.allclose(operator @ np.ones(grid.size), 0.0, atol=1e-9)


def test_face_divergence_telescopes():
    grid = PeriodicGrid(dim=2, n=8)
    vectors = np.random.default_rng(0).normal(size=(grid.size, 2))
    assert abs(stencils.face_divergence(grid, vectors).sum()) < 1e-9


def test_gradient_of_sine():
    grid = PeriodicGrid(dim=1, n=64)
    u = sine_field(grid).values
    exact = 2 * np.pi * np.cos(2 * np.pi * grid.coordinates()[:, 0])
    assert np.abs(stencils.gradient(grid, u)[:, 0] - exact).max() < 0.02


def test_central_jacobian_shape():
    grid = PeriodicGrid(dim=2, n=8)
    out = stencils.central_jacobian(grid, MatrixField.identity(grid).values)
    assert out.shape == (2, grid.size, 2, 2)
    assert not out.any()
