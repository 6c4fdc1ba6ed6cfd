"""Tests for noise module."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.grid import PeriodicGrid
from src.noise.brownian import BrownianPath, derive_path_seed, sample_brownian_increments
from src.noise.families import (
    PeriodicProfile,
    builtin_noise_family,
    custom_noise_family,
    lie_bracket,
    sincos2d_family,
)
from src.utils.errors import ConfigurationError


def random_points(count: int, dim: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(size=(count, dim))


def test_path_seeds_are_deterministic_and_distinct():
    assert derive_path_seed(7, 3) == derive_path_seed(7, 3)
    seeds = {derive_path_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_path_seed(7, 0) != derive_path_seed(8, 0)
    with pytest.raises(ValueError):
        derive_path_seed(0, -1)


def test_increments_prefix_property():
    long = sample_brownian_increments(42, 100, 3, 1e-3)
    short = sample_brownian_increments(42, 40, 3, 1e-3)
    assert np.array_equal(long.increments[:40], short.increments)
    assert np.array_equal(
        sample_brownian_increments(42, 20, 3, 1e-3).increments[:10], sample_brownian_increments(42, 10, 3, 1e-3).increments
    )


def test_increments_read_the_stream_row_by_row():
    two = sample_brownian_increments(5, 6, 2, 1e-2).increments
    three = sample_brownian_increments(5, 4, 3, 1e-2).increments
    assert np.array_equal(two.ravel(), three.ravel())
    assert not np.array_equal(two[:4, 0], three[:, 0])


def test_increment_variance():
    path = sample_brownian_increments(1, 200_000, 1, 1e-3)
    assert path.increments.var() == pytest.approx(1e-3, rel=0.02)
    assert abs(path.increments.mean()) < 5 * np.sqrt(1e-3 / 200_000)


def test_zero_mode_path():
    path = sample_brownian_increments(1, 10, 0, 0.1)
    assert path.increments.shape == (10, 0)
    assert path.T == pytest.approx(1.0)
    assert path.cumulative().shape == (11, 0)


def test_cumulative_window_and_coarsen():
    path = sample_brownian_increments(5, 12, 2, 0.01)
    W = path.cumulative()
    assert np.array_equal(W[0], [0.0, 0.0])
    assert np.allclose(W[-1], path.increments.sum(axis=0))
    window = path.window(4, 10)
    assert window.K == 6
    assert np.array_equal(window.increments, path.increments[4:10])
    coarse = path.coarsen(3)
    assert coarse.K == 4
    assert coarse.dt == pytest.approx(0.03)
    assert np.allclose(coarse.cumulative()[-1], W[-1])
    with pytest.raises(ValueError):
        path.coarsen(5)


def test_path_validation():
    with pytest.raises(ValueError):
        BrownianPath(0, 0.0, np.zeros((3, 1)))
    with pytest.raises(ValueError):
        sample_brownian_increments(0, 0, 1, 0.1)


def test_sincos2d_outer_sum_is_identity():
    family = sincos2d_family()
    x = random_points(50, 2)
    assert np.allclose(family.sum_outer(0.0, x), np.eye(2))
    assert np.allclose(family.pointwise_norm(0.0, x), np.sqrt(2.0))


def test_sincos2d_derivatives_match_finite_differences():
    analytic = sincos2d_family()
    numeric = custom_noise_family("fd", 2, 4, analytic.field_fn, bound=np.sqrt(2.0))
    x = random_points(20, 2, seed=1)
    assert np.allclose(numeric.jacobian(0.0, x), analytic.jacobian(0.0, x), atol=1e-5)
    assert np.allclose(numeric.hessian(0.0, x), analytic.hessian(0.0, x), atol=1e-2)


def test_lie_brackets():
    family = sincos2d_family()
    x = random_points(10, 2, seed=2)
    # same-axis modes do not commute: [b_1, b_2] = (-2 pi, 0)
    assert np.allclose(lie_bracket(family, 0, 1, 0.0, x), [-2 * np.pi, 0.0])
    assert np.allclose(lie_bracket(family, 0, 2, 0.0, x), 0.0)

    profile = PeriodicProfile(mean=1.0, cos=[0.3], sin=[0.1])
    commuting = builtin_noise_family("axis_commuting", {"profiles": [profile, profile]}, dim=2)
    assert np.allclose(lie_bracket(commuting, 0, 1, 0.0, x), 0.0)


def test_profile_positivity_and_derivatives():
    with pytest.raises(ValidationError):
        PeriodicProfile(mean=0.5, cos=[0.3, 0.3])
    profile = PeriodicProfile(mean=1.0, cos=[0.2, 0.1], sin=[0.05])
    s = np.linspace(0.0, 1.0, 17)
    step = 1e-5
    numeric = (profile.value(s + step) - profile.value(s - step)) / (2 * step)
    assert np.allclose(profile.derivative(s), numeric, atol=1e-5)
    numeric2 = (profile.derivative(s + step) - profile.derivative(s - step)) / (2 * step)
    assert np.allclose(profile.second_derivative(s), numeric2, atol=1e-3)
    assert profile.sup == pytest.approx(1.35)


def test_constant_family():
    family = builtin_noise_family("constant", {"vectors": [[0.3, 0.4]]}, dim=2)
    assert family.n_modes == 1
    assert family.bound == pytest.approx(0.5)
    assert not family.jacobian(0.0, random_points(3, 2)).any()
    with pytest.raises(ConfigurationError):
        builtin_noise_family("constant", {"vectors": [[0.3]]}, dim=2)


def test_builtin_family_errors():
    with pytest.raises(ConfigurationError):
        builtin_noise_family("sincos2d", dim=1)
    with pytest.raises(ConfigurationError):
        builtin_noise_family("nonsense")
    assert builtin_noise_family("zero", dim=1).n_modes == 0


def test_spot_check_bound():
    grid = PeriodicGrid(dim=2, n=16)
    assert sincos2d_family().spot_check_bound(grid) == pytest.approx(np.sqrt(2.0))
    understated = custom_noise_family(
        "understated", 2, 4, sincos2d_family().field_fn, bound=1.0, jacobian_fn=sincos2d_family().jacobian_fn
    )
    with pytest.raises(ConfigurationError):
        understated.spot_check_bound(grid)
