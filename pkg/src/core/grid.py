"""Periodic grids, grid fields and periodic multilinear interpolation."""

from dataclasses import dataclass
from itertools import product
from typing import Callable, ClassVar, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..utils.errors import NonFiniteFieldError

# Fractional indices this close to an integer are treated as nodes, so that
# coordinates produced by i * h interpolate to the stored value exactly.
_NODE_SNAP = 1e-9


class PeriodicGrid(BaseModel):
    """Uniform grid on the unit torus T^d."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1, le=2)
    n: int = Field(ge=8)

    @field_validator("n")
    @classmethod
    def _spacing_is_exact(cls, n: int) -> int:
        if (1.0 / n) * n != 1.0:
            raise ValueError(f"n={n} does not satisfy h*n == 1 in floating point")
        return n

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def coordinates(self) -> np.ndarray:
        """Node coordinates i*h, shape (size, dim), C-order over axes."""
        axes = [np.arange(self.n) * self.h for _ in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def node_coordinate(self, node: int) -> np.ndarray:
        return np.array(np.unravel_index(node, self.shape), dtype=float) * self.h

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """View flat node values (size, ...) as (n, ..., n, ...)."""
        return values.reshape(self.shape + values.shape[1:])

    def flatten(self, values: np.ndarray) -> np.ndarray:
        return values.reshape((self.size,) + values.shape[self.dim:])


def wrap_index(i, n: int):
    """Reduce i (an integer or integer array) modulo n into [0, n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return i % n


@dataclass(frozen=True)
class GridField:
    """Node values on a PeriodicGrid, stored flat as (size, *component_shape)."""

    grid: PeriodicGrid
    values: np.ndarray

    rank: ClassVar[int] = 0
    allow_infinite: ClassVar[bool] = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        expected = (self.grid.size,) + (self.grid.dim,) * self.rank
        if values.shape != expected:
            raise ValueError(f"{type(self).__name__} expects shape {expected}, got {values.shape}")
        bad = np.isnan(values) if self.allow_infinite else ~np.isfinite(values)
        if bad.any():
            node = int(np.argwhere(bad)[0][0])
            raise NonFiniteFieldError(f"{type(self).__name__} has non-finite value at node {node}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn: Callable[[np.ndarray], np.ndarray]):
        return cls(grid, fn(grid.coordinates()))

    @classmethod
    def constant(cls, grid: PeriodicGrid, value):
        value = np.broadcast_to(np.asarray(value, dtype=float), (grid.dim,) * cls.rank)
        return cls(grid, np.broadcast_to(value, (grid.size,) + value.shape).copy())

    def reshaped(self) -> np.ndarray:
        return self.grid.reshape(self.values)

    def __len__(self) -> int:
        return self.grid.size


class ScalarField(GridField):
    rank = 0


class VectorField(GridField):
    rank = 1


class MatrixField(GridField):
    rank = 2

    @classmethod
    def identity(cls, grid: PeriodicGrid) -> "MatrixField":
        return cls.constant(grid, np.eye(grid.dim))

    def symmetric_part(self) -> np.ndarray:
        return 0.5 * (self.values + np.swapaxes(self.values, -1, -2))


class DisplacementField(VectorField):
    """Periodic displacement delta with map(x) = x + delta(x)."""

    @classmethod
    def zero(cls, grid: PeriodicGrid) -> "DisplacementField":
        return cls(grid, np.zeros((grid.size, grid.dim)))

    def positions(self) -> np.ndarray:
        """Images of the grid nodes (not reduced mod 1)."""
        return self.grid.coordinates() + self.values

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the map x + delta(x) at arbitrary points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x + interpolate(self, x)


class RatioField(ScalarField):
    """Scalar node field that may carry +inf markers (singular nodes)."""

    allow_infinite = True


def _fractional_index(grid: PeriodicGrid, x: np.ndarray) -> np.ndarray:
    s = np.mod(x, 1.0) * grid.n
    nearest = np.rint(s)
    return np.where(np.abs(s - nearest) <= _NODE_SNAP, nearest, s)


def _cell(grid: PeriodicGrid, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower and upper corner indices of the cell holding each point, and the offset inside it."""
    s = _fractional_index(grid, points)
    base = np.floor(s)
    lo = wrap_index(base.astype(np.int64), grid.n)
    return lo, wrap_index(lo + 1, grid.n), s - base


def interpolate(
    field: GridField,
    x: Union[np.ndarray, list, tuple],
    method: str = "linear",
) -> np.ndarray:
    """Periodic multilinear (or nearest-cell) interpolation of a grid field.

    ``x`` is a point (d,) or a batch (Q, d); the result has shape
    component_shape or (Q, *component_shape) accordingly.
    """
    grid = field.grid
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[-1] != grid.dim:
        raise ValueError(f"points must have {grid.dim} coordinates")

    values = field.values
    if method == "nearest":
        s = _fractional_index(grid, points)
        idx = wrap_index(np.floor(s + 0.5).astype(np.int64), grid.n)
        flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
        out = values[flat]
    elif method == "linear":
        lo, hi, frac = _cell(grid, points)
        out = None
        for corner in product((0, 1), repeat=grid.dim):
            weight = np.ones(len(points))
            index = []
            for axis, bit in enumerate(corner):
                if bit:
                    weight = weight * frac[:, axis]
                    index.append(hi[:, axis])
                else:
                    weight = weight * (1.0 - frac[:, axis])
                    index.append(lo[:, axis])
            flat = np.ravel_multi_index(tuple(index), grid.shape)
            term = weight.reshape((-1,) + (1,) * (values.ndim - 1)) * values[flat]
            out = term if out is None else out + term
    else:
        raise ValueError(f"unknown interpolation method {method!r}")
    return out[0] if single else out


def interpolate_gradient(field: GridField, x: Union[np.ndarray, list, tuple]) -> np.ndarray:
    """Exact derivative of the multilinear interpolant inside the cell holding x.

    Returns shape (Q, *component_shape, d) with the last axis the derivative
    direction. On a cell face the cell on the upper side is used.
    """
    grid = field.grid
    points = np.atleast_2d(np.asarray(x, dtype=float))
    if points.shape[-1] != grid.dim:
        raise ValueError(f"points must have {grid.dim} coordinates")
    values = field.values
    lo, hi, frac = _cell(grid, points)
    out = np.zeros((len(points),) + values.shape[1:] + (grid.dim,))
    for corner in product((0, 1), repeat=grid.dim):
        index = tuple(hi[:, axis] if bit else lo[:, axis] for axis, bit in enumerate(corner))
        corner_values = values[np.ravel_multi_index(index, grid.shape)]
        for direction in range(grid.dim):
            weight = np.full(len(points), float(grid.n))
            for axis, bit in enumerate(corner):
                if axis == direction:
                    weight = weight if bit else -weight
                elif bit:
                    weight = weight * frac[:, axis]
                else:
                    weight = weight * (1.0 - frac[:, axis])
            out[..., direction] += weight.reshape((-1,) + (1,) * (values.ndim - 1)) * corner_values
    return out
