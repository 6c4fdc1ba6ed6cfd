"""Periodic finite-difference stencils and sparse operators on node values.

All arrays are flat node arrays (size, ...) in the C-order of PeriodicGrid.
Faces along axis p sit between node i and i + e_p and are indexed by i.
"""

from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .grid import PeriodicGrid


def shift(grid: PeriodicGrid, values: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """Return w with w[i] = values[i + offset * e_axis] (periodic)."""
    shaped = grid.reshape(values)
    return grid.flatten(np.roll(shaped, -offset, axis=axis))


def central_difference(grid: PeriodicGrid, values: np.ndarray, axis: int) -> np.ndarray:
    return (shift(grid, values, axis, 1) - shift(grid, values, axis, -1)) / (2.0 * grid.h)


def gradient(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """Central-difference gradient, appended as a trailing axis of length d."""
    return np.stack([central_difference(grid, values, axis) for axis in range(grid.dim)], axis=-1)


def divergence(grid: PeriodicGrid, vectors: np.ndarray) -> np.ndarray:
    """Central-difference divergence of a (size, d) vector field."""
    return sum(central_difference(grid, vectors[:, axis], axis) for axis in range(grid.dim))


def face_average(grid: PeriodicGrid, values: np.ndarray, axis: int, kind: str = "arithmetic") -> np.ndarray:
    """Average node values onto the faces i + 1/2 along ``axis``."""
    right = shift(grid, values, axis, 1)
    if kind == "arithmetic":
        return 0.5 * (values + right)
    if kind == "harmonic":
        return 2.0 * values * right / (values + right)
    raise ValueError(f"unknown face average {kind!r}")


def face_divergence(grid: PeriodicGrid, vectors: np.ndarray) -> np.ndarray:
    """Weak-form divergence of a node vector field through face averages.

    Summed over the grid the result vanishes identically (telescoping).
    """
    total = np.zeros(grid.size)
    for axis in range(grid.dim):
        face = face_average(grid, vectors[:, axis], axis)
        total += (face - shift(grid, face, axis, -1)) / grid.h
    return total


@lru_cache(maxsize=64)
def shift_matrix(grid: PeriodicGrid, axis: int, offset: int) -> sp.csr_matrix:
    """Sparse S with (S u)[i] = u[i + offset * e_axis]."""
    index = np.arange(grid.size).reshape(grid.shape)
    target = np.roll(index, -offset, axis=axis).ravel()
    data = np.ones(grid.size)
    return sp.csr_matrix((data, (index.ravel(), target)), shape=(grid.size, grid.size))


@lru_cache(maxsize=16)
def central_difference_matrix(grid: PeriodicGrid, axis: int) -> sp.csr_matrix:
    return ((shift_matrix(grid, axis, 1) - shift_matrix(grid, axis, -1)) / (2.0 * grid.h)).tocsr()


@lru_cache(maxsize=8)
def laplacian_matrix(grid: PeriodicGrid) -> sp.csr_matrix:
    """Standard periodic (2d+1)-point Laplacian."""
    eye = sp.identity(grid.size, format="csr")
    lap = sp.csr_matrix((grid.size, grid.size))
    for axis in range(grid.dim):
        lap = lap + (shift_matrix(grid, axis, 1) - 2.0 * eye + shift_matrix(grid, axis, -1))
    return (lap / grid.h ** 2).tocsr()


def divergence_form_matrix(
    grid: PeriodicGrid,
    coefficient: np.ndarray,
    averaging: str = "arithmetic",
) -> sp.csr_matrix:
    """Conservative discretisation of u -> d_p (c^{pq} d_q u).

    The flux through a face along axis p uses the face-averaged c^{pp} times
    the one-sided difference, and for q != p the face-averaged c^{pq} times
    the average of the two adjacent central differences along q.
    """
    eye = sp.identity(grid.size, format="csr")
    operator = sp.csr_matrix((grid.size, grid.size))
    for p in range(grid.dim):
        forward = (shift_matrix(grid, p, 1) - eye) / grid.h
        backward_div = (eye - shift_matrix(grid, p, -1)) / grid.h
        to_face = 0.5 * (eye + shift_matrix(grid, p, 1))
        flux = sp.csr_matrix((grid.size, grid.size))
        for q in range(grid.dim):
            c_face = face_average(grid, coefficient[:, p, q], p, averaging)
            if not np.any(c_face):
                continue
            grad_q = forward if q == p else to_face @ central_difference_matrix(grid, q)
            flux = flux + sp.diags(c_face) @ grad_q
        operator = operator + backward_div @ flux
    return operator.tocsr()


def advection_matrix(grid: PeriodicGrid, drift: np.ndarray) -> sp.csr_matrix:
    """u -> drift^i d_i u with central differences."""
    operator = sp.csr_matrix((grid.size, grid.size))
    for axis in range(grid.dim):
        if np.any(drift[:, axis]):
            operator = operator + sp.diags(drift[:, axis]) @ central_difference_matrix(grid, axis)
    return operator.tocsr()


def parabolic_operator(
    grid: PeriodicGrid,
    diffusion: np.ndarray,
    drift: Optional[np.ndarray] = None,
    zeroth: Optional[np.ndarray] = None,
    averaging: str = "arithmetic",
) -> sp.csr_matrix:
    """d_i(c^{ij} d_j u) + b^i d_i u + c0 u as one sparse matrix."""
    operator = divergence_form_matrix(grid, diffusion, averaging)
    if drift is not None and np.any(drift):
        operator = operator + advection_matrix(grid, drift)
    if zeroth is not None and np.any(zeroth):
        operator = operator + sp.diags(zeroth)
    return operator.tocsr()


def central_jacobian(grid: PeriodicGrid, matrices: np.ndarray) -> np.ndarray:
    """Central differences of a (size, d, d) field: out[k] = d_k matrices."""
    return np.stack([central_difference(grid, matrices, axis) for axis in range(grid.dim)], axis=0)
