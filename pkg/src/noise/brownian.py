"""Seeded Brownian increments with a stateless, counter-based generator."""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_path_seed(master_seed: int, path_index: int) -> int:
    """Mix (master_seed, path_index) into a 64-bit per-path seed."""
    if path_index < 0:
        raise ValueError("path_index must be non-negative")
    payload = struct.pack("<QQ", master_seed & _MASK64, path_index & _MASK64)
    digest = hashlib.blake2b(payload, digest_size=8, person=b"stochchar-path").digest()
    return int.from_bytes(digest, "little")


def _generator(seed: int) -> np.random.Generator:
    # Philox is counter based: the stream is a pure function of the key.
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


@dataclass(frozen=True)
class BrownianPath:
    """K steps of N independent Brownian increments, each N(0, dt).

    Increments are drawn row by row, so the first k rows of a path with K > k
    steps equal the path generated with k steps from the same seed.
    """

    seed: int
    dt: float
    increments: np.ndarray

    def __post_init__(self):
        increments = np.array(self.increments, dtype=float)
        if increments.ndim != 2:
            raise ValueError("increments must have shape (K, N)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        increments.setflags(write=False)
        object.__setattr__(self, "increments", increments)

    @property
    def K(self) -> int:
        return self.increments.shape[0]

    @property
    def N(self) -> int:
        return self.increments.shape[1]

    @property
    def T(self) -> float:
        return self.K * self.dt

    def cumulative(self) -> np.ndarray:
        """W at t_0..t_K, shape (K + 1, N), W(0) = 0."""
        out = np.zeros((self.K + 1, self.N))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def window(self, start: int, stop: int) -> "BrownianPath":
        """Increments of steps start..stop-1, driving a flow started at start*dt."""
        if not 0 <= start <= stop <= self.K:
            raise ValueError(f"window [{start}, {stop}) outside 0..{self.K}")
        return BrownianPath(self.seed, self.dt, self.increments[start:stop])

    def coarsen(self, factor: int) -> "BrownianPath":
        """Sum consecutive groups of ``factor`` increments (coupled coarse path)."""
        if factor < 1 or self.K % factor:
            raise ValueError(f"cannot coarsen {self.K} steps by a factor of {factor}")
        summed = self.increments.reshape(self.K // factor, factor, self.N).sum(axis=1)
        return BrownianPath(self.seed, self.dt * factor, summed)


def sample_brownian_increments(seed: int, K: int, N: int, dt: float) -> BrownianPath:
    """Draw K x N increments as one C-ordered block from the stream keyed by ``seed``.

    Rows are stable in K: a longer path extends a shorter one. They are not
    stable in N, since increment (k, n) is draw k * N + n of the stream.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if N < 0:
        raise ValueError("N must be >= 0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if N == 0:
        return BrownianPath(seed, dt, np.zeros((K, 0)))
    normals = _generator(seed).standard_normal((K, N))
    return BrownianPath(seed, dt, normals * np.sqrt(dt))
