"""Empirical Kolmogorov-Chentsov moment constant of a random field.

C_Z = max_x E[|Z(x)|^p]^{1/p} + max_{x != y} E[|Z(x) - Z(y)|^{alpha p}]^{1/p} / d(x, y)^alpha
with expectations replaced by sample means. Informational only.
"""

import numpy as np

MIN_SAMPLES = 100
_CHUNK_ELEMENTS = 1 << 24


def _distance(points: np.ndarray, rows: slice, metric: str) -> np.ndarray:
    diff = np.abs(points[rows, None, :] - points[None, :, :])
    if metric == "euclidean":
        return np.sqrt((diff ** 2).sum(axis=-1))
    if metric == "parabolic":
        # first coordinate is time
        time = np.sqrt(diff[..., 0])
        if points.shape[1] == 1:
            return time
        return np.maximum(time, np.sqrt((diff[..., 1:] ** 2).sum(axis=-1)))
    raise ValueError(f"unknown metric {metric!r}")


def metric_dimension(points: np.ndarray, metric: str) -> int:
    dim = points.shape[1]
    return dim + 1 if metric == "parabolic" else dim


def empirical_kc_constant(
    samples: np.ndarray,
    points: np.ndarray,
    p: float,
    alpha: float,
    metric: str = "euclidean",
) -> float:
    """``samples`` has shape (S, P): S realisations of Z at the P ``points`` (P, m)."""
    samples = np.asarray(samples, dtype=float)
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if samples.ndim != 2 or samples.shape[1] != len(points):
        raise ValueError("samples must have shape (S, P) matching the points")
    if samples.shape[0] < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {samples.shape[0]}")
    if p <= metric_dimension(points, metric):
        raise ValueError("p must exceed the metric dimension")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")

    moment = float((np.abs(samples) ** p).mean(axis=0).max() ** (1.0 / p))
    increment = 0.0
    P = len(points)
    chunk = max(1, _CHUNK_ELEMENTS // (samples.shape[0] * P))
    for start in range(0, P, chunk):
        rows = slice(start, min(start + chunk, P))
        d = _distance(points, rows, metric)
        diffs = np.abs(samples[:, rows, None] - samples[:, None, :])
        moments = (diffs ** (alpha * p)).mean(axis=0) ** (1.0 / p)
        valid = d > 0
        if valid.any():
            increment = max(increment, float((moments[valid] / d[valid] ** alpha).max()))
    return moment + increment
