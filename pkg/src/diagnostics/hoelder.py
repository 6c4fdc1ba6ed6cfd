"""Empirical Hoelder exponents from dyadic moduli of continuity.

For separations r = base * 2^j the modulus omega(r) is the largest (or a
quantile of the) increment |u(p) - u(q)| over pairs at separation r; the
exponent is the slope of log omega against log r.
"""

import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ..utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

MIN_SCALES = 4
MIN_EXPONENT = 1e-6


class HoelderEstimate(BaseModel):
    exponent_hat: float
    seminorm_hat: float
    r_squared: float
    scale_min: float
    scale_max: float
    n_scales: int


def _statistic(increments: np.ndarray, statistic: str, quantile: float) -> float:
    if not increments.size:
        return 0.0
    if statistic == "max":
        return float(increments.max())
    if statistic == "quantile":
        return float(np.quantile(increments, quantile))
    raise ValueError(f"unknown statistic {statistic!r}")


def _dyadic_shifts(length: int, max_fraction: float) -> List[int]:
    shifts, s = [], 1
    while s <= max_fraction * length:
        shifts.append(s)
        s *= 2
    return shifts


def fit_modulus(scales: Sequence[float], omegas: Sequence[float]) -> HoelderEstimate:
    """Least-squares slope of log omega(r) against log r."""
    scales = np.asarray(scales, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    if len(scales) < MIN_SCALES:
        raise ConfigurationError(f"only {len(scales)} dyadic scales resolvable, need {MIN_SCALES}")
    lo, hi = float(scales.min()), float(scales.max())
    positive = omegas > 0
    if positive.sum() < 2:
        return HoelderEstimate(
            exponent_hat=1.0, seminorm_hat=0.0, r_squared=1.0, scale_min=lo, scale_max=hi, n_scales=len(scales)
        )
    log_r, log_w = np.log(scales[positive]), np.log(omegas[positive])
    slope, intercept = np.polyfit(log_r, log_w, 1)
    fitted = slope * log_r + intercept
    total = float(((log_w - log_w.mean()) ** 2).sum())
    r_squared = 1.0 - float(((log_w - fitted) ** 2).sum()) / total if total > 0 else 1.0
    exponent = float(np.clip(slope, MIN_EXPONENT, 1.0))
    seminorm = float((omegas / scales ** exponent).max())
    return HoelderEstimate(
        exponent_hat=exponent,
        seminorm_hat=seminorm,
        r_squared=r_squared,
        scale_min=lo,
        scale_max=hi,
        n_scales=len(scales),
    )


def _spatial_increments(levels: np.ndarray, shift: int) -> Iterable[np.ndarray]:
    for axis in range(1, levels.ndim):
        yield np.abs(np.roll(levels, -shift, axis=axis) - levels)


def hoelder_estimate(
    values,
    spacing: Optional[float] = None,
    parabolic: bool = False,
    dt: Optional[float] = None,
    statistic: str = "max",
    quantile: float = 0.95,
    max_fraction: float = 1.0 / 16.0,
) -> HoelderEstimate:
    """Fit the Hoelder exponent of a field sequence.

    ``values`` is either a 1-d time series (a "time-only" field sampled every
    ``dt``, or every ``spacing`` if dt is not given) or an array of levels
    (L, n, ..., n) on a periodic grid with node spacing ``spacing``
    (defaults to 1/n). With ``parabolic`` the time lag round(r^2 / dt) is
    included at every spatial scale r, following the metric
    |t - s|^{1/2} + |x - y|.
    """
    if isinstance(values, (list, tuple)) and values and hasattr(values[0], "reshaped"):
        values = np.stack([field.reshaped() for field in values])
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        step = dt if dt is not None else (spacing if spacing is not None else 1.0)
        scales, omegas = [], []
        for lag in _dyadic_shifts(len(values), max_fraction):
            scales.append(lag * step)
            omegas.append(_statistic(np.abs(values[lag:] - values[:-lag]), statistic, quantile))
        return fit_modulus(scales, omegas)

    n = values.shape[-1]
    spacing = 1.0 / n if spacing is None else spacing
    if parabolic and dt is None:
        raise ValueError("parabolic estimates need the time step between levels")
    scales, omegas = [], []
    for shift in _dyadic_shifts(n, max_fraction):
        r = shift * spacing
        parts = [_statistic(inc, statistic, quantile) for inc in _spatial_increments(values, shift)]
        if parabolic and values.shape[0] > 1:
            lag = int(round(r * r / dt))
            if 1 <= lag < values.shape[0]:
                parts.append(_statistic(np.abs(values[lag:] - values[:-lag]), statistic, quantile))
        scales.append(r)
        omegas.append(max(parts))
    return fit_modulus(scales, omegas)


def inverse_temporal_hoelder(
    inverse_positions: Sequence[np.ndarray],
    dt: float,
    statistic: str = "max",
    quantile: float = 0.95,
    max_fraction: float = 1.0 / 4.0,
) -> HoelderEstimate:
    """Temporal exponent of t -> Psi_t(y), pooled over nodes y.

    ``inverse_positions`` holds Psi_t at the nodes, one (size, d) array per
    level spaced ``dt`` apart.
    """
    track = np.asarray(inverse_positions, dtype=float)
    scales, omegas = [], []
    for lag in _dyadic_shifts(track.shape[0] - 1, max_fraction):
        jumps = np.linalg.norm(track[lag:] - track[:-lag], axis=-1)
        scales.append(lag * dt)
        omegas.append(_statistic(jumps, statistic, quantile))
    estimate = fit_modulus(scales, omegas)
    logger.debug("inverse flow temporal exponent %.3f over %d scales", estimate.exponent_hat, estimate.n_scales)
    return estimate
