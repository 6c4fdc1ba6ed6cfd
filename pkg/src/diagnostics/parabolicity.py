"""Parabolicity constants, ellipticity ratio and two-sided bounds on alpha."""

import logging
import math
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel
from scipy.stats import norm

from ..core.grid import MatrixField, PeriodicGrid, RatioField
from ..flow.integrator import FlowState
from ..noise.families import NoiseFamily
from ..transform.coefficients import CoefficientSet

logger = logging.getLogger(__name__)

SLACK = 1e-9


class ParabolicityReport(BaseModel):
    nu_hat: float
    M_hat: float
    nu: Optional[float] = None
    M: Optional[float] = None
    passed: bool
    worst_node: int
    worst_time: float


class AlphaBoundsReport(BaseModel):
    lower_violations: int
    upper_violations: int
    lower_margin: float
    upper_margin: float

    @property
    def passed(self) -> bool:
        return self.lower_violations == 0 and self.upper_violations == 0


def _symmetric(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values + np.swapaxes(values, -1, -2))


def parabolicity_report(
    coeffs: CoefficientSet,
    family: NoiseFamily,
    grid: PeriodicGrid,
    times: Sequence[float] = (0.0,),
    nu: Optional[float] = None,
    M: Optional[float] = None,
) -> ParabolicityReport:
    """Smallest eigenvalue of sym(a - 1/2 sum b_n (x) b_n) and the sup bound over nodes and times.

    The bound is max_x sum_ij |a^{ij}| + sum_i (sum_n |b_n^i|^2)^{1/2}.
    Declared constants default to those carried by ``coeffs``.
    """
    nu = coeffs.nu if nu is None else nu
    M = coeffs.M if M is None else M
    x = grid.coordinates()
    nu_hat, M_hat = math.inf, 0.0
    worst_node, worst_time = 0, float(times[0])
    for t in times:
        a = coeffs.eval_a(t, x)
        b = family.field(t, x)
        reduced = a - 0.5 * family.sum_outer(t, x)
        smallest = np.linalg.eigvalsh(_symmetric(reduced))[:, 0]
        node = int(np.argmin(smallest))
        if smallest[node] < nu_hat:
            nu_hat, worst_node, worst_time = float(smallest[node]), node, float(t)
        bound = np.abs(a).sum(axis=(-2, -1)) + np.sqrt((b ** 2).sum(axis=1)).sum(axis=-1)
        M_hat = max(M_hat, float(bound.max()))
    if nu is None:
        passed = nu_hat > 0
    else:
        passed = nu_hat >= nu - SLACK
    if M is not None and math.isfinite(M):
        passed = passed and M_hat <= M + SLACK
    return ParabolicityReport(
        nu_hat=nu_hat, M_hat=M_hat, nu=nu, M=M, passed=passed, worst_node=worst_node, worst_time=worst_time
    )


def ellipticity_ratio(alpha: np.ndarray) -> np.ndarray:
    """lambda_max / lambda_min of |eig(sym alpha)| for a stack (Q, d, d); singular entries are +inf."""
    eig = np.abs(np.linalg.eigvalsh(_symmetric(np.asarray(alpha, dtype=float))))
    largest, smallest = eig.max(axis=-1), eig.min(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(smallest > 0, largest / np.where(smallest > 0, smallest, 1.0), np.inf)


def ellipticity_ratio_field(alpha: MatrixField) -> RatioField:
    return RatioField(alpha.grid, ellipticity_ratio(alpha.values))


def lambda_tail_probability(k: float, t: float, diffusion: float = 1.0) -> float:
    """P(Lambda(t, x) > k) for sincos2d noise and a = diffusion * Id.

    log Lambda = 4 pi |W^1_t - W^2_t| with W^1 - W^2 ~ N(0, 2t), independent
    of the (equal) diagonal value of a.
    """
    if k < 1:
        raise ValueError("threshold k must be >= 1")
    if diffusion <= 0.5:
        raise ValueError("a = diffusion * Id must exceed 1/2 Id for sincos2d noise")
    if k == 1:
        return 1.0
    if t <= 0:
        return 0.0
    return float(2.0 * norm.sf(math.log(k) / (4.0 * math.pi * math.sqrt(2.0 * t))))


def alpha_bounds_check(alpha: MatrixField, state: FlowState, nu: float, M: float) -> AlphaBoundsReport:
    """Node-wise nu / |Dxi|^2 <= lambda_min(sym alpha) and lambda_max(sym alpha) <= M |psi|^2."""
    eig = np.linalg.eigvalsh(alpha.symmetric_part())
    lower = nu / state.jacobian_norm() ** 2
    upper = M * state.inverse_norm() ** 2
    lower_gap = eig[:, 0] - lower
    upper_gap = upper - eig[:, -1]
    return AlphaBoundsReport(
        lower_violations=int(np.count_nonzero(lower_gap < -SLACK)),
        upper_violations=int(np.count_nonzero(upper_gap < -SLACK)),
        lower_margin=float(lower_gap.min()),
        upper_margin=float(upper_gap.min()),
    )
