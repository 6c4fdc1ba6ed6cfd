"""Transport-noise vector fields b_n with their first and second derivatives.

Closures are vectorised over points: for x of shape (Q, d)

* ``field(t, x)``    -> (Q, N, d),        b_n^i
* ``jacobian(t, x)`` -> (Q, N, d, d),     J[q, n, i, j] = d_j b_n^i
* ``hessian(t, x)``  -> (Q, N, d, d, d),  H[q, n, i, j, k] = d_j d_k b_n^i
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.grid import PeriodicGrid
from ..utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

FieldFn = Callable[[float, np.ndarray], np.ndarray]

TWO_PI = 2.0 * np.pi


def _points(x, dim: int) -> np.ndarray:
    points = np.atleast_2d(np.asarray(x, dtype=float))
    if points.shape[-1] != dim:
        raise ValueError(f"points must have {dim} coordinates")
    return points


@dataclass(frozen=True)
class NoiseFamily:
    """Finite family of N transport-noise fields on T^d."""

    name: str
    dim: int
    n_modes: int
    field_fn: FieldFn
    jacobian_fn: FieldFn
    hessian_fn: FieldFn
    bound: float
    regularity: str = "analytic"
    profiles: tuple = ()

    def field(self, t: float, x) -> np.ndarray:
        return self.field_fn(t, _points(x, self.dim))

    def jacobian(self, t: float, x) -> np.ndarray:
        return self.jacobian_fn(t, _points(x, self.dim))

    def hessian(self, t: float, x) -> np.ndarray:
        return self.hessian_fn(t, _points(x, self.dim))

    def divergence(self, t: float, x) -> np.ndarray:
        """d_i b_n^i, shape (Q, N)."""
        return np.trace(self.jacobian(t, x), axis1=-2, axis2=-1)

    def sum_outer(self, t: float, x) -> np.ndarray:
        """Sum_n b_n (x) b_n, shape (Q, d, d)."""
        b = self.field(t, x)
        return np.einsum("qni,qnj->qij", b, b)

    def pointwise_norm(self, t: float, x) -> np.ndarray:
        """l2 norm of (b_n(t, x))_n over modes and components, shape (Q,)."""
        b = self.field(t, x)
        return np.sqrt(np.einsum("qni,qni->q", b, b))

    def spot_check_bound(self, grid: PeriodicGrid, times: Sequence[float] = (0.0,)) -> float:
        """Largest node value of the mode norm; raises if it exceeds ``bound``."""
        observed = 0.0
        if self.n_modes:
            nodes = grid.coordinates()
            observed = max(float(self.pointwise_norm(t, nodes).max()) for t in times)
        if observed > self.bound + 1e-9:
            raise ConfigurationError(
                f"noise family {self.name!r} reaches {observed:.6g} on the grid, above its declared bound {self.bound:.6g}",
                field_path="noise.bound",
            )
        return observed


def _empty(shape_tail):
    def fn(t, x):
        return np.zeros((len(x), 0) + shape_tail)

    return fn


def zero_family(dim: int) -> NoiseFamily:
    return NoiseFamily(
        name="zero",
        dim=dim,
        n_modes=0,
        field_fn=_empty((dim,)),
        jacobian_fn=_empty((dim, dim)),
        hessian_fn=_empty((dim, dim, dim)),
        bound=0.0,
    )


def constant_family(vectors) -> NoiseFamily:
    c = np.atleast_2d(np.asarray(vectors, dtype=float))
    n_modes, dim = c.shape

    def field(t, x):
        return np.broadcast_to(c, (len(x), n_modes, dim)).copy()

    def zeros(*tail):
        return lambda t, x: np.zeros((len(x), n_modes) + tail)

    return NoiseFamily(
        name="constant",
        dim=dim,
        n_modes=n_modes,
        field_fn=field,
        jacobian_fn=zeros(dim, dim),
        hessian_fn=zeros(dim, dim, dim),
        bound=float(np.sqrt(np.sum(c * c))),
    )


def sincos2d_family() -> NoiseFamily:
    """b_1 = (-sin 2pi x_1, 0), b_2 = (-cos 2pi x_1, 0), b_3, b_4 likewise along x_2."""

    def field(t, x):
        out = np.zeros((len(x), 4, 2))
        for axis in range(2):
            phase = TWO_PI * x[:, axis]
            out[:, 2 * axis, axis] = -np.sin(phase)
            out[:, 2 * axis + 1, axis] = -np.cos(phase)
        return out

    def jacobian(t, x):
        out = np.zeros((len(x), 4, 2, 2))
        for axis in range(2):
            phase = TWO_PI * x[:, axis]
            out[:, 2 * axis, axis, axis] = -TWO_PI * np.cos(phase)
            out[:, 2 * axis + 1, axis, axis] = TWO_PI * np.sin(phase)
        return out

    def hessian(t, x):
        out = np.zeros((len(x), 4, 2, 2, 2))
        for axis in range(2):
            phase = TWO_PI * x[:, axis]
            out[:, 2 * axis, axis, axis, axis] = TWO_PI ** 2 * np.sin(phase)
            out[:, 2 * axis + 1, axis, axis, axis] = TWO_PI ** 2 * np.cos(phase)
        return out

    return NoiseFamily(
        name="sincos2d",
        dim=2,
        n_modes=4,
        field_fn=field,
        jacobian_fn=jacobian,
        hessian_fn=hessian,
        bound=float(np.sqrt(2.0)),
    )


class PeriodicProfile(BaseModel):
    """1-periodic scalar profile p(s) = mean + sum_k cos_k cos(2 pi k s) + sin_k sin(2 pi k s)."""

    model_config = ConfigDict(frozen=True)

    mean: float = 1.0
    cos: List[float] = Field(default_factory=list)
    sin: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _positive(self):
        if self.mean <= self.amplitude():
            raise ValueError("profile must be positive: mean has to exceed the sum of |coefficients|")
        return self

    def amplitude(self) -> float:
        return float(np.sum(np.abs(self.cos)) + np.sum(np.abs(self.sin)))

    @property
    def sup(self) -> float:
        return self.mean + self.amplitude()

    def _terms(self, s: np.ndarray, order: int) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        total = np.full_like(s, self.mean if order == 0 else 0.0)
        modes = max(len(self.cos), len(self.sin))
        cos = np.pad(np.asarray(self.cos, dtype=float), (0, modes - len(self.cos)))
        sin = np.pad(np.asarray(self.sin, dtype=float), (0, modes - len(self.sin)))
        for k in range(1, modes + 1):
            w = TWO_PI * k
            # each derivative multiplies by w and shifts the phase by a quarter turn
            phase = w * s + order * np.pi / 2
            total = total + w ** order * (cos[k - 1] * np.cos(phase) + sin[k - 1] * np.sin(phase))
        return total

    def value(self, s) -> np.ndarray:
        return self._terms(s, 0)

    def derivative(self, s) -> np.ndarray:
        return self._terms(s, 1)

    def second_derivative(self, s) -> np.ndarray:
        return self._terms(s, 2)


def axis_commuting_family(profiles: Sequence[PeriodicProfile]) -> NoiseFamily:
    """b_n(x) = p_n(x_n) e_n, one mode per axis; the fields commute."""
    profiles = [p if isinstance(p, PeriodicProfile) else PeriodicProfile.model_validate(p) for p in profiles]
    dim = len(profiles)

    def field(t, x):
        out = np.zeros((len(x), dim, dim))
        for n, p in enumerate(profiles):
            out[:, n, n] = p.value(x[:, n])
        return out

    def jacobian(t, x):
        out = np.zeros((len(x), dim, dim, dim))
        for n, p in enumerate(profiles):
            out[:, n, n, n] = p.derivative(x[:, n])
        return out

    def hessian(t, x):
        out = np.zeros((len(x), dim, dim, dim, dim))
        for n, p in enumerate(profiles):
            out[:, n, n, n, n] = p.second_derivative(x[:, n])
        return out

    return NoiseFamily(
        name="axis_commuting",
        dim=dim,
        n_modes=dim,
        field_fn=field,
        jacobian_fn=jacobian,
        hessian_fn=hessian,
        bound=float(np.sqrt(sum(p.sup ** 2 for p in profiles))),
        profiles=tuple(profiles),
    )


def custom_noise_family(
    name: str,
    dim: int,
    n_modes: int,
    field_fn: FieldFn,
    bound: float,
    jacobian_fn: Optional[FieldFn] = None,
    hessian_fn: Optional[FieldFn] = None,
    step: float = 1e-4,
    regularity: str = "C2",
) -> NoiseFamily:
    """User family; missing derivatives fall back to central differences of width ``step``."""
    if jacobian_fn is None:
        jacobian_fn = _central_difference(field_fn, dim, step)
        logger.debug("noise family %s: finite-difference Jacobian (step %g)", name, step)
    if hessian_fn is None:
        hessian_fn = _central_difference(jacobian_fn, dim, step)
    return NoiseFamily(
        name=name,
        dim=dim,
        n_modes=n_modes,
        field_fn=field_fn,
        jacobian_fn=jacobian_fn,
        hessian_fn=hessian_fn,
        bound=float(bound),
        regularity=regularity,
    )


def _central_difference(fn: FieldFn, dim: int, step: float) -> FieldFn:
    """Append d_j as a trailing axis."""

    def derivative(t, x):
        parts = []
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = step
            parts.append((fn(t, x + e) - fn(t, x - e)) / (2.0 * step))
        return np.stack(parts, axis=-1)

    return derivative


BUILTIN_FAMILIES = ("zero", "constant", "sincos2d", "axis_commuting")


def builtin_noise_family(name: str, params: Optional[Mapping] = None, dim: int = 2) -> NoiseFamily:
    """Build one of the named families.

    params: ``constant`` takes ``vectors`` (N x d); ``axis_commuting`` takes
    ``profiles`` (one PeriodicProfile per axis).
    """
    params = dict(params or {})
    if name == "zero":
        return zero_family(dim)
    if name == "constant":
        vectors = params.get("vectors")
        if vectors is None:
            raise ConfigurationError("constant family needs 'vectors'", field_path="noise.params.vectors")
        family = constant_family(vectors)
        if family.dim != dim:
            raise ConfigurationError(
                f"vectors have {family.dim} components, grid has d={dim}", field_path="noise.params.vectors"
            )
        return family
    if name == "sincos2d":
        if dim != 2:
            raise ConfigurationError("sincos2d requires d=2", field_path="grid.dim")
        return sincos2d_family()
    if name == "axis_commuting":
        profiles = params.get("profiles")
        if profiles is None:
            profiles = [PeriodicProfile()] * dim
        if len(profiles) != dim:
            raise ConfigurationError(
                f"axis_commuting needs one profile per axis ({dim})", field_path="noise.params.profiles"
            )
        return axis_commuting_family(profiles)
    raise ConfigurationError(f"unknown noise family {name!r}; expected one of {BUILTIN_FAMILIES}", "noise.family")


def lie_bracket(family: NoiseFamily, n: int, m: int, t: float, x) -> np.ndarray:
    """[b_n, b_m] = (b_n . grad) b_m - (b_m . grad) b_n, shape (Q, d)."""
    b = family.field(t, x)
    jac = family.jacobian(t, x)
    return np.einsum("qij,qj->qi", jac[:, m], b[:, n]) - np.einsum("qij,qj->qi", jac[:, n], b[:, m])
