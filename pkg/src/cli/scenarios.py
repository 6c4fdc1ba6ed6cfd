"""Turn a ScenarioConfig into grids, noise families, coefficients and initial data."""

import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from ..core.grid import PeriodicGrid, ScalarField
from ..noise.families import NoiseFamily, builtin_noise_family, custom_noise_family
from ..pde.quasilinear import QuasilinearFn
from ..transform.coefficients import (
    CoefficientFn,
    CoefficientSet,
    checkerboard_diffusion,
    constant_coefficient,
)
from ..diagnostics.parabolicity import ParabolicityReport, parabolicity_report
from ..utils.errors import CFLViolationError, ConfigurationError, ParabolicityError
from .models import DiffusionSpec, FourierMode, ScalarSpec, ScenarioConfig, validate_document

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def _sine_noise() -> NoiseFamily:
    """Single mode b(x) = sin(2 pi x) on T^1."""

    def field(t, x):
        return np.sin(TWO_PI * x)[:, None, :]

    def jacobian(t, x):
        return (TWO_PI * np.cos(TWO_PI * x))[:, None, :, None]

    def hessian(t, x):
        return (-(TWO_PI ** 2) * np.sin(TWO_PI * x))[:, None, :, None, None]

    return custom_noise_family("sine1d", 1, 1, field, bound=1.0, jacobian_fn=jacobian, hessian_fn=hessian)


def _smooth_sine_diffusion(dim: int) -> CoefficientFn:
    eye = np.eye(dim)

    def fn(t, x):
        return (1.0 + 0.25 * np.sin(TWO_PI * x[:, 0]))[:, None, None] * eye

    return fn


def _bounded_decay(delta: float, dim: int) -> QuasilinearFn:
    eye = np.eye(dim)

    def fn(t, x, y):
        return (0.5 + delta + 0.5 / (1.0 + y * y))[:, None, None] * eye

    return fn


def _max_principle(delta: float, dim: int) -> QuasilinearFn:
    eye = np.eye(dim)

    def fn(t, x, y):
        return (1.0 + 0.5 / (1.0 + y * y))[:, None, None] * eye

    return fn


NAMED_NOISE: Dict[str, Callable[[], NoiseFamily]] = {"sine1d": _sine_noise}
NAMED_DIFFUSIONS: Dict[str, Callable[[int], CoefficientFn]] = {"smooth_sine": _smooth_sine_diffusion}
NAMED_SCALARS: Dict[str, Callable[[], CoefficientFn]] = {
    "sine": lambda: (lambda t, x: np.sin(TWO_PI * x[:, 0])),
    "cosine": lambda: (lambda t, x: np.cos(TWO_PI * x[:, 0])),
}
QUASILINEAR: Dict[str, Callable[[float, int], QuasilinearFn]] = {
    "bounded_decay": _bounded_decay,
    "max_principle": _max_principle,
}


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    grid: PeriodicGrid
    family: NoiseFamily
    coeffs: CoefficientSet
    u0: ScalarField
    A_fn: Optional[QuasilinearFn] = None

    @property
    def T(self) -> float:
        return self.config.time.T

    @property
    def dt(self) -> float:
        return self.config.time.dt

    @property
    def K(self) -> int:
        return self.config.time.steps


def _wavevector(mode: FourierMode, dim: int, where: str) -> np.ndarray:
    k = list(mode.wavevector)
    if len(k) > dim:
        raise ConfigurationError(f"wavevector {k} has more than {dim} components", field_path=where)
    return np.array(k + [0] * (dim - len(k)), dtype=float)


def fourier_sum(value: float, modes: List[FourierMode], dim: int, where: str) -> CoefficientFn:
    """value + sum amplitude cos(2 pi (k . x + phase))."""
    ks = [_wavevector(m, dim, where) for m in modes]

    def fn(t, x):
        out = np.full(len(x), float(value))
        for mode, k in zip(modes, ks):
            out = out + mode.amplitude * np.cos(TWO_PI * (x @ k + mode.phase))
        return out

    return fn


def scalar_closure(spec: ScalarSpec, dim: int, where: str) -> CoefficientFn:
    if spec.kind == "constant":
        return constant_coefficient(spec.value)
    if spec.kind == "fourier":
        return fourier_sum(spec.value, spec.modes, dim, where)
    if spec.name not in NAMED_SCALARS:
        raise ConfigurationError(f"unknown scalar closure {spec.name!r}", field_path=f"{where}.name")
    return NAMED_SCALARS[spec.name]()


def _stacked(specs: List[ScalarSpec], count: int, dim: int, where: str) -> CoefficientFn:
    if len(specs) != count:
        raise ConfigurationError(f"expected {count} entries, got {len(specs)}", field_path=where)
    closures = [scalar_closure(s, dim, f"{where}.{i}") for i, s in enumerate(specs)]

    def fn(t, x):
        return np.stack([c(t, x) for c in closures], axis=-1)

    return fn


def diffusion_closure(spec: DiffusionSpec, dim: int) -> CoefficientFn:
    if spec.kind == "constant":
        return constant_coefficient(spec.value * np.eye(dim))
    if spec.kind == "diagonal":
        if spec.diagonal is None or len(spec.diagonal) != dim:
            raise ConfigurationError(f"diagonal needs {dim} entries", field_path="coefficients.a.diagonal")
        return constant_coefficient(np.diag(spec.diagonal))
    if spec.kind == "checkerboard":
        return checkerboard_diffusion(dim, spec.cells, spec.low, spec.high, spec.seed)
    if spec.name not in NAMED_DIFFUSIONS:
        raise ConfigurationError(f"unknown diffusion closure {spec.name!r}", field_path="coefficients.a.name")
    return NAMED_DIFFUSIONS[spec.name](dim)


def build_noise(config: ScenarioConfig) -> NoiseFamily:
    name, dim = config.noise.family, config.grid.dim
    if name in NAMED_NOISE:
        family = NAMED_NOISE[name]()
        if family.dim != dim:
            raise ConfigurationError(f"noise family {name!r} needs d={family.dim}", field_path="grid.dim")
        return family
    params = {}
    if name == "constant":
        params["vectors"] = config.noise.vectors or [[0.5] + [0.0] * (dim - 1)]
    if name == "axis_commuting" and config.noise.profiles is not None:
        params["profiles"] = config.noise.profiles
    return builtin_noise_family(name, params, dim=dim)


def build_coefficients(config: ScenarioConfig, family: NoiseFamily) -> CoefficientSet:
    spec, dim, N = config.coefficients, config.grid.dim, family.n_modes
    optional = {}
    if spec.a_lin is not None:
        if len(spec.a_lin) != dim:
            raise ConfigurationError(f"a_lin needs {dim} entries", field_path="coefficients.a_lin")
        optional["a_lin"] = constant_coefficient(spec.a_lin)
    if spec.a0 is not None:
        optional["a0"] = constant_coefficient(spec.a0)
    if spec.b0 is not None:
        if len(spec.b0) != N:
            raise ConfigurationError(f"b0 needs {N} entries", field_path="coefficients.b0")
        optional["b0"] = constant_coefficient(spec.b0)
    if spec.f0 is not None:
        optional["f0"] = scalar_closure(spec.f0, dim, "coefficients.f0")
    if spec.f_vec is not None:
        optional["f_vec"] = _stacked(spec.f_vec, dim, dim, "coefficients.f_vec")
    if spec.g is not None:
        optional["g"] = _stacked(spec.g, N, dim, "coefficients.g")
    return CoefficientSet(
        dim=dim,
        a=diffusion_closure(spec.a, dim),
        nu=spec.nu if spec.nu is not None else 0.0,
        M=spec.M if spec.M is not None else math.inf,
        rough=spec.a.kind == "checkerboard",
        **optional,
    )


def random_hoelder_field(grid: PeriodicGrid, gamma0: float, seed: int, terms: int) -> ScalarField:
    """Random Fourier series with coefficients decaying like |k|^-(gamma0 + d/2)."""
    if 2 * terms >= grid.n:
        raise ConfigurationError(f"{terms} Fourier terms do not fit on n={grid.n}", field_path="initial.terms")
    rng = np.random.Generator(np.random.Philox(key=seed))
    axes = [np.arange(-terms, terms + 1)] * grid.dim
    ks = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    ks = ks[np.abs(ks).sum(axis=1) > 0]
    weights = np.linalg.norm(ks, axis=1) ** (-(gamma0 + 0.5 * grid.dim))
    cos_coeffs = rng.standard_normal(len(ks)) * weights
    sin_coeffs = rng.standard_normal(len(ks)) * weights
    # sum_k A_k cos(2 pi k.x) + B_k sin(2 pi k.x) = Re sum_k (A_k - i B_k) e^{2 pi i k.x}
    spectrum = np.zeros(grid.shape, dtype=complex)
    np.add.at(spectrum, tuple((ks % grid.n).T), cos_coeffs - 1j * sin_coeffs)
    values = np.real(np.fft.ifftn(spectrum)) * grid.size
    return ScalarField(grid, grid.flatten(values) / np.sqrt((weights ** 2).sum()))


def build_initial(config: ScenarioConfig, grid: PeriodicGrid) -> ScalarField:
    spec = config.initial
    if spec.kind == "constant":
        return ScalarField(grid, np.full(grid.size, spec.value))
    if spec.kind == "fourier":
        return ScalarField(grid, fourier_sum(spec.value, spec.modes, grid.dim, "initial.modes")(0.0, grid.coordinates()))
    return random_hoelder_field(grid, spec.gamma0, spec.seed, spec.terms)


def build_scenario(config: ScenarioConfig) -> Scenario:
    grid = config.grid.to_grid()
    family = build_noise(config)
    coeffs = build_coefficients(config, family)
    A_fn = None
    if config.scenario == "quasilinear":
        q = config.quasilinear
        if q.name not in QUASILINEAR:
            raise ConfigurationError(f"unknown quasilinear closure {q.name!r}", field_path="quasilinear.name")
        A_fn = QUASILINEAR[q.name](q.delta, grid.dim)
    return Scenario(config, grid, family, coeffs, build_initial(config, grid), A_fn)


def fourier_oracle(scenario: Scenario, t: float) -> Optional[ScalarField]:
    """Exact solution for zero noise, a = c Id constant, no forcing and Fourier initial data."""
    config = scenario.config
    spec = config.coefficients
    if (
        scenario.family.n_modes
        or spec.a.kind != "constant"
        or config.initial.kind == "random_hoelder"
        or any(v is not None for v in (spec.a_lin, spec.a0, spec.f0, spec.f_vec, spec.g))
        or config.scenario == "quasilinear"
    ):
        return None
    grid = scenario.grid
    x = grid.coordinates()
    values = np.full(grid.size, config.initial.value)
    if config.initial.kind == "fourier":
        for mode in config.initial.modes:
            k = _wavevector(mode, grid.dim, "initial.modes")
            decay = math.exp(-(TWO_PI ** 2) * float(k @ k) * spec.a.value * t)
            values = values + mode.amplitude * decay * np.cos(TWO_PI * (x @ k + mode.phase))
    return ScalarField(grid, values)


def check_scenario(scenario: Scenario) -> ParabolicityReport:
    """Declared parabolicity, the noise bound and the CFL guard on the realised grid."""
    config, grid, family = scenario.config, scenario.grid, scenario.family
    family.spot_check_bound(grid, times=(0.0, scenario.T))
    coeffs = scenario.coeffs
    if scenario.A_fn is not None:
        frozen = scenario.A_fn
        u0 = scenario.u0.values
        coeffs = CoefficientSet(dim=grid.dim, a=lambda t, x: frozen(t, x, u0), nu=coeffs.nu, M=coeffs.M)
    declared = config.coefficients
    report = parabolicity_report(
        coeffs, family, grid, times=(0.0, 0.5 * scenario.T, scenario.T), nu=declared.nu, M=declared.M
    )
    if not report.passed:
        if declared.M is not None and report.M_hat > declared.M + 1e-9:
            raise ConfigurationError(
                f"sup bound {report.M_hat:.6g} exceeds declared M={declared.M:.6g}", field_path="coefficients.M"
            )
        raise ParabolicityError(report.nu_hat, declared.nu if declared.nu is not None else 0.0)
    if scenario.A_fn is None and (declared.a0 is not None or declared.b0 is not None):
        raise ConfigurationError(
            "zeroth-order terms a0/b0 are not carried by the transformed equation", field_path="coefficients"
        )
    if config.diagnostics.probe_node >= grid.size:
        raise ConfigurationError(
            f"probe node {config.diagnostics.probe_node} outside the {grid.size} grid nodes",
            field_path="diagnostics.probe_node",
        )
    direct = config.scenario == "quasilinear" or config.diagnostics.cross_validate or config.diagnostics.ito_wentzell
    if direct and family.n_modes:
        ratio = scenario.dt * family.bound / grid.h
        if ratio > config.solver.cfl:
            raise CFLViolationError(
                f"dt*M/h = {ratio:.4g} exceeds cfl={config.solver.cfl}", field_path="time.dt"
            )
    logger.debug("parabolicity: nu_hat=%.6g M_hat=%.6g", report.nu_hat, report.M_hat)
    return report


def parse_config(text: str) -> ScenarioConfig:
    """Validate a JSON scenario document, including the declared parabolicity."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"not valid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from exc
    if not isinstance(document, dict):
        raise ConfigurationError("scenario document must be a JSON object")
    config = validate_document(document)
    check_scenario(build_scenario(config))
    return config
