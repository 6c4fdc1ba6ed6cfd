"""Scenario configuration documents."""

import hashlib
import json
import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..core.grid import PeriodicGrid
from ..noise.families import PeriodicProfile
from ..pde.models import SolverConfig
from ..utils.errors import ConfigurationError

SCENARIOS = ("heat", "constant_noise", "sincos2d", "axis_commuting", "rough_a", "quasilinear", "custom")

DEFAULT_FAMILY = {
    "heat": "zero",
    "constant_noise": "constant",
    "sincos2d": "sincos2d",
    "axis_commuting": "axis_commuting",
    "rough_a": "constant",
    "quasilinear": "sincos2d",
}

# diagnostics that need the solution u, unavailable when only the flow is integrated
FLOW_ONLY_EXCLUDED = ("cross_validate", "hoelder", "alpha_bounds", "ito_wentzell", "round_trip")


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Spec):
    dim: int = Field(default=1, ge=1, le=2)
    n: int = Field(default=128, ge=8)

    def to_grid(self) -> PeriodicGrid:
        return PeriodicGrid(dim=self.dim, n=self.n)


class TimeSpec(_Spec):
    T: float = Field(default=0.1, gt=0)
    dt: float = Field(default=1e-4, gt=0)

    @model_validator(mode="after")
    def _whole_steps(self):
        K = round(self.T / self.dt)
        if K < 1 or not math.isclose(K * self.dt, self.T, rel_tol=1e-9):
            raise ValueError(f"T={self.T} is not a whole number of steps dt={self.dt}")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


class NoiseSpec(_Spec):
    family: Optional[str] = None
    vectors: Optional[List[List[float]]] = None
    profiles: Optional[List[PeriodicProfile]] = None


class DiffusionSpec(_Spec):
    kind: Literal["constant", "diagonal", "checkerboard", "named"] = "constant"
    value: float = 1.0
    diagonal: Optional[List[float]] = None
    seed: int = 0
    cells: int = Field(default=8, ge=1)
    low: float = 0.6
    high: float = 1.5
    name: Optional[str] = None


class FourierMode(_Spec):
    """amplitude * cos(2 pi (k . x + phase)); missing wavevector components are zero."""

    amplitude: float = 1.0
    wavevector: List[int] = Field(default_factory=lambda: [1])
    phase: float = 0.0


class ScalarSpec(_Spec):
    """Constant, a sum of Fourier modes, or a registered closure."""

    kind: Literal["constant", "fourier", "named"] = "constant"
    value: float = 0.0
    modes: List[FourierMode] = Field(default_factory=list)
    name: Optional[str] = None


class CoefficientsSpec(_Spec):
    a: DiffusionSpec = Field(default_factory=DiffusionSpec)
    nu: Optional[float] = None
    M: Optional[float] = None
    a_lin: Optional[List[float]] = None
    a0: Optional[float] = None
    b0: Optional[List[float]] = None
    f0: Optional[ScalarSpec] = None
    f_vec: Optional[List[ScalarSpec]] = None
    g: Optional[List[ScalarSpec]] = None


class InitialSpec(_Spec):
    kind: Literal["constant", "fourier", "random_hoelder"] = "fourier"
    value: float = 0.0
    modes: List[FourierMode] = Field(default_factory=lambda: [FourierMode(phase=-0.25)])
    gamma0: float = Field(default=0.5, gt=0, le=1)
    seed: int = 0
    terms: int = Field(default=32, ge=1)


class QuasilinearSpec(_Spec):
    name: str = "bounded_decay"
    delta: float = Field(default=0.1, gt=0)


class MonteCarloSpec(_Spec):
    paths: int = Field(default=1, ge=0)
    master_seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    fail_fast: bool = False


class DiagnosticsSpec(_Spec):
    cross_validate: bool = False
    hoelder: bool = False
    hoelder_window: Optional[Tuple[float, float]] = None
    stopping_m: Optional[float] = Field(default=None, gt=0)
    lambda_thresholds: List[float] = Field(default_factory=list)
    probe_node: int = Field(default=0, ge=0)
    alpha_bounds: bool = False
    ito_wentzell: bool = False
    round_trip: bool = False
    record_every: int = Field(default=1, ge=1)
    snapshots: List[Literal["u", "v", "direct", "u0"]] = Field(default_factory=lambda: ["u"])
    flow_only: bool = False

    @model_validator(mode="after")
    def _flow_only_needs_no_solution(self):
        if self.flow_only:
            needs_u = [name for name in FLOW_ONLY_EXCLUDED if getattr(self, name)]
            if needs_u:
                raise ValueError(f"flow_only runs cannot compute {', '.join(needs_u)}")
            self.snapshots = [q for q in self.snapshots if q == "u0"]
        return self


class OutputSpec(_Spec):
    directory: str = "out"


class ScenarioConfig(_Spec):
    scenario: Literal["heat", "constant_noise", "sincos2d", "axis_commuting", "rough_a", "quasilinear", "custom"]
    grid: GridSpec = Field(default_factory=GridSpec)
    time: TimeSpec = Field(default_factory=TimeSpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    coefficients: CoefficientsSpec = Field(default_factory=CoefficientsSpec)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    quasilinear: Optional[QuasilinearSpec] = None
    monte_carlo: MonteCarloSpec = Field(default_factory=MonteCarloSpec)
    diagnostics: DiagnosticsSpec = Field(default_factory=DiagnosticsSpec)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def _materialise(self):
        if self.noise.family is None:
            if self.scenario not in DEFAULT_FAMILY:
                raise ValueError(f"scenario {self.scenario!r} needs an explicit noise.family")
            self.noise.family = DEFAULT_FAMILY[self.scenario]
        if self.scenario == "quasilinear" and self.diagnostics.flow_only:
            raise ValueError("the quasilinear scenario has no flow to integrate")
        if self.scenario == "quasilinear" and self.quasilinear is None:
            self.quasilinear = QuasilinearSpec()
        if not math.isclose(self.solver.dt, self.time.dt, rel_tol=1e-12):
            self.solver = self.solver.model_copy(update={"dt": self.time.dt})
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        return hashlib.sha1(self.canonical_json().encode("utf-8")).hexdigest()


def _dotted(loc) -> str:
    return ".".join(str(part) for part in loc)


def validate_document(document: Dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigurationError(first["msg"], field_path=_dotted(first["loc"])) from exc
