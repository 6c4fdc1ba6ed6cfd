"""Monte Carlo orchestration of scenario runs."""

import asyncio
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.grid import ScalarField
from ..diagnostics.hoelder import hoelder_estimate
from ..diagnostics.ito_wentzell import ito_wentzell_residual
from ..diagnostics.parabolicity import (
    alpha_bounds_check,
    ellipticity_ratio,
    ellipticity_ratio_field,
    lambda_tail_probability,
)
from ..diagnostics.stopping import StoppingMonitor, flow_distortion
from ..flow.integrator import FlowState, iter_flow
from ..inverse.inverter import invert_flow_field, reverse_round_trip_residual
from ..noise.brownian import BrownianPath, derive_path_seed, sample_brownian_increments
from ..pde.quasilinear import solve_quasilinear
from ..pde.solver import DirectSPDEStepper, RandomPDEStepper, compose_level
from ..transform.coefficients import transform_level
from ..transform.heat import HeatSplitStepper
from ..utils.errors import PathFailedError, SimulationError
from .models import ScenarioConfig, validate_document
from .scenarios import Scenario, build_scenario, fourier_oracle

logger = logging.getLogger(__name__)

MAX_PRINCIPLE_SLACK = 1e-3
HISTOGRAM_BINS = 10

COLUMN_DOCS = {
    "level": "time level index k (t = k dt)",
    "t": "time",
    "u_min": "minimum of u over the nodes",
    "u_max": "maximum of u over the nodes",
    "u_l2": "discrete L2 norm of u",
    "distortion": "max over nodes of |psi| + |Dxi| (spectral norms)",
    "det_min": "minimum of det Dxi over the nodes",
    "inversion_residual": "max node residual |xi(Psi(y)) - y|",
    "lambda_probe": "ellipticity ratio of the transformed diffusion at the probe node",
    "jacobian_node": "d_1 xi^1 at the probe node",
    "direct_l2_gap": "relative L2 distance between the flow-method and direct solutions",
}


def timeseries_columns(config: ScenarioConfig) -> List[str]:
    if config.diagnostics.flow_only:
        columns = ["level", "t", "distortion", "det_min", "jacobian_node"]
        if config.diagnostics.lambda_thresholds:
            columns.append("lambda_probe")
        return columns
    columns = ["level", "t", "u_min", "u_max", "u_l2"]
    if config.scenario == "quasilinear":
        return columns
    columns += ["distortion", "det_min", "inversion_residual"]
    if config.diagnostics.lambda_thresholds:
        columns.append("lambda_probe")
    if config.diagnostics.cross_validate:
        columns.append("direct_l2_gap")
    return columns


class Snapshot(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    quantity: str
    t: float
    values: np.ndarray


class PathResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int
    seed: int
    status: str = "ok"
    error_type: Optional[str] = None
    error_message: Optional[str] = None
    metrics: Dict[str, float] = Field(default_factory=dict)
    timeseries: List[Dict[str, float]] = Field(default_factory=list)
    snapshots: List[Snapshot] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class RunSummary(BaseModel):
    config: ScenarioConfig
    config_hash: str
    results: List[PathResult]
    aggregate: Dict[str, Any]
    started_at: str
    elapsed_seconds: float
    workers: int


def _l2(grid, values: np.ndarray) -> float:
    return float(np.sqrt(np.dot(values, values) * grid.cell_volume))


def _recorded(k: int, K: int, every: int) -> bool:
    return k % every == 0 or k == K


def _in_window(t: float, window: Optional[Tuple[float, float]]) -> bool:
    return window is None or window[0] <= t <= window[1]


class _RangeTracker:
    """Largest excursion of a solution outside the range of its initial data."""

    def __init__(self, u0: np.ndarray):
        self.low, self.high = float(u0.min()), float(u0.max())
        self.sup0 = float(np.abs(u0).max())
        self.excess = 0.0
        self.sup_excess = 0.0

    def update(self, values: np.ndarray):
        self.excess = max(self.excess, float(values.max()) - self.high, self.low - float(values.min()))
        self.sup_excess = max(self.sup_excess, float(np.abs(values).max()) - self.sup0)

    def metrics(self) -> Dict[str, float]:
        return {
            "range_violation": self.excess,
            "max_principle_ok": float(self.excess <= MAX_PRINCIPLE_SLACK),
            "sup_excess": self.sup_excess,
        }


def _hoelder_metrics(levels: List[np.ndarray], grid, level_dt: float) -> Dict[str, float]:
    estimate = hoelder_estimate(np.stack(levels), spacing=grid.h, parabolic=len(levels) > 1, dt=level_dt)
    return {"hoelder_exponent": estimate.exponent_hat, "hoelder_seminorm": estimate.seminorm_hat}


def _simulate_quasilinear(scenario: Scenario, path: BrownianPath) -> PathResult:
    config, grid = scenario.config, scenario.grid
    diag = config.diagnostics
    every = diag.record_every
    K = scenario.K
    levels = solve_quasilinear(
        scenario.A_fn,
        scenario.family,
        scenario.u0,
        path,
        grid,
        scenario.T,
        config.solver,
        nu=config.coefficients.nu,
        record_every=every,
    )
    steps = [k for k in range(K + 1) if _recorded(k, K, every)]
    tracker = _RangeTracker(scenario.u0.values)
    rows, window = [], []
    for k, U in zip(steps, levels):
        t = k * scenario.dt
        tracker.update(U.values)
        rows.append(
            {"level": k, "t": t, "u_min": float(U.values.min()), "u_max": float(U.values.max()), "u_l2": _l2(grid, U.values)}
        )
        if diag.hoelder and k % every == 0 and _in_window(t, diag.hoelder_window):
            window.append(U.reshaped())

    metrics = {"u_final_sup": float(np.abs(levels[-1].values).max())}
    metrics.update(tracker.metrics())
    if diag.hoelder:
        metrics.update(_hoelder_metrics(window, grid, every * scenario.dt))
    snapshots = []
    for quantity in diag.snapshots:
        if quantity in ("u", "direct"):
            snapshots.append(Snapshot(quantity=quantity, t=scenario.T, values=levels[-1].values))
        elif quantity == "u0":
            snapshots.append(Snapshot(quantity=quantity, t=0.0, values=scenario.u0.values))
    return PathResult(index=-1, seed=path.seed, metrics=metrics, timeseries=rows, snapshots=snapshots)


def _simulate_flow(scenario: Scenario, path: BrownianPath) -> PathResult:
    """Flow, inverse, transformed PDE, h equation and composition, one level at a time."""
    config, grid, family, coeffs = scenario.config, scenario.grid, scenario.family, scenario.coeffs
    cfg, diag = config.solver, config.diagnostics
    K, dt, every = scenario.K, scenario.dt, diag.record_every

    stepper = RandomPDEStepper(grid, cfg)
    heat = HeatSplitStepper(grid, dt) if coeffs.has_noise_forcing else None
    direct = DirectSPDEStepper(grid, family, coeffs, cfg) if diag.cross_validate or diag.ito_wentzell else None
    monitor = StoppingMonitor(diag.stopping_m) if diag.stopping_m else None
    want_lambda = bool(diag.lambda_thresholds)

    h = heat.initial() if heat is not None else None
    z = scenario.u0
    u_direct = scenario.u0
    tracker = _RangeTracker(scenario.u0.values)
    inverse = None
    rows: List[Dict[str, float]] = []
    window: List[np.ndarray] = []
    kept_states: List[FlowState] = []
    kept_direct: List[ScalarField] = []
    lower_violations = upper_violations = 0
    inversion_max = 0.0
    lambda_probe = math.nan
    state = u = v = None

    for k, state in enumerate(iter_flow(family, path, grid, K, scheme=cfg.flow_scheme)):
        t = state.t
        inverse = invert_flow_field(state, cfg.inversion_tol, cfg.inversion_max_iter, inverse)
        inversion_max = max(inversion_max, inverse.residual)
        v = z if h is None else ScalarField(grid, z.values + h.values)
        u = compose_level(v, inverse)
        tracker.update(u_direct.values if direct is not None else u.values)
        if monitor is not None:
            monitor.update(state)
        if diag.ito_wentzell:
            kept_states.append(state)
            kept_direct.append(u_direct)

        tc = None
        if k < K or want_lambda or diag.alpha_bounds:
            tc = transform_level(coeffs, family, state, t, h, cfg.include_diffusion_remainder)
            if want_lambda:
                lambda_probe = float(ellipticity_ratio_field(tc.alpha).values[diag.probe_node])
            if diag.alpha_bounds:
                bounds = alpha_bounds_check(tc.alpha, state, coeffs.nu, coeffs.M)
                lower_violations += bounds.lower_violations
                upper_violations += bounds.upper_violations

        if _recorded(k, K, every):
            row = {
                "level": k,
                "t": t,
                "u_min": float(u.values.min()),
                "u_max": float(u.values.max()),
                "u_l2": _l2(grid, u.values),
                "distortion": flow_distortion(state),
                "det_min": float(state.determinant().min()),
                "inversion_residual": inverse.residual,
            }
            if want_lambda:
                row["lambda_probe"] = lambda_probe
            if diag.cross_validate:
                row["direct_l2_gap"] = _l2(grid, u.values - u_direct.values) / max(_l2(grid, u_direct.values), 1e-300)
            rows.append(row)
        if diag.hoelder and k % every == 0 and _in_window(t, diag.hoelder_window):
            window.append(u.reshaped())

        if k == K:
            break
        z = stepper.step(z, tc)
        if heat is not None:
            h = heat.step(h, tc.G_array(), path.increments[k], t)
        if direct is not None:
            u_direct = direct.step(u_direct, t, path.increments[k])

    metrics: Dict[str, float] = {
        "u_final_sup": float(np.abs(u.values).max()),
        "inversion_residual_max": inversion_max,
        "jacobian_integral": float(state.jacobian.values[:, 0, 0].mean()),
    }
    metrics.update(tracker.metrics())
    if diag.cross_validate:
        metrics["direct_gap"] = rows[-1]["direct_l2_gap"]
    exact = fourier_oracle(scenario, scenario.T)
    if exact is not None:
        error = float(np.abs(u.values - exact.values).max())
        metrics["oracle_max_error"] = error
        metrics["oracle_rel_error"] = error / max(float(np.abs(exact.values).max()), 1e-300)
    if diag.hoelder:
        metrics.update(_hoelder_metrics(window, grid, every * dt))
    if monitor is not None:
        report = monitor.report(scenario.T)
        metrics["tau"] = report.tau
        metrics["stopped"] = float(report.stopped)
    if want_lambda:
        metrics["lambda_probe"] = lambda_probe
        for threshold in diag.lambda_thresholds:
            metrics[f"lambda_gt_{threshold:g}"] = float(lambda_probe > threshold)
    if diag.alpha_bounds:
        metrics["alpha_lower_violations"] = float(lower_violations)
        metrics["alpha_upper_violations"] = float(upper_violations)
    if diag.round_trip:
        metrics["round_trip_residual"] = reverse_round_trip_residual(
            state, inverse, cfg.inversion_tol, cfg.inversion_max_iter
        )
    if diag.ito_wentzell:
        metrics["ito_wentzell_residual"] = ito_wentzell_residual(
            kept_direct, kept_states, family, coeffs, path, cfg
        )

    finals = {"u": u, "v": v, "direct": u_direct if direct is not None else None}
    snapshots = []
    for quantity in diag.snapshots:
        if quantity == "u0":
            snapshots.append(Snapshot(quantity=quantity, t=0.0, values=scenario.u0.values))
        elif finals[quantity] is not None:
            snapshots.append(Snapshot(quantity=quantity, t=scenario.T, values=finals[quantity].values))
    return PathResult(index=-1, seed=path.seed, metrics=metrics, timeseries=rows, snapshots=snapshots)


def _lambda_at_node(scenario: Scenario, state: FlowState, node: int) -> float:
    """Ellipticity ratio of alpha = psi (a - 1/2 sum b (x) b) psi^T at one node."""
    x = state.positions()[node : node + 1]
    psi = state.inv_jacobian.values[node : node + 1]
    reduced = scenario.coeffs.eval_a(state.t, x) - 0.5 * scenario.family.sum_outer(state.t, x)
    alpha = np.einsum("qik,qkl,qjl->qij", psi, reduced, psi)
    return float(ellipticity_ratio(alpha)[0])


def _simulate_flow_only(scenario: Scenario, path: BrownianPath) -> PathResult:
    """Flow and Jacobians only: no inversion, no PDE solve."""
    config, grid, family = scenario.config, scenario.grid, scenario.family
    diag = config.diagnostics
    K, every, node = scenario.K, diag.record_every, diag.probe_node
    monitor = StoppingMonitor(diag.stopping_m) if diag.stopping_m else None
    want_lambda = bool(diag.lambda_thresholds)
    rows: List[Dict[str, float]] = []
    state = None
    for k, state in enumerate(iter_flow(family, path, grid, K, scheme=config.solver.flow_scheme)):
        if monitor is not None:
            monitor.update(state)
        if _recorded(k, K, every):
            row = {
                "level": k,
                "t": state.t,
                "distortion": flow_distortion(state),
                "det_min": float(state.determinant().min()),
                "jacobian_node": float(state.jacobian.values[node, 0, 0]),
            }
            if want_lambda:
                row["lambda_probe"] = _lambda_at_node(scenario, state, node)
            rows.append(row)

    metrics: Dict[str, float] = {
        "jacobian_integral": float(state.jacobian.values[:, 0, 0].mean()),
        "jacobian_node": float(state.jacobian.values[node, 0, 0]),
        "det_min": float(state.determinant().min()),
        "orthogonality_defect": state.orthogonality_defect(),
    }
    if monitor is not None:
        report = monitor.report(scenario.T)
        metrics["tau"] = report.tau
        metrics["stopped"] = float(report.stopped)
    if want_lambda:
        lambda_probe = _lambda_at_node(scenario, state, node)
        metrics["lambda_probe"] = lambda_probe
        for threshold in diag.lambda_thresholds:
            metrics[f"lambda_gt_{threshold:g}"] = float(lambda_probe > threshold)
    snapshots = []
    if "u0" in diag.snapshots:
        snapshots.append(Snapshot(quantity="u0", t=0.0, values=scenario.u0.values))
    return PathResult(index=-1, seed=path.seed, metrics=metrics, timeseries=rows, snapshots=snapshots)


def run_path(document: Dict[str, Any], index: int) -> PathResult:
    """Simulate one Monte Carlo path; numerical failures become a failed record."""
    config = validate_document(document)
    seed = derive_path_seed(config.monte_carlo.master_seed, index)
    try:
        scenario = build_scenario(config)
        path = sample_brownian_increments(seed, scenario.K, scenario.family.n_modes, scenario.dt)
        if scenario.A_fn is not None:
            result = _simulate_quasilinear(scenario, path)
        elif config.diagnostics.flow_only:
            result = _simulate_flow_only(scenario, path)
        else:
            result = _simulate_flow(scenario, path)
    except SimulationError as exc:
        logger.warning("path %d failed: %s", index, exc)
        return PathResult(index=index, seed=seed, status="failed", error_type=type(exc).__name__, error_message=str(exc))
    logger.debug("path %d done", index)
    return result.model_copy(update={"index": index})


class MonteCarloRunner:
    """Runs paths concurrently, bounded by ``workers``."""

    def __init__(self, workers: int = 1):
        self.workers = workers
        self.executor: Optional[ProcessPoolExecutor] = None
        self.semaphore: Optional[asyncio.Semaphore] = None

    async def __aenter__(self):
        self.semaphore = asyncio.Semaphore(self.workers)
        if self.workers > 1:
            self.executor = ProcessPoolExecutor(max_workers=self.workers)
        return self

    async def __aexit__(self, exc_type, exc, tb):
        if self.executor:
            self.executor.shutdown(wait=True)

    async def run_path(self, document: Dict[str, Any], index: int, abort: asyncio.Event) -> PathResult:
        await self.semaphore.acquire()
        try:
            if abort.is_set():
                return PathResult(index=index, seed=-1, status="skipped")
            loop = asyncio.get_running_loop()
            result = await loop.run_in_executor(self.executor, run_path, document, index)
            return result
        finally:
            self.semaphore.release()

    async def run_paths(self, config: ScenarioConfig, fail_fast: bool = False) -> List[PathResult]:
        document = config.model_dump(mode="json")
        master = config.monte_carlo.master_seed
        abort = asyncio.Event()

        async def tracked(index: int) -> PathResult:
            result = await self.run_path(document, index, abort)
            if fail_fast and result.status == "failed":
                abort.set()
            return result

        gathered = await asyncio.gather(
            *(tracked(i) for i in range(config.monte_carlo.paths)), return_exceptions=True
        )
        results = []
        for index, item in enumerate(gathered):
            if isinstance(item, BaseException):
                logger.error("path %d crashed: %r", index, item)
                item = PathResult(
                    index=index,
                    seed=derive_path_seed(master, index),
                    status="failed",
                    error_type=type(item).__name__,
                    error_message=str(item),
                )
            results.append(item)
        results.sort(key=lambda r: r.index)
        if fail_fast:
            for result in results:
                if result.status == "failed":
                    raise PathFailedError(result.index, result.error_type, result.error_message or "")
        return results


def _finite(value) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


def _describe(values: Sequence[float]) -> Dict[str, Optional[float]]:
    data = np.asarray(values, dtype=float)
    return {
        "count": int(data.size),
        "mean": _finite(data.mean()),
        "std": _finite(data.std(ddof=1)) if data.size > 1 else None,
        "min": _finite(data.min()),
        "median": _finite(np.median(data)),
        "max": _finite(data.max()),
    }


def _expected_lambda_tail(config: ScenarioConfig, threshold: float) -> Optional[float]:
    a = config.coefficients.a
    if config.noise.family != "sincos2d" or a.kind != "constant":
        return None
    try:
        return lambda_tail_probability(threshold, config.time.T, a.value)
    except ValueError:
        return None


def aggregate(results: Sequence[PathResult], config: ScenarioConfig) -> Dict[str, Any]:
    """Cross-path statistics, computed in path-index order."""
    completed = [r for r in results if r.ok]
    errors: Dict[str, int] = {}
    for r in results:
        if r.status == "failed":
            errors[r.error_type] = errors.get(r.error_type, 0) + 1
    out: Dict[str, Any] = {
        "paths": len(results),
        "completed": len(completed),
        "failed": sum(errors.values()),
        "errors": dict(sorted(errors.items())),
    }

    keys = sorted({key for r in completed for key in r.metrics})
    out["metrics"] = {
        key: _describe([r.metrics[key] for r in completed if key in r.metrics]) for key in keys
    }

    lambda_tails = {}
    for threshold in config.diagnostics.lambda_thresholds:
        flags = [r.metrics[f"lambda_gt_{threshold:g}"] for r in completed if f"lambda_gt_{threshold:g}" in r.metrics]
        if not flags:
            continue
        frequency = float(np.mean(flags))
        se = math.sqrt(frequency * (1.0 - frequency) / len(flags))
        expected = _expected_lambda_tail(config, threshold)
        entry = {"k": threshold, "t": config.time.T, "frequency": frequency, "standard_error": se, "expected": expected}
        if expected is not None:
            # binomial SE at the expected probability, so an all-zero sample is still judged
            reference = math.sqrt(expected * (1.0 - expected) / len(flags))
            entry["within_3se"] = abs(frequency - expected) <= 3.0 * max(se, reference)
        lambda_tails[f"{threshold:g}"] = entry
    if lambda_tails:
        out["lambda_tails"] = lambda_tails

    exponents = [r.metrics["hoelder_exponent"] for r in completed if "hoelder_exponent" in r.metrics]
    if exponents:
        counts, edges = np.histogram(exponents, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
        out["hoelder_histogram"] = {"edges": edges.tolist(), "counts": counts.tolist()}

    taus = [r.metrics["tau"] for r in completed if "tau" in r.metrics]
    if taus:
        out["stopping"] = {
            "m": config.diagnostics.stopping_m,
            "stopped_fraction": float(np.mean([r.metrics["stopped"] for r in completed if "stopped" in r.metrics])),
            "tau_quantiles": {f"{q:g}": float(np.quantile(taus, q)) for q in (0.1, 0.5, 0.9)},
        }

    principle = [r.metrics["max_principle_ok"] for r in completed if "max_principle_ok" in r.metrics]
    out["max_principle_violations"] = int(sum(1 for ok in principle if ok < 1.0))
    return out


async def run_scenario(
    config: ScenarioConfig,
    workers: Optional[int] = None,
    fail_fast: Optional[bool] = None,
) -> RunSummary:
    """Run every path of ``config`` and aggregate; outputs do not depend on ``workers``."""
    workers = workers or config.monte_carlo.workers
    fail_fast = config.monte_carlo.fail_fast if fail_fast is None else fail_fast
    started_at = datetime.now(timezone.utc).isoformat()
    clock = time.perf_counter()
    logger.info(
        "running %s: %d paths, n=%d, d=%d, K=%d, %d workers",
        config.scenario,
        config.monte_carlo.paths,
        config.grid.n,
        config.grid.dim,
        config.time.steps,
        workers,
    )
    async with MonteCarloRunner(workers) as runner:
        results = await runner.run_paths(config, fail_fast)
    summary = RunSummary(
        config=config,
        config_hash=config.config_hash(),
        results=results,
        aggregate=aggregate(results, config),
        started_at=started_at,
        elapsed_seconds=time.perf_counter() - clock,
        workers=workers,
    )
    logger.info(
        "finished %d paths (%d failed) in %.2fs",
        len(results),
        summary.aggregate["failed"],
        summary.elapsed_seconds,
    )
    return summary
