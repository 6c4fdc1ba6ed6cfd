"""Result files of a run: echoed config, manifest, CSV tables, snapshots."""

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import aiofiles
import numpy as np

from ..utils.errors import OutputError
from .models import ScenarioConfig, validate_document
from .runner import COLUMN_DOCS, PathResult, RunSummary, aggregate, timeseries_columns

logger = logging.getLogger(__name__)

SNAPSHOT_DTYPE = "<f8"
SUMMARY_COLUMNS = ["index", "seed", "status", "error_type"]


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _plain(value):
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _dumps(document: Any) -> str:
    return json.dumps(_plain(document), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


async def _write(path: Path, data, mode: str = "w"):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(path, mode) as f:
            await f.write(data)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc


def manifest_document(summary: RunSummary) -> Dict[str, Any]:
    """Per-path seeds and error records; wall-clock data lives under ``timing``."""
    return {
        "scenario": summary.config.scenario,
        "config_hash": summary.config_hash,
        "master_seed": summary.config.monte_carlo.master_seed,
        "paths": [
            {
                "index": r.index,
                "seed": r.seed,
                "status": r.status,
                "error_type": r.error_type,
                "error_message": r.error_message,
            }
            for r in summary.results
        ],
        "failed": sum(1 for r in summary.results if r.status == "failed"),
        "timing": {
            "started_at": summary.started_at,
            "elapsed_seconds": summary.elapsed_seconds,
            "workers": summary.workers,
        },
    }


def summary_rows(results: Sequence[PathResult]) -> Tuple[List[str], List[List[str]]]:
    keys = sorted({key for r in results for key in r.metrics})
    rows = [
        [_format(r.index), _format(r.seed), r.status, r.error_type or ""] + [_format(r.metrics.get(k)) for k in keys]
        for r in results
    ]
    return SUMMARY_COLUMNS + keys, rows


def snapshot_sidecar(summary: RunSummary, result: PathResult, snapshot) -> Dict[str, Any]:
    grid = summary.config.grid
    return {
        "d": grid.dim,
        "n": grid.n,
        "t": snapshot.t,
        "quantity": snapshot.quantity,
        "path_index": result.index,
        "config_hash": summary.config_hash,
        "dtype": SNAPSHOT_DTYPE,
        "order": "C",
    }


async def write_outputs(summary: RunSummary, directory) -> Path:
    """Write every result file of ``summary`` under ``directory``."""
    root = Path(directory)
    await _write(root / "config.json", summary.config.canonical_json() + "\n")
    await _write(root / "manifest.json", _dumps(manifest_document(summary)))
    if not summary.results:
        logger.info("empty run: wrote config and manifest to %s", root)
        return root

    header, rows = summary_rows(summary.results)
    await _write(root / "summary.csv", _csv(header, rows))
    await _write(root / "aggregate.json", _dumps(summary.aggregate))

    columns = timeseries_columns(summary.config)
    schema = {"columns": [{"name": c, "description": COLUMN_DOCS[c]} for c in columns], "float_format": ".17g"}
    await _write(root / "timeseries" / "schema.json", _dumps(schema))
    for result in summary.results:
        if not result.ok:
            continue
        name = f"path_{result.index:05d}"
        table = [[_format(row.get(c)) for c in columns] for row in result.timeseries]
        await _write(root / "timeseries" / f"{name}.csv", _csv(columns, table))
        for snapshot in result.snapshots:
            stem = root / "snapshots" / f"{name}_{snapshot.quantity}"
            data = np.ascontiguousarray(snapshot.values, dtype=SNAPSHOT_DTYPE).tobytes()
            await _write(stem.with_suffix(".bin"), data, "wb")
            await _write(stem.with_suffix(".json"), _dumps(snapshot_sidecar(summary, result, snapshot)))
    logger.info("wrote %d path records to %s", len(summary.results), root)
    return root


def load_snapshot(path) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Snapshot values (flat, node order) and their sidecar."""
    path = Path(path)
    try:
        sidecar = json.loads(path.with_suffix(".json").read_text())
        values = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=SNAPSHOT_DTYPE)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    expected = sidecar["n"] ** sidecar["d"]
    if values.size != expected:
        raise OutputError(path, f"holds {values.size} values, sidecar expects {expected}")
    return values, sidecar


async def _read(path: Path) -> str:
    try:
        async with aiofiles.open(path, "r") as f:
            return await f.read()
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc


async def load_results(directory) -> Tuple[ScenarioConfig, List[PathResult]]:
    """Rebuild the per-path records of an output directory from its tables."""
    root = Path(directory)
    config = validate_document(json.loads(await _read(root / "config.json")))
    manifest = json.loads(await _read(root / "manifest.json"))
    messages = {p["index"]: p.get("error_message") for p in manifest["paths"]}
    if not manifest["paths"]:
        return config, []
    results = []
    for row in csv.DictReader(io.StringIO(await _read(root / "summary.csv"))):
        index = int(row.pop("index"))
        seed = int(row.pop("seed"))
        status = row.pop("status")
        error_type = row.pop("error_type") or None
        metrics = {k: float(v) for k, v in row.items() if v != ""}
        results.append(
            PathResult(
                index=index,
                seed=seed,
                status=status,
                error_type=error_type,
                error_message=messages.get(index),
                metrics=metrics,
            )
        )
    results.sort(key=lambda r: r.index)
    return config, results


async def reaggregate(directory) -> Dict[str, Any]:
    """Recompute aggregate.json from summary.csv."""
    config, results = await load_results(directory)
    document = aggregate(results, config)
    if results:
        await _write(Path(directory) / "aggregate.json", _dumps(document))
    return document
