"""Trace and analysis-table persistence.

Traces are delimiter-separated files with a versioned header line plus a
JSON sidecar for run metadata; analysis tables use the same header
convention. Floats are written with `repr`, so write -> read -> write
round-trips byte-identically and reruns of the same config overwrite
files with identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .metrics import lengthscale_stats

TRACE_SCHEMA = "asyncbo-trace/1"
MANIFEST_SCHEMA = "asyncbo-manifest/1"
ANALYSIS_SCHEMAS = {
    "regret": "asyncbo-analysis-regret/1",
    "distance": "asyncbo-analysis-distance/1",
    "lengthscale": "asyncbo-analysis-lengthscale/1",
    "winrate": "asyncbo-analysis-winrate/1",
    "mwu": "asyncbo-analysis-mwu/1",
}


def _format_value(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    return repr(v)


def write_table(path, schema, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {schema}", ",".join(columns)]
    for row in rows:
        fields = [_format_value(v) for v in row]
        for f in fields:
            if "," in f or "\n" in f:
                raise ValueError(f"field {f!r} is not representable in this format")
        lines.append(",".join(fields))
    path.write_text("\n".join(lines) + "\n")


def read_table(path, expected_schema=None):
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise SchemaError(f"{path} is missing its schema header")
    schema = lines[0][2:].strip()
    if expected_schema is not None and schema != expected_schema:
        raise SchemaError(f"{path}: expected schema {expected_schema}, found {schema}")
    columns = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:] if line]
    return schema, columns, rows


def trace_columns(dimension):
    coords = [f"x_{j}" for j in range(dimension)]
    return ["sim_time", "worker_id", *coords, "y_raw", "incumbent", "delta",
            "mean_lengthscale", "delta_lengthscale"]


def trace_filename(objective, rule, q, seed, mode):
    return f"{objective}__{rule}__q{q}__s{seed}__{mode}.csv"


def write_trace(trace, path):
    """Persist a RunTrace as CSV plus a metadata sidecar."""
    d = trace.dimension
    mean_ls, delta_ls = lengthscale_stats(trace)
    rows = []
    for i, record in enumerate(trace.records):
        rows.append(
            [
                record.sim_time,
                record.worker_id,
                *record.x.tolist(),
                record.y_raw,
                record.incumbent,
                record.delta,
                mean_ls[i],
                delta_ls[i],
            ]
        )
    write_table(path, TRACE_SCHEMA, trace_columns(d), rows)

    final_x, final_y = trace.final_incumbent()
    meta = {
        "schema": TRACE_SCHEMA,
        "config": trace.config.to_dict(),
        "mode": trace.mode,
        "dimension": d,
        "minimize": trace.minimize,
        "f_star": trace.f_star,
        "initial": {
            "inputs": trace.initial_inputs.tolist(),
            "outputs": trace.initial_outputs.tolist(),
            "incumbent": trace.initial_incumbent,
            "incumbent_x": trace.initial_incumbent_x.tolist(),
        },
        "initial_hyper": {
            "lengthscales": trace.initial_hyper.lengthscales.tolist(),
            "signal_variance": trace.initial_hyper.signal_variance,
            "noise_variance": trace.initial_hyper.noise_variance,
        },
        "final": {"x": np.asarray(final_x, float).tolist(), "y_raw": float(final_y)},
        "fit_fallbacks": trace.fit_fallbacks,
        "aborted": trace.aborted,
        "abort_reason": trace.abort_reason,
        "budget_note": trace.budget_note,
    }
    _write_json(_sidecar_path(path), meta)


def _sidecar_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


@dataclass
class LoadedTrace:
    """A trace read back from disk: column arrays plus the sidecar dict."""

    meta: dict
    columns: list
    data: np.ndarray  # (n_records, n_columns)

    def column(self, name):
        return self.data[:, self.columns.index(name)]

    @property
    def num_records(self):
        return self.data.shape[0]

    def final_log_regret(self, floor=1e-12):
        if self.num_records:
            gap = abs(self.meta["f_star"] - self.column("incumbent")[-1])
        else:
            gap = abs(self.meta["f_star"] - self.meta["initial"]["incumbent"])
        return math.log(max(gap, floor))


def load_trace(path):
    path = Path(path)
    _, columns, rows = read_table(path, TRACE_SCHEMA)
    data = np.array([[float(v) for v in row] for row in rows], dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(columns))
    meta = json.loads(_sidecar_path(path).read_text())
    return LoadedTrace(meta=meta, columns=columns, data=data)


def write_loaded_trace(loaded, path):
    """Re-serialize a loaded trace (round-trip support)."""
    int_cols = {loaded.columns.index("worker_id")}
    rows = [
        [int(v) if j in int_cols else v for j, v in enumerate(row)]
        for row in loaded.data.tolist()
    ]
    write_table(path, TRACE_SCHEMA, loaded.columns, rows)
    _write_json(_sidecar_path(path), loaded.meta)


def spec_hash(spec_dict):
    canonical = json.dumps(spec_dict, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(path, spec_dict, runs):
    from . import __version__

    payload = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "spec": spec_dict,
        "spec_hash": spec_hash(spec_dict),
        "runs": runs,
    }
    _write_json(path, payload)


def read_manifest(path):
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != MANIFEST_SCHEMA:
        raise SchemaError(f"{path}: not a manifest file")
    return payload
