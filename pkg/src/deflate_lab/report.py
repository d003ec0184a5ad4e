"""Long-format trace tables: emission, reading and cross-seed aggregation."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

TRACE_COLUMNS = (
    "run_id", "seed", "experiment", "profile", "method", "k", "round",
    "D", "B", "G", "mismatch", "rel_weight_error", "envelope", "surrogate_B", "surrogate_G",
)
NUMERIC = ("D", "B", "G", "mismatch", "rel_weight_error", "envelope", "surrogate_B", "surrogate_G")
AGG_METRICS = ("D", "B", "G", "mismatch", "rel_weight_error")
META_PREFIX = "# meta: "


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            return ""
        return repr(float(value))
    return str(value)


def trace_rows(trace, *, run_id: str, seed: int, experiment: str, profile: str, method: str,
               envelope=None, surrogate=None) -> list[dict]:
    """Rows for every ``(k, round)`` of a normalized :class:`DeflationTrace`.

    ``envelope`` and the surrogate tables are optional ``[k, round]`` arrays.
    """
    rows = []
    for k in range(trace.r):
        for ell in range(trace.rounds + 1):
            row = {
                "run_id": run_id, "seed": seed, "experiment": experiment, "profile": profile,
                "method": method, "k": k + 1, "round": ell,
                "D": trace.D[k, ell], "B": trace.B[k, ell], "G": trace.G[k, ell],
                "mismatch": trace.mismatch[k, ell],
                "rel_weight_error": trace.rel_weight_error[ell],
                "envelope": None, "surrogate_B": None, "surrogate_G": None,
            }
            if envelope is not None:
                row["envelope"] = envelope[k, ell]
            if surrogate is not None:
                row["surrogate_B"] = surrogate.B_hat[k, ell]
                row["surrogate_G"] = surrogate.G_hat[k, ell]
            rows.append(row)
    return rows


def emit_trace(rows, path, fmt: str = "csv", meta: dict | None = None,
               columns=TRACE_COLUMNS) -> Path:
    """Write rows with a metadata header; undefined values become empty fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = meta or {}
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            fh.write(META_PREFIX + json.dumps(meta, sort_keys=True) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row.get(c)) for c in columns])
    elif fmt == "json":
        doc = {
            "meta": meta,
            "columns": list(columns),
            "rows": [{c: _json_value(row.get(c)) for c in columns} for row in rows],
        }
        path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _parse(col, text):
    if text == "" or text is None:
        return None
    if col in NUMERIC:
        return float(text)
    if col in ("seed", "k", "round", "n_seeds"):
        return int(text)
    try:
        return float(text) if col.endswith(("_median", "_min", "_max")) else text
    except ValueError:
        return text


def read_trace(path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`emit_trace`; returns ``(meta, rows)``."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return doc["meta"], doc["rows"]
    meta = {}
    with path.open(newline="") as fh:
        first = fh.readline()
        if first.startswith(META_PREFIX):
            meta = json.loads(first[len(META_PREFIX):])
        else:
            fh.seek(0)
        reader = csv.DictReader(fh)
        rows = [{c: _parse(c, v) for c, v in row.items()} for row in reader]
    return meta, rows


def run_key(run_id: str) -> str:
    """``run_id`` without its trailing ``-s<seed>`` tag."""
    head, sep, tail = run_id.rpartition("-s")
    return head if sep and tail.isdigit() else run_id


def aggregate(rows) -> list[dict]:
    """Per ``(run_key, k, round)`` median, min and max across seeds."""
    groups: dict = {}
    order = []
    for row in rows:
        key = (run_key(row["run_id"]), row["experiment"], row["profile"], row["method"],
               row["k"], row["round"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    for key in sorted(order, key=lambda t: (t[0], t[4], t[5])):
        members = groups[key]
        rec = {"run_key": key[0], "experiment": key[1], "profile": key[2], "method": key[3],
               "k": key[4], "round": key[5], "n_seeds": len(members)}
        for metric in AGG_METRICS:
            vals = np.array([m[metric] for m in members if m[metric] is not None
                             and math.isfinite(m[metric])], dtype=float)
            if vals.size:
                rec[f"{metric}_median"] = float(np.median(vals))
                rec[f"{metric}_min"] = float(vals.min())
                rec[f"{metric}_max"] = float(vals.max())
            else:
                rec[f"{metric}_median"] = rec[f"{metric}_min"] = rec[f"{metric}_max"] = None
        out.append(rec)
    return out


AGG_COLUMNS = ("run_key", "experiment", "profile", "method", "k", "round", "n_seeds") + tuple(
    f"{m}_{s}" for m in AGG_METRICS for s in ("median", "min", "max")
)
