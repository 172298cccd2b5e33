"""Serialization of run artifacts: CSV tables, JSON reports, manifests.

CSV floats use 17 significant digits (lossless for float64), so reruns of a
deterministic computation are byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np


def fmt_float(x) -> str:
    return f"{float(x):.17g}"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def json_text(obj) -> str:
    """Deterministic JSON with non-finite floats mapped to null."""
    return json.dumps(_jsonable(obj), indent=2) + "\n"


def json_line(obj) -> str:
    """One-line JSON record (for .jsonl files)."""
    return json.dumps(_jsonable(obj), separators=(", ", ": "))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def trace_csv(trace, d: int) -> str:
    header = ["t"] + [f"x_{j + 1}" for j in range(d)] + ["epr_running"]
    rows = [
        [trace.times[i], *trace.states[i], trace.epr_running[i]]
        for i in range(trace.times.size)
    ]
    return csv_text(header, rows)


def z_samples_csv(z) -> str:
    return csv_text(["path_id", "z"], [[i, z[i]] for i in range(len(z))])


def mdp_csv(profile) -> str:
    rows = [
        [profile.thresholds[j], profile.empirical_rates[j],
         profile.theoretical_rates[j], profile.flags[j]]
        for j in range(profile.thresholds.size)
    ]
    return csv_text(["x", "empirical_rate", "theoretical_rate", "flag"], rows)


def lil_csv(trace) -> str:
    rows = [
        [int(trace.k_values[j]), trace.checkpoints[j],
         trace.s_values[j], trace.r_values[j]]
        for j in range(trace.checkpoints.size)
    ]
    return csv_text(["k", "t_k", "S_t", "R_t"], rows)
