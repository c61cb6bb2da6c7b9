"""Versioned JSON reports and their plain-text rendering."""
from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

SCHEMA = 1

__all__ = ["SCHEMA", "make_report", "clean", "to_json", "to_text"]


def clean(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def make_report(version: str, command: list, chart: dict | None, params: dict,
                result: dict, warnings: list, wall_time: float | None = None) -> dict:
    rep = {
        "schema": SCHEMA,
        "tool": "bachlab",
        "version": version,
        "command": list(command),
        "chart": chart,
        "params": dict(sorted(params.items())),
        "result": result,
        "warnings": list(warnings),
    }
    if wall_time is not None:
        rep["wall_time"] = wall_time
    return clean(rep)


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def _lines(obj, prefix, out):
    if isinstance(obj, dict):
        if not obj:
            out.append(f"{prefix}: {{}}")
        for k, v in obj.items():
            _lines(v, f"{prefix}.{k}" if prefix else str(k), out)
    elif isinstance(obj, list) and obj and any(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            _lines(v, f"{prefix}[{i}]", out)
    else:
        out.append(f"{prefix}: {json.dumps(obj, allow_nan=False)}")


def to_text(report: dict) -> str:
    """One ``path: value`` line per leaf; numbers are printed exactly as in JSON."""
    out = []
    _lines(report, "", out)
    return "\n".join(out) + "\n"
