"""CSV and JSON writers for observable series."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .observables import ObservableSeries, SeriesKind

__all__ = ["write_series", "read_series_csv", "format_float", "to_jsonable"]

_FREQUENCY_KINDS = {SeriesKind.SPECTRUM_C, SeriesKind.SPECTRUM_A, SeriesKind.FDT_RATIO}


def format_float(x: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    x = float(x)
    if x == 0.0:
        return "0.0" if math.copysign(1.0, x) > 0 else "-0.0"
    return repr(x)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return "inf" if math.isinf(v) and v > 0 else v
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "value"):
        return obj.value
    return obj


def write_series(directory, name: str, series: ObservableSeries, *, config_hash: str,
                 formats=("csv", "json")) -> list[Path]:
    """Write ``<name>.csv`` (columns t or omega, re, im) and a ``<name>.json`` metadata sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    axis = "omega" if series.kind in _FREQUENCY_KINDS else "t"
    if "csv" in formats:
        path = directory / f"{name}.csv"
        lines = [f"{axis},re,im"]
        for x, v in zip(series.grid, series.values):
            lines.append(f"{format_float(x)},{format_float(v.real)},{format_float(v.imag)}")
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    if "json" in formats:
        path = directory / f"{name}.json"
        meta = {"name": name, "kind": series.kind.value, "axis": axis, "n_points": int(series.grid.size),
                "config_hash": config_hash, "metadata": to_jsonable(series.metadata)}
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]
