"""Deterministic CSV and JSON output.

Floats are written with ``repr`` (shortest round-trip form); JSON keys are
sorted.  Every file carries the SHA-256 of the canonical resolved config.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .grids import DensityGrid


def to_plain(obj):
    """Convert numpy containers and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def config_hash(config: dict) -> str:
    blob = json.dumps(to_plain(config), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_json(path, payload: dict, config: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(payload)
    doc["config"] = config
    doc["config_sha256"] = config_hash(config)
    path.write_text(canonical_json(doc))
    return path


def _fmt(x) -> str:
    return repr(float(x))


def write_density_csv(path, grid: DensityGrid, digest: str) -> Path:
    """``r,rho`` rows for radial grids, ``x1,x2,rho`` rows for Cartesian grids."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_sha256={digest}"]
    if grid.geometry == "radial":
        lines.append("r,rho")
        lines += [f"{_fmt(r)},{_fmt(v)}" for r, v in zip(grid.nodes, grid.values)]
    else:
        lines.append("x1,x2,rho")
        pts = grid.nodes
        ny, nx = grid.shape
        for j in range(ny):
            for i in range(nx):
                lines.append(f"{_fmt(pts[j, i, 0])},{_fmt(pts[j, i, 1])},{_fmt(grid.values[j, i])}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_density_csv(path) -> tuple[list[str], np.ndarray]:
    """Column names and data of a file written by :func:`write_density_csv`."""
    names = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        if names is None:
            names = line.split(",")
            continue
        rows.append([float(x) for x in line.split(",")])
    return names or [], np.array(rows)


def write_points_csv(path, columns: list[str], data, digest: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_sha256={digest}", ",".join(columns)]
    lines += [",".join(_fmt(x) for x in row) for row in np.atleast_2d(data)]
    path.write_text("\n".join(lines) + "\n")
    return path
