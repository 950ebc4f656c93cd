"""Deterministic JSON reports and per-field CSV files."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

FLOAT_DIGITS = 12


def clean(obj, digits=FLOAT_DIGITS):
    """Recursively convert numpy types and round floats to ``digits`` significant digits."""
    if isinstance(obj, dict):
        return {str(k): clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(f"{x:.{digits}g}")
    if isinstance(obj, complex):
        return [clean(obj.real, digits), clean(obj.imag, digits)]
    return obj


def dumps(obj):
    return json.dumps(clean(obj), indent=2) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_field_csv(path, grid, values):
    """One row per interior node: ``u,v,value``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([grid.u, grid.v, np.asarray(values, dtype=float)])
    np.savetxt(path, data, delimiter=",", header="u,v,value", comments="", fmt="%.17g")
    return path


def read_field_csv(path, grid):
    """Inverse of ``write_field_csv``; node coordinates must match the grid."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (grid.n_nodes, 3):
        raise ValueError(f"{path}: expected {grid.n_nodes} rows of u,v,value, got shape {data.shape}")
    if not (np.allclose(data[:, 0], grid.u) and np.allclose(data[:, 1], grid.v)):
        raise ValueError(f"{path}: node coordinates do not match the M={grid.M} grid")
    return data[:, 2]


def write_grassmann_csv(out_dir, grid, G, prefix="g"):
    """One file per component, named ``{prefix}_sigma_theta.csv`` with 1-based pair indices."""
    from .geometry import n_from_pairs, pairs

    n = n_from_pairs(len(G))
    paths = []
    for m, (s, t) in enumerate(pairs(n)):
        paths.append(write_field_csv(Path(out_dir) / f"{prefix}_{s + 1}_{t + 1}.csv", grid, G[m]))
    return paths


def read_grassmann_csv(in_dir, grid, n, prefix="s"):
    from .geometry import pairs

    return np.stack([read_field_csv(Path(in_dir) / f"{prefix}_{s + 1}_{t + 1}.csv", grid)
                     for s, t in pairs(n)])
