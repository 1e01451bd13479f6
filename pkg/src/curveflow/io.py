"""Curve files and run directories.

A curve file is a CSV with header ``s,x1..xn,k1..kn`` (arclength, position,
curvature vector) preceded by one comment line holding the grid data needed
to rebuild the :class:`DiscreteCurve`.  A run directory holds
``meta.json``, ``series.jsonl`` (one JSON object per recorded step, followed
by any appended diagnostics) and ``snap_<k>.csv`` per snapshot.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .geometry import CLAMPED, GHOST, DiscreteCurve

META = "meta.json"
SERIES = "series.jsonl"


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def dumps(obj, **kw) -> str:
    return json.dumps(_clean(obj), allow_nan=False, **kw)


def save_curve(curve: DiscreteCurve, path) -> None:
    """Write all nodes, ghosts included, with arclength and curvature."""
    n = curve.dim
    header = ",".join(["s"] + [f"x{i + 1}" for i in range(n)] + [f"k{i + 1}" for i in range(n)])
    data = np.column_stack([curve.arclength, curve.nodes, curve.curvature])
    grid = {"h": curve.h, "end_condition": curve.end_condition, "ghost": curve.ghost,
            "base_index": curve.base_index}
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(grid) + "\n")
        fh.write(header + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def load_curve(path) -> DiscreteCurve:
    """Read a curve file written by :func:`save_curve`.

    Files without the grid comment are read as clamped curves with the
    default ghost layers, using the mean chord as grid spacing.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"curve file not found: {path}")
    with open(path) as fh:
        first = fh.readline()
        grid = {}
        if first.startswith("#"):
            grid = json.loads(first[1:])
            header = fh.readline()
        else:
            header = first
        cols = [c.strip() for c in header.strip().split(",")]
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    xcols = [i for i, c in enumerate(cols) if c.startswith("x")]
    if len(xcols) < 2 or data.shape[1] != len(cols):
        raise ValueError(f"malformed curve file {path}")
    nodes = data[:, xcols]
    if "h" not in grid:
        grid["h"] = float(np.mean(np.linalg.norm(np.diff(nodes, axis=0), axis=1)))
    return DiscreteCurve(nodes, float(grid["h"]),
                         end_condition=grid.get("end_condition", CLAMPED),
                         ghost=int(grid.get("ghost", GHOST)),
                         base_index=grid.get("base_index"))


def trajectory_meta(traj, extra=None) -> dict:
    meta = {
        "params": traj.params.to_dict(),
        "solver": traj.solver.to_dict(),
        "termination": {"status": traj.termination.status, "T_hat": traj.termination.T_hat,
                        "message": traj.termination.message},
        "steps": traj.steps,
        "rejections": traj.rejections,
        "snapshot_times": list(traj.snapshot_times),
    }
    if extra:
        meta.update(extra)
    return meta


def write_run(traj, run_dir, extra=None) -> Path:
    """Persist a trajectory; returns the run directory."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    for old in run_dir.glob("snap_*.csv"):
        old.unlink()
    with open(run_dir / META, "w") as fh:
        fh.write(dumps(trajectory_meta(traj, extra), indent=2, sort_keys=True) + "\n")
    keys = list(traj.series)
    n = len(traj.series["t"])
    with open(run_dir / SERIES, "w") as fh:
        for i in range(n):
            fh.write(dumps({k: traj.series[k][i] for k in keys}) + "\n")
    for k, c in enumerate(traj.snapshots):
        save_curve(c, run_dir / f"snap_{k}.csv")
    return run_dir


def append_diagnostics(run_dir, name: str, report: dict) -> None:
    """Append one diagnostic record to ``series.jsonl``."""
    with open(Path(run_dir) / SERIES, "a") as fh:
        fh.write(dumps({"diagnostic": name, "report": report}, sort_keys=True) + "\n")


def load_run(run_dir) -> dict:
    """Read a run directory into ``{"meta", "series", "diagnostics", "snapshots"}``."""
    run_dir = Path(run_dir)
    if not (run_dir / META).is_file():
        raise FileNotFoundError(f"no run found in {run_dir}")
    with open(run_dir / META) as fh:
        meta = json.load(fh)
    rows, diags = [], []
    with open(run_dir / SERIES) as fh:
        for line in fh:
            rec = json.loads(line)
            (diags if "diagnostic" in rec else rows).append(rec)
    series = {}
    if rows:
        for k in rows[0]:
            series[k] = np.array([np.nan if r[k] is None else r[k] for r in rows], dtype=float)
    snaps = sorted(run_dir.glob("snap_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    return {"meta": meta, "series": series, "diagnostics": diags,
            "snapshots": [load_curve(p) for p in snaps]}


def write_json(obj, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(dumps(obj, indent=2, sort_keys=True) + "\n")
