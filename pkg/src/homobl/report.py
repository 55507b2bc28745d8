"""Artifact writers: canonical JSON, delimited CSV, run manifests.

All writers are deterministic for a fixed config and seed: keys are sorted,
floats use repr round-tripping, rows end with LF.  The manifest is the one
artifact allowed to vary between runs (it carries timings); determinism
checks therefore compare everything except ``manifest.json``.
"""

from __future__ import annotations

import json
import platform
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__


def jsonable(obj):
    """Recursively convert numpy/dataclass values into JSON-native ones."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n")
    return path


def write_csv(path, header, rows):
    """Comma separator, '.' decimal point, LF line endings, repr floats."""
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if v is None:
                cells.append("")
            elif isinstance(v, (float, np.floating)):
                cells.append(repr(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def grid_field_csv(path, coords, fields):
    """Node table: coordinates then one column per named field."""
    names = list(fields)
    header = ["x1", "x2"] + names
    flat = coords.reshape(-1, 2)
    cols = [np.asarray(fields[n]).reshape(len(flat), -1) for n in names]
    rows = []
    for i in range(len(flat)):
        row = [flat[i, 0], flat[i, 1]]
        for c in cols:
            row.extend(c[i])
        rows.append(row)
    return write_csv(path, header, rows)


class RunManifest:
    """Written before any other artifact, finalized at the end of the run."""

    def __init__(self, outdir, subcommand, config_hash, seed):
        self.path = Path(outdir) / "manifest.json"
        self.data = {
            "subcommand": subcommand,
            "config_hash": config_hash,
            "seed": seed,
            "versions": {
                "homobl": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "status": "running",
            "timings": {},
            "artifacts": [],
            "failures": [],
        }
        self.write()

    def write(self):
        write_json(self.path, self.data)

    def add_artifact(self, path):
        rel = str(Path(path).name)
        if rel not in self.data["artifacts"]:
            self.data["artifacts"].append(rel)

    def add_timing(self, stage, seconds):
        self.data["timings"][stage] = seconds

    def add_failure(self, marker):
        self.data["failures"].append(jsonable(marker))

    def finalize(self, ok=True):
        self.data["status"] = "ok" if ok and not self.data["failures"] else "failed"
        self.write()
        return self.data["status"] == "ok"
