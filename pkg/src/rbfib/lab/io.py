"""Run output: a metadata document, per-snapshot binary arrays and CSV tables.

Layout of an output directory::

    metadata.yaml          config echo and provenance
    timeseries.csv         one row per sample (step, time, energies, extras)
    snapshots/index.csv    step, time and directory of every snapshot
    snapshots/000300/*.npy grid fields and per-object positions/velocities
"""
from __future__ import annotations

import csv
import platform
from pathlib import Path

import numpy as np
import scipy
import yaml

from .config import RunConfig, dump_config

SNAPSHOT_DIR = "snapshots"
INDEX_FILE = "index.csv"
SERIES_FILE = "timeseries.csv"
METADATA_FILE = "metadata.yaml"


def provenance() -> dict:
    from .. import __version__
    return {"package": "rbfib", "version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


class RunWriter:
    """Writes one run into ``out_dir``; existing snapshots are kept for restarts."""

    def __init__(self, out_dir, config: RunConfig, extra_metadata: dict | None = None):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / SNAPSHOT_DIR).mkdir(exist_ok=True)
        self.config = config
        dump_config(config, self.root / "config.yaml")
        meta = {"config": config.to_dict(), "provenance": provenance()}
        if extra_metadata:
            meta["run"] = _plain(extra_metadata)
        with open(self.root / METADATA_FILE, "w") as fh:
            yaml.safe_dump(meta, fh, sort_keys=True)
        self._series_fields = None

    def update_metadata(self, **items) -> None:
        path = self.root / METADATA_FILE
        with open(path) as fh:
            meta = yaml.safe_load(fh)
        meta.setdefault("run", {}).update(_plain(items))
        with open(path, "w") as fh:
            yaml.safe_dump(meta, fh, sort_keys=True)

    def write_snapshot(self, step: int, time: float, arrays: dict) -> Path:
        d = self.root / SNAPSHOT_DIR / f"{step:08d}"
        d.mkdir(exist_ok=True)
        for name, arr in arrays.items():
            np.save(d / f"{name}.npy", np.asarray(arr))
        index = self.root / SNAPSHOT_DIR / INDEX_FILE
        new = not index.exists()
        with open(index, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["step", "time", "directory"])
            w.writerow([step, repr(float(time)), d.name])
        return d

    def write_record(self, record) -> None:
        row = {"step": record.step, "time": record.time, "kinetic": record.kinetic,
               "elastic": record.elastic, "total": record.total}
        for k, v in record.extra.items():
            if np.ndim(v) == 0:
                row[k] = v
        path = self.root / SERIES_FILE
        if self._series_fields is None:
            if path.exists():
                with open(path, newline="") as fh:
                    self._series_fields = next(csv.reader(fh))
            else:
                self._series_fields = list(row)
                with open(path, "w", newline="") as fh:
                    csv.writer(fh).writerow(self._series_fields)
        with open(path, "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(row.get(k, "")) for k in self._series_fields])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def _plain(obj):
    """Convert numpy scalars/arrays inside nested containers to plain Python."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def read_index(out_dir) -> list[dict]:
    path = Path(out_dir) / SNAPSHOT_DIR / INDEX_FILE
    with open(path, newline="") as fh:
        return [{"step": int(r["step"]), "time": float(r["time"]), "directory": r["directory"]}
                for r in csv.DictReader(fh)]


def read_series(out_dir) -> dict:
    """Columns of the scalar time series as float arrays."""
    with open(Path(out_dir) / SERIES_FILE, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    out = {}
    for k in rows[0]:
        try:
            out[k] = np.array([float(r[k]) for r in rows])
        except ValueError:
            out[k] = [r[k] for r in rows]
    return out


def load_snapshot(out_dir, step: int | None = None) -> dict:
    """Arrays of the snapshot at ``step`` (default: the latest)."""
    index = read_index(out_dir)
    if not index:
        raise FileNotFoundError(f"no snapshots in {out_dir}")
    entry = index[-1] if step is None else next(e for e in index if e["step"] == step)
    d = Path(out_dir) / SNAPSHOT_DIR / entry["directory"]
    return {p.stem: np.load(p) for p in sorted(d.glob("*.npy"))}
