"""Run directories: runs/<hash>/ with config.json, CSV tables, report.json and MANIFEST."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import shutil
from pathlib import Path

import numpy as np

from . import __version__
from .config import canonical
from .fem import fmt


def config_hash(cfg) -> str:
    text = canonical(cfg) + f"version={__version__}\n"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


def jsonable(obj):
    """numpy scalars and arrays to plain JSON; non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


class RunDir:
    """Single-writer handle on one run directory.

    Artifacts go to a hidden staging directory that ``finish`` moves into
    place, so a failed run never leaves a half-written ``runs/<hash>/``.
    """

    def __init__(self, base, cfg):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.final = Path(base) / self.hash
        self.path = Path(base) / f".{self.hash}.partial"
        self.discard()
        self.path.mkdir(parents=True)
        self.files = []
        self.write_text("config.json", canonical(cfg))

    def _track(self, name):
        if name not in self.files:
            self.files.append(name)
        return self.path / name

    def write_text(self, name, text):
        path = self._track(name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return path

    def write_csv(self, name, columns, rows):
        """RFC-4180 table; floats at 17 significant digits, blanks for missing values."""
        path = self._track(name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(columns)
            for row in rows:
                if isinstance(row, dict):
                    row = [row.get(c) for c in columns]
                w.writerow([_cell(v) for v in row])
        return path

    def write_vector(self, name, x):
        return self.write_csv(name, ["index", "value"], list(enumerate(np.asarray(x, dtype=float))))

    def write_fn(self, name, u):
        path = self._track(name)
        u.to_csv(path)
        return path

    def write_json(self, name, obj):
        return self.write_text(name, json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")

    def add_file(self, name):
        return self._track(name)

    def finish(self, report, wall_clock):
        """report.json carries the run record; MANIFEST lists every artifact with its digest."""
        report = dict(report)
        report["run"] = {
            "config_hash": self.hash,
            "version": __version__,
            "wall_clock_seconds": round(float(wall_clock), 3),
            "files": sorted(self.files + ["report.json", "MANIFEST"]),
        }
        self.write_json("report.json", report)
        lines = []
        for name in sorted(self.files):
            digest = hashlib.sha256((self.path / name).read_bytes()).hexdigest()
            lines.append(f"{digest}  {name}")
        with open(self.path / "MANIFEST", "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
        if self.final.exists():
            shutil.rmtree(self.final)
        self.path.rename(self.final)
        self.path = self.final
        return report

    def discard(self):
        if self.path.exists():
            shutil.rmtree(self.path)


def read_vector(path):
    with open(path, newline="") as fh:
        return np.array([float(r["value"]) for r in csv.DictReader(fh)])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def list_runs(base):
    base = Path(base)
    if not base.exists():
        return []
    return sorted(p for p in base.iterdir()
                  if not p.name.startswith(".") and (p / "config.json").exists())

