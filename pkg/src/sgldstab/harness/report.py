"""Experiment reports and their byte-stable serialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = "t,empirical_mean,empirical_sem,analytic_bound"


def fmt_float(v: float) -> str:
    """17 significant digits; non-finite values use the JSON5 spellings."""
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def _plain(obj):
    """Convert numpy scalars and arrays into plain Python containers."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON text with keys in insertion order and fixed float format."""
    obj = _plain(obj) if _level == 0 else obj
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [inner + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(obj)


@dataclass
class Curve:
    t: np.ndarray
    mean: np.ndarray
    sem: np.ndarray
    bound: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        n = self.t.size
        self.mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (n,)).copy()
        self.sem = np.broadcast_to(np.asarray(self.sem, dtype=float), (n,)).copy()
        self.bound = np.broadcast_to(np.asarray(self.bound, dtype=float), (n,)).copy()

    def to_dict(self) -> dict:
        return {"t": self.t, "empirical_mean": self.mean, "empirical_sem": self.sem,
                "analytic_bound": self.bound}

    def to_csv(self) -> str:
        rows = [CSV_HEADER]
        for row in zip(self.t, self.mean, self.sem, self.bound):
            rows.append(",".join(fmt_float(v) for v in row))
        return "\n".join(rows) + "\n"


@dataclass
class Verdict:
    criterion: str
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    constants: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    wall_time: float = 0.0

    def add(self, criterion: str, passed: bool, **detail) -> Verdict:
        v = Verdict(criterion, bool(passed), detail)
        self.verdicts.append(v)
        return v

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def payload(self, include_wall_time: bool = True) -> dict:
        out = {
            "experiment": self.experiment,
            "passed": self.passed,
            "config": self.config,
            "constants": self.constants,
            "fits": self.fits,
            "verdicts": [{"criterion": v.criterion, "passed": v.passed, "detail": v.detail}
                         for v in self.verdicts],
            "curves": {name: c.to_dict() for name, c in self.curves.items()},
        }
        if include_wall_time:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self, include_wall_time: bool = True) -> str:
        return dumps(self.payload(include_wall_time)) + "\n"

    def write(self, out_dir) -> list[Path]:
        """Write ``report.json`` and one ``<curve>.csv`` per curve."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.json"]
        paths[0].write_text(self.to_json())
        for name, curve in self.curves.items():
            p = out / f"{name}.csv"
            p.write_text(curve.to_csv())
            paths.append(p)
        return paths

    def summary_lines(self) -> list[str]:
        return [f"{'PASS' if v.passed else 'FAIL'}  {v.criterion}" for v in self.verdicts]
