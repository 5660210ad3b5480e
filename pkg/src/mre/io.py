"""Scenario CSV files, YAML run configurations and JSON run reports.

Scenario CSV: header ``x1,...,xn`` with an optional trailing ``prob`` column;
a file without it gets uniform probabilities. Values are decimals.

Configurations have the sections ``base``, ``views``, ``numerics`` and
``output``; unknown keys are rejected. Any number may be written as a
percentage string (``"10%"``), and any matrix may be given as a path to a
headerless CSV file.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .core import WeightedScenarios
from .errors import ValidationError

__all__ = [
    "SCHEMA_VERSION",
    "RunReport",
    "read_scenarios_csv",
    "write_scenarios_csv",
    "write_matrix_csv",
    "read_config",
    "parse_number",
    "write_report",
    "read_report",
]

SCHEMA_VERSION = 1

_SECTIONS = {
    "base": {"mean", "cov", "std", "corr", "scenarios", "theta"},
    "views": {
        "gamma_mu", "mu_info", "gamma_sigma", "sigma2_info", "pin_mean",
        "linear", "quadratic",
    },
    "numerics": {
        "n_scenarios", "delta", "max_outer", "seed", "pool_tol", "pool_max_iter",
        "hmc", "hull_check",
    },
    "output": {"dir", "format"},
}
_HMC_KEYS = {
    "step_size", "n_leapfrog", "n_samples", "n_burnin", "thin", "target_accept",
    "adapt", "n_chains", "jitter",
}


# ---------------------------------------------------------------------------
# Scenario CSV
# ---------------------------------------------------------------------------


def read_scenarios_csv(path) -> WeightedScenarios:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        has_prob = bool(header) and header[-1].lower() == "prob"
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: line {lineno} has {len(row)} columns, header has {len(header)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ValidationError(f"{path}: line {lineno} has a non-numeric value") from None
    if not rows:
        raise ValidationError(f"{path}: no scenario rows")
    data = np.array(rows)
    if has_prob:
        x, p = data[:, :-1], data[:, -1]
        s = p.sum()
        if abs(s - 1.0) > 1e-9:
            raise ValidationError(f"{path}: probabilities sum to {s:.12g}")
        # absorbs the rounding left by decimal text
        p = p / s
        return WeightedScenarios(x, p)
    return WeightedScenarios.uniform(data)


def write_scenarios_csv(path, ws: WeightedScenarios, with_probs=True):
    path = Path(path)
    header = [f"x{i + 1}" for i in range(ws.dim)] + (["prob"] if with_probs else [])
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, p in zip(ws.scenarios, ws.probs):
            vals = list(x) + ([p] if with_probs else [])
            w.writerow([repr(float(v)) for v in vals])
    return path


def write_matrix_csv(path, matrix, header=None):
    path = Path(path)
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in m:
            w.writerow([repr(float(v)) for v in row])
    return path


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def parse_number(value, where="value") -> float:
    """Convert numbers and ``"12.5%"`` strings to floats."""
    if isinstance(value, bool):
        raise ValidationError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        s = value.strip()
        try:
            if s.endswith("%"):
                return float(s[:-1]) / 100.0
            return float(s)
        except ValueError:
            pass
    raise ValidationError(f"{where}: cannot parse {value!r} as a number")


def _parse_array(value, where, root: Path):
    if isinstance(value, str) and not value.strip().endswith("%") and value.strip().lower().endswith(".csv"):
        p = Path(value)
        p = p if p.is_absolute() else root / p
        try:
            return np.atleast_2d(np.loadtxt(p, delimiter=",", ndmin=2))
        except (OSError, ValueError) as exc:
            raise ValidationError(f"{where}: cannot read {p}: {exc}") from None
    if isinstance(value, list):
        return np.array([_parse_array(v, f"{where}[{i}]", root) for i, v in enumerate(value)], dtype=float)
    return parse_number(value, where)


def read_config(path) -> dict:
    """Load and validate a run configuration; arrays come back as numpy."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: malformed configuration: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ValidationError(f"{path}: unknown sections {sorted(unknown)}")
    root = path.parent
    cfg: dict[str, Any] = {}
    for section, allowed in _SECTIONS.items():
        body = raw.get(section) or {}
        if not isinstance(body, dict):
            raise ValidationError(f"{path}: section '{section}' must be a mapping")
        extra = set(body) - allowed
        if extra:
            raise ValidationError(f"{path}: unknown keys in '{section}': {sorted(extra)}")
        cfg[section] = dict(body)

    base = cfg["base"]
    for key in ("mean", "cov", "std", "corr", "theta"):
        if key in base:
            base[key] = _parse_array(base[key], f"base.{key}", root)
    if "scenarios" in base:
        p = Path(base["scenarios"])
        base["scenarios"] = str(p if p.is_absolute() else root / p)

    views = cfg["views"]
    for key in ("gamma_mu", "mu_info", "gamma_sigma", "sigma2_info", "pin_mean"):
        if key in views:
            views[key] = _parse_array(views[key], f"views.{key}", root)
    if "linear" in views:
        lin = views["linear"]
        if not isinstance(lin, dict) or set(lin) != {"matrix", "targets"}:
            raise ValidationError("views.linear needs exactly 'matrix' and 'targets'")
        views["linear"] = {
            "matrix": np.atleast_2d(_parse_array(lin["matrix"], "views.linear.matrix", root)),
            "targets": np.atleast_1d(_parse_array(lin["targets"], "views.linear.targets", root)),
        }
    if "quadratic" in views:
        quad = []
        for i, q in enumerate(views["quadratic"] or []):
            if not isinstance(q, dict) or set(q) != {"i", "j", "target"}:
                raise ValidationError(f"views.quadratic[{i}] needs exactly 'i', 'j' and 'target'")
            quad.append((int(q["i"]), int(q["j"]), parse_number(q["target"], f"views.quadratic[{i}].target")))
        views["quadratic"] = quad

    num = cfg["numerics"]
    hmc = num.get("hmc") or {}
    if not isinstance(hmc, dict):
        raise ValidationError("numerics.hmc must be a mapping")
    extra = set(hmc) - _HMC_KEYS
    if extra:
        raise ValidationError(f"unknown keys in 'numerics.hmc': {sorted(extra)}")
    num["hmc"] = dict(hmc)

    out = cfg["output"]
    if "format" in out and out["format"] not in ("json", "csv"):
        raise ValidationError("output.format must be 'json' or 'csv'")
    return cfg


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


@dataclass
class RunReport:
    """Everything needed to audit or rerun one CLI invocation."""

    mode: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    seed: Optional[int] = None
    artifacts: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    created: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))

    MODES = ("analytic", "pool", "iterative", "sample", "case-study")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValidationError(f"unknown report mode {self.mode!r}")

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "schema_version": self.schema_version,
                "mode": self.mode,
                "created": self.created,
                "seed": self.seed,
                "inputs": self.inputs,
                "outputs": self.outputs,
                "timing": self.timing,
                "artifacts": self.artifacts,
            }
        )

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported report schema version {d.get('schema_version')!r}")
        return cls(
            mode=d["mode"],
            inputs=d.get("inputs", {}),
            outputs=d.get("outputs", {}),
            timing=d.get("timing", {}),
            seed=d.get("seed"),
            artifacts=list(d.get("artifacts", [])),
            schema_version=d["schema_version"],
            created=d.get("created", ""),
        )


def write_report(path, report: RunReport):
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_report(path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
