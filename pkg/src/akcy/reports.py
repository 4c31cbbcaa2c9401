"""Run reports (JSON) and convergence logs (CSV).

A report is emitted even when a stage fails; the failing stage is named
so batch drivers can triage without parsing tracebacks.  CSV content is
deterministic for a fixed config and seed (no wall-clock in the log).
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS

REPORT_SCHEMA = {
    "type": "object",
    "required": ["command", "passed", "failing_stage", "config", "criteria",
                 "final_residuals", "artifacts", "timings"],
    "properties": {
        "command": {"type": "string"},
        "passed": {"type": "boolean"},
        "failing_stage": {"type": ["string", "null"]},
        "config": {"type": "object"},
        "criteria": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "passed"],
                "properties": {
                    "name": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "value": {"type": ["number", "string", "null"]},
                    "threshold": {"type": ["number", "string", "null"]},
                },
            },
        },
        "final_residuals": {"type": "object"},
        "artifacts": {"type": "array", "items": {"type": "string"}},
        "timings": {"type": "object"},
    },
}


def _tolist(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, dict):
        return {k: _tolist(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_tolist(v) for v in x]
    if dataclasses.is_dataclass(x):
        return _tolist(dataclasses.asdict(x))
    return x


@dataclass
class RunReport:
    command: str
    config: dict
    passed: bool = True
    failing_stage: str | None = None
    criteria: list = field(default_factory=list)
    final_residuals: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def add_criterion(self, name: str, passed: bool, value=None, threshold=None):
        self.criteria.append({
            "name": name, "passed": bool(passed),
            "value": _tolist(value), "threshold": _tolist(threshold)})
        if not passed and self.passed:
            self.passed = False
            self.failing_stage = self.failing_stage or name

    def fail(self, stage: str, message: str):
        self.passed = False
        self.failing_stage = stage
        self.criteria.append({"name": stage, "passed": False, "value": message,
                              "threshold": None})

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "passed": self.passed,
            "failing_stage": self.failing_stage,
            "config": _tolist(self.config),
            "criteria": self.criteria,
            "final_residuals": _tolist(self.final_residuals),
            "artifacts": list(self.artifacts),
            "timings": _tolist(self.timings),
        }

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def write_convergence_csv(path, rows: list) -> Path:
    """rows: list of per-step string lists matching CSV_COLUMNS."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
    return path
