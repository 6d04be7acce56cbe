#!/usr/bin/env python3
"""
Report System

Renders the accuracy tables of one or more run directories: one row per
(run, arm) with per-subset and overall test accuracy, optional deltas against
a baseline row, and a summary of the lfme weight trajectories.
"""

import csv
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from ..errors import EvaluationError, MissingArtifactError
from ..schedules import read_trajectories_csv
from ..shared_helpers import read_json
from .experiment_system import MAIN_ARM, REPORT_NAME

logger = logging.getLogger(__name__)

DEFAULT_BASELINES = ("plain_balanced", "plain_instance")


def load_run_report(run_dir: Union[str, Path]) -> Dict[str, Any]:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise MissingArtifactError(f"run directory not found: {run_dir}")
    path = run_dir / REPORT_NAME
    if not path.exists():
        raise MissingArtifactError(f"no {REPORT_NAME} in {run_dir}; run the pipeline first")
    try:
        report = read_json(path)
    except ValueError as e:
        raise MissingArtifactError(f"{path} is not valid JSON: {e}") from None
    if not isinstance(report, dict) or "table" not in report or "split" not in report:
        raise MissingArtifactError(f"{path} is not an experiment report")
    return report


class ReportSystem:
    """Accuracy rows across runs, with deltas against a chosen baseline row."""

    def __init__(self, run_dir: Union[str, Path], compare: Sequence[Union[str, Path]] = (),
                 baseline: Optional[str] = None):
        self.run_dirs = [Path(run_dir)] + [Path(d) for d in compare]
        self.reports = [load_run_report(d) for d in self.run_dirs]
        self.baseline = baseline
        self.show_deltas = bool(compare) or baseline is not None
        names = self.reports[0]["split"]["names"]
        for run_dir, report in zip(self.run_dirs[1:], self.reports[1:]):
            if report["split"]["names"] != names:
                logger.warning("%s uses subsets %s, %s uses %s", run_dir, report["split"]["names"],
                               self.run_dirs[0], names)
        self.subset_names = list(names)

    def rows(self) -> List[Dict[str, Any]]:
        rows = []
        for run_dir, report in zip(self.run_dirs, self.reports):
            for entry in report["table"]:
                row = {"run": run_dir.name, "arm": entry["arm"], "label": entry["label"], "all": entry["all"]}
                for name in self.subset_names:
                    row[name] = entry.get(name)
                rows.append(row)
        if self.show_deltas and rows:
            base = self._baseline_row(rows)
            for row in rows:
                for key in self.subset_names + ["all"]:
                    value, ref = row.get(key), base.get(key)
                    row[f"d_{key}"] = None if value is None or ref is None else value - ref
        return rows

    def _baseline_row(self, rows: List[Dict[str, Any]]) -> Dict[str, Any]:
        primary = [r for r in rows if r["run"] == self.run_dirs[0].name]
        if self.baseline is not None:
            for row in primary:
                if row["arm"] == self.baseline:
                    return row
            raise EvaluationError(f"baseline arm {self.baseline!r} not in {self.run_dirs[0]}")
        for name in DEFAULT_BASELINES:
            for row in primary:
                if row["arm"] == name:
                    return row
        return rows[0]

    def format_table(self, rows: Optional[List[Dict[str, Any]]] = None) -> str:
        rows = self.rows() if rows is None else rows
        columns = self.subset_names + ["all"]
        header = f"{'Run':<16} {'Arm':<20}" + "".join(f"{c.title():>9}" for c in columns)
        if self.show_deltas:
            header += "".join(f"{'d' + c.title():>10}" for c in columns)
        lines = [header, "-" * len(header)]
        for row in rows:
            line = f"{row['run'][:16]:<16} {row['label'][:20]:<20}"
            line += "".join(_percent(row.get(c), 9) for c in columns)
            if self.show_deltas:
                line += "".join(_signed(row.get(f"d_{c}"), 10) for c in columns)
            lines.append(line)
        return "\n".join(lines)

    def write_csv(self, path: Union[str, Path], rows: Optional[List[Dict[str, Any]]] = None):
        rows = self.rows() if rows is None else rows
        columns = ["run", "arm", "label"] + self.subset_names + ["all"]
        if self.show_deltas:
            columns += [f"d_{c}" for c in self.subset_names + ["all"]]
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(rows)

    def trajectory_summaries(self) -> List[str]:
        """First and last epoch w and mean v per subset for each run's lfme arm"""
        lines = []
        for run_dir in self.run_dirs:
            path = run_dir / "trajectories.csv"
            if not path.exists():
                continue
            records = read_trajectories_csv(path)
            if not records:
                continue
            first, last = records[0], records[-1]
            parts = []
            for name in self.subset_names:
                w_key, v_key = f"w_{name}", f"mean_v_{name}"
                if w_key in last:
                    parts.append(f"w_{name} {first[w_key]:.2f}->{last[w_key]:.2f}")
                if v_key in last:
                    parts.append(f"v_{name} {first[v_key]:.2f}->{last[v_key]:.2f}")
            lines.append(f"{run_dir.name} ({MAIN_ARM}, {len(records)} epochs): " + ", ".join(parts))
        return lines


def _percent(value: Optional[float], width: int) -> str:
    return f"{'-':>{width}}" if value is None else f"{100 * value:>{width}.2f}"


def _signed(value: Optional[float], width: int) -> str:
    return f"{'-':>{width}}" if value is None else f"{100 * value:>+{width}.2f}"
