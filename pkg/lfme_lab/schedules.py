#!/usr/bin/env python3
"""
Schedules

The two adaptive weightings of student training:

- self-paced expert selection: per-expert distillation weight w_l, recomputed
  once per epoch from the student's and expert's validation accuracy;
- curriculum instance selection: per-instance cross-entropy weight v_i that
  grows from p_i * N_min / N_l at the first epoch to 1 at the last.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import ScheduleError, SplitError, ValidationError
from .neuralcore import forward, temperature_softmax

logger = logging.getLogger(__name__)


class ScheduleKind(str, Enum):
    LINEAR = "linear"
    CONVEX = "convex"
    CONCAVE = "concave"

    @classmethod
    def parse(cls, value) -> "ScheduleKind":
        if isinstance(value, ScheduleKind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ScheduleError(f"unknown schedule kind {value!r}") from None


# ==================== EXPERT WEIGHTS ====================

def expert_weight(acc_student: float, acc_expert: float, alpha: float) -> float:
    """
    1.0 while Acc_M <= alpha * Acc_E, then (Acc_E - Acc_M) / (Acc_E (1 - alpha))
    clamped to [0, 1]. alpha = 1 keeps the weight at 1 until the student passes
    the expert; an expert with zero accuracy gets weight 0.
    """
    if not 0.0 < alpha <= 1.0:
        raise ScheduleError(f"alpha must lie in (0, 1], got {alpha}")
    if acc_expert <= 0.0:
        return 0.0
    if acc_student <= alpha * acc_expert:
        return 1.0
    if alpha == 1.0:
        return 0.0
    raw = (acc_expert - acc_student) / (acc_expert * (1.0 - alpha))
    return min(max(raw, 0.0), 1.0)


@dataclass
class ExpertWeightState:
    """
    Current w_l per expert plus the per-epoch history.

    mode "self_paced" follows expert_weight; "fixed" pins every weight to
    fixed_value (1.0 for ordinary distillation, 0.0 without distillation).
    """

    expert_accuracies: List[float]
    alpha: float = 0.6
    mode: str = "self_paced"
    fixed_value: float = 1.0
    weights: List[float] = field(default_factory=list)
    history: List[List[float]] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("self_paced", "fixed"):
            raise ScheduleError(f"unknown expert weight mode {self.mode!r}")
        if not self.weights:
            start = self.fixed_value if self.mode == "fixed" else 1.0
            self.weights = [start] * len(self.expert_accuracies)

    def update(self, student_subset_accuracies: Sequence[float]) -> List[float]:
        """End-of-epoch update from the student's per-subset validation accuracy"""
        if len(student_subset_accuracies) != len(self.expert_accuracies):
            raise ScheduleError("one student accuracy per expert expected")
        if self.mode == "fixed":
            self.weights = [self.fixed_value] * len(self.expert_accuracies)
        else:
            self.weights = [expert_weight(acc_m, acc_e, self.alpha)
                            for acc_m, acc_e in zip(student_subset_accuracies, self.expert_accuracies)]
        self.history.append(list(self.weights))
        return list(self.weights)


# ==================== INSTANCE WEIGHTS ====================

def initial_instance_weight(p: Union[float, np.ndarray], avg_shot_min: float,
                            avg_shot_l: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """v^(1) = p * N_min / N_l"""
    ratio = np.asarray(avg_shot_min, dtype=np.float64) / np.asarray(avg_shot_l, dtype=np.float64)
    if np.any(ratio > 1.0 + 1e-12):
        raise ScheduleError("minimum average shot exceeds a subset's average shot")
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
        raise ScheduleError("confidence must lie in [0, 1]")
    value = p_arr * np.minimum(ratio, 1.0)
    return float(value) if np.ndim(value) == 0 else value


def progress(epoch: int, total_epochs: int) -> float:
    """Normalized progress s = (e - 1) / (E - 1); s = 1 when E = 1"""
    if total_epochs < 1:
        raise ScheduleError(f"total epochs must be >= 1, got {total_epochs}")
    if not 1 <= epoch <= total_epochs:
        raise ScheduleError(f"epoch {epoch} outside 1..{total_epochs}")
    if total_epochs == 1:
        return 1.0
    return (epoch - 1) / (total_epochs - 1)


def schedule_value(kind, v1: Union[float, np.ndarray], epoch: int,
                   total_epochs: int) -> Union[float, np.ndarray]:
    """
    Curriculum weight at epoch e:
        linear   (1 - v1) s + v1
        convex   1 - (1 - v1) cos(s pi / 2)
        concave  (1 - v1) log(1 + s) / log 2 + v1
    Exactly v1 at e = 1 and 1.0 at e = E; clamped to [0, 1].
    """
    kind = ScheduleKind.parse(kind)
    s = progress(epoch, total_epochs)
    v1_arr = np.asarray(v1, dtype=np.float64)

    if s >= 1.0:
        value = np.ones_like(v1_arr)
    elif s <= 0.0:
        value = v1_arr.copy()
    elif kind is ScheduleKind.LINEAR:
        value = (1.0 - v1_arr) * s + v1_arr
    elif kind is ScheduleKind.CONVEX:
        value = 1.0 - (1.0 - v1_arr) * math.cos(s * math.pi / 2.0)
    else:
        value = (1.0 - v1_arr) * math.log1p(s) / math.log(2.0) + v1_arr

    value = np.clip(value, 0.0, 1.0)
    return float(value) if np.ndim(value) == 0 else value


def compute_confidences(experts, split, dataset) -> np.ndarray:
    """
    p_i for every train instance (train partition order): the expert of y_i's
    subset, softmaxed at temperature 1, evaluated at y_i's position in that subset.
    """
    train = dataset.train
    if len(experts) != split.num_subsets:
        raise SplitError(f"{len(experts)} experts for {split.num_subsets} subsets")
    membership = split.membership(dataset.num_classes)
    subset_ids = membership[train.labels]
    if np.any(subset_ids < 0):
        unknown = sorted(set(train.labels[subset_ids < 0].tolist()))
        raise SplitError(f"labels {unknown} are not in any subset")

    confidences = np.zeros(len(train), dtype=np.float64)
    for index, (expert, members) in enumerate(zip(experts, split.subsets)):
        rows = np.flatnonzero(subset_ids == index)
        if len(rows) == 0:
            continue
        classes = np.array(members, dtype=np.int64)
        local = np.searchsorted(classes, train.labels[rows])
        probs = temperature_softmax(forward(expert, train.features[rows]), 1.0)
        confidences[rows] = probs[np.arange(len(rows)), local]
    return confidences


@dataclass
class InstanceWeightState:
    """
    Stored v^(1) per train instance; v^(k) is recomputed from it at every epoch.

    With enabled=False every weight is 1 (no curriculum).
    """

    initial_weights: np.ndarray
    subset_ids: np.ndarray
    kind: ScheduleKind = ScheduleKind.LINEAR
    total_epochs: int = 1
    enabled: bool = True

    def __post_init__(self):
        self.kind = ScheduleKind.parse(self.kind)
        self.initial_weights = np.asarray(self.initial_weights, dtype=np.float64)
        self.subset_ids = np.asarray(self.subset_ids, dtype=np.int64)
        if self.initial_weights.shape != self.subset_ids.shape:
            raise ValidationError("initial weights and subset ids must align")

    @classmethod
    def from_confidences(cls, confidences: np.ndarray, subset_ids: np.ndarray, avg_shots: Sequence[float],
                         kind=ScheduleKind.LINEAR, total_epochs: int = 1,
                         enabled: bool = True) -> "InstanceWeightState":
        shots = np.asarray(avg_shots, dtype=np.float64)
        subset_ids = np.asarray(subset_ids, dtype=np.int64)
        v1 = initial_instance_weight(np.asarray(confidences), float(shots.min()), shots[subset_ids])
        return cls(np.asarray(v1), subset_ids, kind, total_epochs, enabled)

    def weights_at(self, epoch: int) -> np.ndarray:
        if not self.enabled:
            progress(epoch, self.total_epochs)
            return np.ones_like(self.initial_weights)
        return np.asarray(schedule_value(self.kind, self.initial_weights, epoch, self.total_epochs))

    def subset_means(self, epoch: int, num_subsets: int) -> List[float]:
        weights = self.weights_at(epoch)
        means = []
        for index in range(num_subsets):
            mask = self.subset_ids == index
            means.append(float(weights[mask].mean()) if np.any(mask) else 0.0)
        return means


# ==================== TRAJECTORY EXPORT ====================

def trajectory_rows(epochs: Sequence[dict], subset_names: Sequence[str]) -> List[Dict[str, object]]:
    """Flatten per-epoch records into CSV rows: epoch, w_*, mean_v_*, losses"""
    rows = []
    for record in epochs:
        row: Dict[str, object] = {"epoch": record["epoch"]}
        for name, weight in zip(subset_names, record["expert_weights"]):
            row[f"w_{name}"] = weight
        for name, mean_v in zip(subset_names, record["mean_v"]):
            row[f"mean_v_{name}"] = mean_v
        row["loss_total"] = record["loss_total"]
        row["loss_ce"] = record["loss_ce"]
        for name, kd in zip(subset_names, record["loss_kd"]):
            row[f"loss_kd_{name}"] = kd
        rows.append(row)
    return rows


def write_trajectories_csv(path: Union[str, Path], epochs: Sequence[dict], subset_names: Sequence[str]):
    rows = trajectory_rows(epochs, subset_names)
    columns = ["epoch"] + [f"w_{n}" for n in subset_names] + [f"mean_v_{n}" for n in subset_names]
    columns += ["loss_total", "loss_ce"] + [f"loss_kd_{n}" for n in subset_names]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_trajectories_csv(path: Union[str, Path]) -> List[Dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as f:
        return [{k: float(v) for k, v in row.items() if v != ""} for row in csv.DictReader(f)]
