#!/usr/bin/env python3
"""
Imbalance Metrics

Four longtailness measures over a ClassDistribution (ratio, KL divergence to
uniform, absolute deviation from uniform, Gini coefficient) and the
cardinality-adjacent splitting of classes into threshold bands.

Larger values mean a more long-tailed distribution; a uniform distribution
scores (1, 0, 0, 0).
"""

from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .distribution import ClassDistribution
from .errors import SplitError, ValidationError

logger = logging.getLogger(__name__)


class LogBase(str, Enum):
    NATURAL = "natural"
    BASE2 = "base2"

    @classmethod
    def parse(cls, value) -> "LogBase":
        """Accept 'natural'/'nat'/'e' and 'base2'/'2'"""
        if isinstance(value, LogBase):
            return value
        text = str(value).strip().lower()
        if text in ("natural", "nat", "e", "ln"):
            return cls.NATURAL
        if text in ("base2", "2", "bits", "log2"):
            return cls.BASE2
        raise ValidationError(f"unknown log base {value!r} (use nat or 2)")


def _probabilities(dist: ClassDistribution) -> np.ndarray:
    counts = dist.cardinalities.astype(np.float64)
    return counts / counts.sum()


def imbalance_ratio(dist: ClassDistribution) -> float:
    """N_max / N_min"""
    counts = dist.cardinalities
    return float(counts.max()) / float(counts.min())


def imbalance_kl(dist: ClassDistribution, log_base=LogBase.NATURAL) -> float:
    """KL divergence from the class distribution to the uniform distribution"""
    p = _probabilities(dist)
    q = 1.0 / dist.num_classes
    value = float(np.sum(p * np.log(p / q)))
    if LogBase.parse(log_base) is LogBase.BASE2:
        value /= math.log(2.0)
    # p == q gives exact zeros; rounding elsewhere can leave -0.0 or -1e-17
    return max(value, 0.0)


def imbalance_abs(dist: ClassDistribution) -> float:
    """Sum of |1/C - N_i/N|"""
    p = _probabilities(dist)
    return float(np.sum(np.abs(1.0 / dist.num_classes - p)))


def gini(dist: ClassDistribution) -> float:
    """
    Gini coefficient over counts sorted ascending:
    sum_i (2i - C - 1) N_(i) / (C sum N_i), with i = 1..C.
    """
    counts = np.sort(dist.cardinalities.astype(np.float64))
    c = len(counts)
    ranks = 2.0 * np.arange(1, c + 1, dtype=np.float64) - c - 1
    return max(float(np.sum(ranks * counts)) / (c * counts.sum()), 0.0)


@dataclass(frozen=True)
class ImbalanceReport:
    ratio: float
    kl: float
    abs_dev: float
    gini: float
    log_base: str = LogBase.NATURAL.value

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.ratio, self.kl, self.abs_dev, self.gini)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def report(dist: ClassDistribution, log_base=LogBase.NATURAL) -> ImbalanceReport:
    base = LogBase.parse(log_base)
    return ImbalanceReport(
        ratio=imbalance_ratio(dist),
        kl=imbalance_kl(dist, base),
        abs_dev=imbalance_abs(dist),
        gini=gini(dist),
        log_base=base.value,
    )


# ==================== CARDINALITY SPLITS ====================

@dataclass(frozen=True)
class CardinalitySplit:
    """
    Disjoint class subsets S_1..S_L ordered from fewest-shot to most-shot.

    Band l (1-based) holds classes with T_{l-1} < N_c <= T_l, where T_0 = 0 and
    T_L = infinity; a count equal to a threshold belongs to the lower band.
    """

    thresholds: Tuple[int, ...]
    subsets: Tuple[Tuple[int, ...], ...]
    avg_shots: Tuple[float, ...]

    @property
    def num_subsets(self) -> int:
        return len(self.subsets)

    @property
    def names(self) -> Tuple[str, ...]:
        return subset_names(self.num_subsets)

    @property
    def class_ids(self) -> Tuple[int, ...]:
        return tuple(sorted(c for s in self.subsets for c in s))

    def subset_of(self, class_id: int) -> int:
        """0-based index of the subset holding class_id"""
        for index, members in enumerate(self.subsets):
            if class_id in members:
                return index
        raise SplitError(f"class {class_id} is not in any subset")

    def membership(self, num_classes: int) -> np.ndarray:
        """Array mapping class id -> subset index (-1 for unknown ids)"""
        table = np.full(num_classes, -1, dtype=np.int64)
        for index, members in enumerate(self.subsets):
            table[list(members)] = index
        return table

    def band_label(self, index: int) -> str:
        low = 0 if index == 0 else self.thresholds[index - 1]
        if index < len(self.thresholds):
            return f"{low} < N <= {self.thresholds[index]}"
        return f"N > {low}"

    def to_dict(self) -> Dict[str, object]:
        return {
            "thresholds": list(self.thresholds),
            "names": list(self.names),
            "subsets": [list(s) for s in self.subsets],
            "avg_shots": list(self.avg_shots),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "CardinalitySplit":
        return cls(
            thresholds=tuple(int(t) for t in data["thresholds"]),
            subsets=tuple(tuple(int(c) for c in s) for s in data["subsets"]),
            avg_shots=tuple(float(a) for a in data["avg_shots"]),
        )


def subset_names(count: int) -> Tuple[str, ...]:
    if count == 1:
        return ("whole",)
    if count == 2:
        return ("few", "many")
    if count == 3:
        return ("few", "medium", "many")
    return tuple(f"s{i}" for i in range(1, count + 1))


def split_by_thresholds(dist: ClassDistribution, thresholds: Sequence[int]) -> CardinalitySplit:
    thresholds = tuple(int(t) for t in thresholds)
    if any(t <= 0 for t in thresholds):
        raise SplitError(f"thresholds must be positive integers, got {list(thresholds)}")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise SplitError(f"thresholds must be strictly increasing, got {list(thresholds)}")

    bands: List[List[int]] = [[] for _ in range(len(thresholds) + 1)]
    shots: List[List[int]] = [[] for _ in range(len(thresholds) + 1)]
    for class_id, count in dist.counts:
        band = bisect.bisect_left(thresholds, count)
        bands[band].append(class_id)
        shots[band].append(count)

    split = CardinalitySplit(
        thresholds=thresholds,
        subsets=tuple(tuple(sorted(b)) for b in bands),
        avg_shots=tuple(float(np.mean(s)) if s else 0.0 for s in shots),
    )
    for index, members in enumerate(split.subsets):
        if not members:
            raise SplitError(f"band {index + 1} ({split.band_label(index)}) has no classes")
    return split


def quantile_thresholds(dist: ClassDistribution, quantiles: Sequence[float]) -> Tuple[int, ...]:
    """
    Thresholds placing roughly a q fraction of classes (by ascending count) at or
    below each threshold. Repeated thresholds from tied counts are collapsed.
    """
    counts = np.sort(dist.cardinalities)
    c = len(counts)
    thresholds = []
    for q in sorted(quantiles):
        if not 0.0 < q < 1.0:
            raise SplitError(f"quantile {q} outside (0, 1)")
        index = min(max(int(math.floor(q * c + 1e-9)), 1), c) - 1
        value = int(counts[index])
        if value < counts[-1] and (not thresholds or value > thresholds[-1]):
            thresholds.append(value)
    if len(thresholds) < len(quantiles):
        logger.warning("Tied cardinalities collapsed %d quantiles into %d thresholds",
                       len(quantiles), len(thresholds))
    return tuple(thresholds)


def split_by_quantiles(dist: ClassDistribution, quantiles: Sequence[float]) -> CardinalitySplit:
    return split_by_thresholds(dist, quantile_thresholds(dist, quantiles))


# ==================== COMPARISON TABLE ====================

@dataclass(frozen=True)
class ComparisonRow:
    name: str
    num_classes: int
    report: ImbalanceReport


def longtailness_comparison(dist: ClassDistribution,
                            split: Optional[CardinalitySplit],
                            log_base=LogBase.NATURAL) -> List[ComparisonRow]:
    """Entire-set row followed by one row per subset, each on that subset's counts alone"""
    rows = [ComparisonRow("entire", dist.num_classes, report(dist, log_base))]
    if split is None:
        return rows
    for name, members in zip(split.names, split.subsets):
        sub = dist.subset(members)
        rows.append(ComparisonRow(name, sub.num_classes, report(sub, log_base)))
    return rows


def comparison_to_json(rows: Sequence[ComparisonRow]) -> str:
    payload = [{"split": r.name, "classes": r.num_classes, **r.report.to_dict()} for r in rows]
    return json.dumps(payload, indent=2)


def format_comparison_table(rows: Sequence[ComparisonRow]) -> str:
    """Aligned text table: one metric per column, entire + subset rows"""
    header = f"{'Split':<10} {'C':>5} {'I_Ratio':>10} {'I_KL':>8} {'I_Abs':>8} {'I_Gini':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        r = row.report
        lines.append(f"{row.name:<10} {row.num_classes:>5} {r.ratio:>10.1f} "
                     f"{r.kl:>8.3f} {r.abs_dev:>8.3f} {r.gini:>8.3f}")
    if rows:
        lines.append(f"(I_KL log base: {rows[0].report.log_base})")
    return "\n".join(lines)
