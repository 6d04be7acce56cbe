#!/usr/bin/env python3
"""
Distribution

Long-tailed class distributions and labelled datasets: synthetic generation with
exponential or Pareto cardinality profiles, class-count manifests, and the
versioned text dataset format.

Dataset file format (version 1)::

    lfme-dataset/1 dim=<d> classes=<C> records=<n>
    <instance_id>,<partition>,<label>,<f_0>,...,<f_{d-1}>
    ...

Partitions are ``train``, ``val`` or ``test``. Features are written with
``repr(float)`` so that every 64-bit value round-trips exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DatasetFormatError, ManifestParseError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

DATASET_FORMAT = "lfme-dataset/1"
MANIFEST_HEADER = "class_id,count"

PathLike = Union[str, Path]


class Partition(str, Enum):
    """Dataset partition tag"""
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Profile(str, Enum):
    """Cardinality profile of a generated dataset"""
    EXPONENTIAL = "exponential"
    PARETO = "pareto"

    @classmethod
    def parse(cls, value) -> "Profile":
        if isinstance(value, Profile):
            return value
        text = str(value).strip().lower()
        aliases = {"exp": cls.EXPONENTIAL, "power": cls.PARETO, "powerlaw": cls.PARETO}
        if text in aliases:
            return aliases[text]
        try:
            return cls(text)
        except ValueError:
            raise ValidationError(f"unknown profile {value!r} (use exponential or pareto)") from None


# ==================== CLASS DISTRIBUTION ====================

@dataclass(frozen=True)
class ClassDistribution:
    """Per-class sample counts, ordered as given."""

    counts: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(cid), int(n)) for cid, n in self.counts)
        object.__setattr__(self, "counts", pairs)
        if not pairs:
            raise ValidationError("class distribution needs at least one class")
        seen = set()
        for class_id, count in pairs:
            if count < 1:
                raise ValidationError(f"class {class_id} has non-positive count {count}")
            if class_id in seen:
                raise ValidationError(f"duplicate class_id {class_id}")
            seen.add(class_id)

    @classmethod
    def from_counts(cls, counts: Iterable[int]) -> "ClassDistribution":
        """Build a distribution with class ids 0..C-1"""
        return cls(tuple(enumerate(int(n) for n in counts)))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> "ClassDistribution":
        return cls(tuple(mapping.items()))

    @property
    def class_ids(self) -> Tuple[int, ...]:
        return tuple(cid for cid, _ in self.counts)

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([n for _, n in self.counts], dtype=np.int64)

    @property
    def total(self) -> int:
        """N, the total sample count"""
        return int(sum(n for _, n in self.counts))

    @property
    def num_classes(self) -> int:
        """C, the number of classes"""
        return len(self.counts)

    def count_of(self, class_id: int) -> int:
        for cid, n in self.counts:
            if cid == class_id:
                return n
        raise KeyError(class_id)

    def subset(self, class_ids: Iterable[int]) -> "ClassDistribution":
        """Distribution restricted to the given classes, keeping this ordering"""
        wanted = set(int(c) for c in class_ids)
        return ClassDistribution(tuple(p for p in self.counts if p[0] in wanted))

    def as_dict(self) -> Dict[int, int]:
        return dict(self.counts)


# ==================== DATASET ====================

@dataclass(frozen=True)
class PartitionView:
    """Read-only arrays of one partition, in file order."""

    instance_ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.instance_ids.shape[0])

    def positions_of(self, instance_ids: np.ndarray) -> np.ndarray:
        """Map instance ids to row positions in this view"""
        if len(self) == 0:
            raise ValidationError("partition is empty")
        instance_ids = np.asarray(instance_ids, dtype=np.int64)
        order = np.argsort(self.instance_ids, kind="stable")
        sorted_ids = self.instance_ids[order]
        idx = np.clip(np.searchsorted(sorted_ids, instance_ids), 0, len(sorted_ids) - 1)
        if not np.array_equal(sorted_ids[idx], instance_ids):
            raise ValidationError("instance ids not present in partition")
        return order[idx]


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class Dataset:
    """
    Immutable labelled instances with a partition tag per instance.

    Labels are class ids in ``0..num_classes-1``. The associated
    ClassDistribution is the train partition's per-class count.
    """

    def __init__(self,
                 instance_ids: Sequence[int],
                 partitions: Sequence[str],
                 labels: Sequence[int],
                 features: np.ndarray,
                 num_classes: Optional[int] = None):
        self.instance_ids = _frozen(instance_ids, np.int64)
        self.partitions = _frozen([Partition(p).value for p in partitions], "<U5")
        self.labels = _frozen(labels, np.int64)
        self.features = _frozen(features, np.float64)

        n = self.instance_ids.shape[0]
        if self.features.ndim != 2:
            raise ShapeError("features must be a 2-d array (instances x dim)")
        if self.features.shape[1] < 1:
            raise ShapeError("feature dimension must be at least 1")
        if not (self.partitions.shape[0] == self.labels.shape[0] == self.features.shape[0] == n):
            raise ShapeError("instance_ids, partitions, labels and features disagree in length")
        if len(np.unique(self.instance_ids)) != n:
            raise ValidationError("instance ids are not unique")
        if n and self.labels.min() < 0:
            raise ValidationError("labels must be non-negative")

        if num_classes is None:
            num_classes = int(self.labels.max()) + 1 if n else 0
        self.num_classes = int(num_classes)
        if n and self.labels.max() >= self.num_classes:
            raise ValidationError(f"label {int(self.labels.max())} outside 0..{self.num_classes - 1}")

        train_labels = self.labels[self.partitions == Partition.TRAIN.value]
        present, counts = np.unique(train_labels, return_counts=True)
        if len(present) == 0:
            raise ValidationError("dataset has an empty train partition")
        missing = np.setdiff1d(np.unique(self.labels), present)
        if len(missing):
            raise ValidationError(f"labels {missing.tolist()} have no train instances")
        self._distribution = ClassDistribution(tuple(zip(present.tolist(), counts.tolist())))
        self._views: Dict[str, PartitionView] = {}

    # ---- views ----

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def distribution(self) -> ClassDistribution:
        return self._distribution

    def partition(self, name: Union[str, Partition]) -> PartitionView:
        key = Partition(name).value
        if key not in self._views:
            mask = self.partitions == key
            self._views[key] = PartitionView(
                instance_ids=_frozen(self.instance_ids[mask], np.int64),
                features=_frozen(self.features[mask], np.float64),
                labels=_frozen(self.labels[mask], np.int64),
            )
        return self._views[key]

    @property
    def train(self) -> PartitionView:
        return self.partition(Partition.TRAIN)

    @property
    def val(self) -> PartitionView:
        return self.partition(Partition.VAL)

    @property
    def test(self) -> PartitionView:
        return self.partition(Partition.TEST)

    def __len__(self) -> int:
        return int(self.instance_ids.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and np.array_equal(self.instance_ids, other.instance_ids)
                and np.array_equal(self.partitions, other.partitions)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.features, other.features))

    __hash__ = None

    def restrict(self, class_ids: Iterable[int]) -> "Dataset":
        """
        Sub-dataset over the given classes with labels remapped to 0..k-1
        in ascending class id order (the expert label space).
        """
        classes = np.array(sorted(set(int(c) for c in class_ids)), dtype=np.int64)
        if len(classes) == 0:
            raise ValidationError("cannot restrict a dataset to an empty class set")
        mask = np.isin(self.labels, classes)
        remapped = np.searchsorted(classes, self.labels[mask])
        return Dataset(self.instance_ids[mask], self.partitions[mask], remapped,
                       self.features[mask], num_classes=len(classes))


# ==================== GENERATION ====================

@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a synthetic long-tailed dataset."""

    num_classes: int = 30
    max_cardinality: int = 500
    min_cardinality: int = 5
    profile: str = Profile.EXPONENTIAL.value
    power: float = 6.0
    feature_dim: int = 16
    class_separation: float = 2.5
    seed: int = 0
    val_per_class: int = 20
    test_per_class: int = 20

    @classmethod
    def from_imbalance(cls, imbalance_ratio: float, max_cardinality: int = 500, **kwargs) -> "GeneratorSpec":
        """Exponential profile with n_min = n_max / imbalance_ratio (rounded, at least 1)"""
        if imbalance_ratio < 1:
            raise ValidationError("imbalance ratio must be at least 1")
        min_cardinality = max(1, int(np.floor(max_cardinality / imbalance_ratio + 0.5)))
        kwargs.setdefault("profile", Profile.EXPONENTIAL.value)
        return cls(max_cardinality=max_cardinality, min_cardinality=min_cardinality, **kwargs)

    @property
    def imbalance_ratio(self) -> float:
        return self.max_cardinality / self.min_cardinality

    def validate(self):
        if self.feature_dim < 1:
            raise ValidationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.min_cardinality < 1:
            raise ValidationError(f"min_cardinality must be >= 1, got {self.min_cardinality}")
        if self.min_cardinality > self.max_cardinality:
            raise ValidationError(
                f"min_cardinality {self.min_cardinality} exceeds max_cardinality {self.max_cardinality}")
        if Profile.parse(self.profile) is Profile.PARETO and self.power <= 0:
            raise ValidationError(f"pareto power must be positive, got {self.power}")
        if self.val_per_class < 1 or self.test_per_class < 1:
            raise ValidationError("val_per_class and test_per_class must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")


def class_cardinalities(spec: GeneratorSpec) -> np.ndarray:
    """
    Train count per class index, non-increasing and clipped to [n_min, n_max].

    Exponential: geometric interpolation n_max * r^(i/(C-1)), r = n_min/n_max.
    Pareto: (i+1)^(-1/power) rescaled linearly onto [n_min, n_max].
    """
    spec.validate()
    c = spec.num_classes
    n_max, n_min = float(spec.max_cardinality), float(spec.min_cardinality)
    index = np.arange(c, dtype=np.float64)

    if Profile.parse(spec.profile) is Profile.EXPONENTIAL:
        raw = n_max * (n_min / n_max) ** (index / (c - 1))
    else:
        shape = (index + 1.0) ** (-1.0 / spec.power)
        span = shape[0] - shape[-1]
        raw = n_min + (n_max - n_min) * (shape - shape[-1]) / span

    counts = np.floor(raw + 0.5).astype(np.int64)
    return np.clip(counts, max(1, spec.min_cardinality), spec.max_cardinality)


def _class_means(rng: np.random.Generator, num_classes: int, dim: int, separation: float) -> np.ndarray:
    directions = rng.standard_normal((num_classes, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return separation * directions / norms


def generate(spec: GeneratorSpec) -> Tuple[Dataset, ClassDistribution]:
    """Synthesize a long-tailed Gaussian-blob dataset fully determined by spec.seed"""
    counts = class_cardinalities(spec)
    rng = np.random.default_rng(spec.seed)
    means = _class_means(rng, spec.num_classes, spec.feature_dim, spec.class_separation)

    partitions, labels, blocks = [], [], []
    plan = [(Partition.TRAIN, counts),
            (Partition.VAL, np.full(spec.num_classes, spec.val_per_class)),
            (Partition.TEST, np.full(spec.num_classes, spec.test_per_class))]
    for part, per_class in plan:
        for class_id, n in enumerate(per_class):
            n = int(n)
            blocks.append(rng.standard_normal((n, spec.feature_dim)) + means[class_id])
            labels.extend([class_id] * n)
            partitions.extend([part.value] * n)

    features = np.vstack(blocks)
    dataset = Dataset(np.arange(features.shape[0]), partitions, labels, features,
                      num_classes=spec.num_classes)
    logger.debug("Generated %d instances (%d train) over %d classes",
                 len(dataset), len(dataset.train), spec.num_classes)
    return dataset, dataset.distribution


# ==================== MANIFESTS ====================

def load_manifest(path: PathLike) -> ClassDistribution:
    """Parse a ``class_id,count`` manifest; the header line is optional"""
    counts = []
    seen = set()
    header_allowed = True
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, 1):
            line = raw.strip()
            if not line:
                continue
            if header_allowed and line.replace(" ", "").lower() == MANIFEST_HEADER:
                header_allowed = False
                continue
            header_allowed = False

            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ManifestParseError(f"expected 'class_id,count', got {line!r}", line_no)
            try:
                class_id, count = int(parts[0]), int(parts[1])
            except ValueError:
                raise ManifestParseError(f"non-integer field in {line!r}", line_no) from None
            if count <= 0:
                raise ValidationError(f"line {line_no}: count must be positive, got {count}")
            if class_id in seen:
                raise ValidationError(f"line {line_no}: duplicate class_id {class_id}")
            seen.add(class_id)
            counts.append((class_id, count))

    if not counts:
        raise ValidationError(f"manifest {path} contains no classes")
    return ClassDistribution(tuple(counts))


def save_manifest(dist: ClassDistribution, path: PathLike):
    with open(path, "w", encoding="utf-8") as f:
        f.write(MANIFEST_HEADER + "\n")
        for class_id, count in dist.counts:
            f.write(f"{class_id},{count}\n")


# ==================== DATASET FILES ====================

def save_dataset(dataset: Dataset, path: PathLike):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{DATASET_FORMAT} dim={dataset.feature_dim} "
                f"classes={dataset.num_classes} records={len(dataset)}\n")
        for iid, part, label, row in zip(dataset.instance_ids, dataset.partitions,
                                         dataset.labels, dataset.features):
            values = ",".join(repr(float(x)) for x in row)
            f.write(f"{int(iid)},{part},{int(label)},{values}\n")


def _parse_header(line: str) -> Dict[str, int]:
    tokens = line.split()
    if not tokens or not tokens[0].startswith("lfme-dataset/"):
        raise DatasetFormatError("missing dataset header line")
    if tokens[0] != DATASET_FORMAT:
        raise DatasetFormatError(f"unsupported dataset version {tokens[0]!r}, expected {DATASET_FORMAT!r}")
    fields = {}
    for token in tokens[1:]:
        key, _, value = token.partition("=")
        try:
            fields[key] = int(value)
        except ValueError:
            raise DatasetFormatError(f"bad header field {token!r}") from None
    for key in ("dim", "classes", "records"):
        if key not in fields:
            raise DatasetFormatError(f"header lacks {key}=")
    return fields


def load_dataset(path: PathLike) -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise DatasetFormatError(f"dataset file {path} is empty")

    header = _parse_header(lines[0])
    dim, records = header["dim"], header["records"]
    body = lines[1:]
    if len(body) != records:
        raise DatasetFormatError(f"dataset file {path} is truncated: header promises "
                                 f"{records} records, found {len(body)}")

    ids, parts, labels = [], [], []
    features = np.empty((records, dim), dtype=np.float64)
    for row, line in enumerate(body):
        fields = line.split(",")
        if len(fields) != 3 + dim:
            raise ShapeError(f"record {row + 1} has {len(fields) - 3} features, expected {dim}")
        try:
            ids.append(int(fields[0]))
            parts.append(Partition(fields[1]).value)
            labels.append(int(fields[2]))
            features[row] = [float(x) for x in fields[3:]]
        except ValueError as e:
            raise DatasetFormatError(f"record {row + 1}: {e}") from None

    return Dataset(ids, parts, labels, features, num_classes=header["classes"])
