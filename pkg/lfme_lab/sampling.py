#!/usr/bin/env python3
"""
Sampling

Seeded batch samplers over a dataset's train partition:

- instance-level random sampling: a shuffled permutation of all train
  instances per epoch, chunked into batches;
- class-level random sampling: each draw picks a class uniformly, then an
  instance uniformly within it (with replacement);
- deferred class-balanced sampling: instance-level before a switch epoch,
  class-level from it on.

Batches are arrays of instance ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, Optional, Sequence, Union

import numpy as np

from .distribution import Dataset
from .errors import ValidationError

SeedLike = Union[int, Sequence[int], np.random.Generator]


class SamplerMode(str, Enum):
    INSTANCE_RANDOM = "instance_random"
    CLASS_BALANCED = "class_balanced"
    DEFERRED = "deferred"

    @classmethod
    def parse(cls, value) -> "SamplerMode":
        if isinstance(value, SamplerMode):
            return value
        aliases = {"instance": cls.INSTANCE_RANDOM, "class": cls.CLASS_BALANCED,
                   "balanced": cls.CLASS_BALANCED}
        text = str(value).strip().lower().replace("-", "_")
        if text in aliases:
            return aliases[text]
        try:
            return cls(text)
        except ValueError:
            raise ValidationError(f"unknown sampler mode {value!r}") from None


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def instance_batches(dataset: Dataset, batch_size: int, seed: SeedLike) -> Iterator[np.ndarray]:
    """One epoch: a uniform permutation of train ids, chunked; the last chunk may be short"""
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    ids = dataset.train.instance_ids
    if len(ids) == 0:
        raise ValidationError("train partition is empty")
    order = _rng(seed).permutation(len(ids))
    for start in range(0, len(ids), batch_size):
        yield ids[order[start:start + batch_size]]


def default_epoch_length(dataset: Dataset, batch_size: int) -> int:
    """ceil(N / batch_size), matching the instance sampler's step count"""
    return max(1, math.ceil(len(dataset.train) / batch_size))


def _class_members(dataset: Dataset) -> Dict[int, np.ndarray]:
    train = dataset.train
    members = {}
    for class_id in range(dataset.num_classes):
        ids = train.instance_ids[train.labels == class_id]
        if len(ids) == 0:
            raise ValidationError(f"class {class_id} has no train instances")
        members[class_id] = ids
    return members


def class_balanced_batches(dataset: Dataset, batch_size: int, epoch_len: Optional[int] = None,
                           seed: SeedLike = 0) -> Iterator[np.ndarray]:
    """epoch_len batches; every draw is class-uniform then instance-uniform"""
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    members = _class_members(dataset)
    epoch_len = default_epoch_length(dataset, batch_size) if epoch_len is None else int(epoch_len)
    rng = _rng(seed)

    # flat id table with per-class offsets so a batch is drawn in two vectorized steps
    sizes = np.array([len(members[c]) for c in range(dataset.num_classes)], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    table = np.concatenate([members[c] for c in range(dataset.num_classes)])
    for _ in range(epoch_len):
        classes = rng.integers(0, dataset.num_classes, size=batch_size)
        within = (rng.random(batch_size) * sizes[classes]).astype(np.int64)
        yield table[offsets[classes] + np.minimum(within, sizes[classes] - 1)]


def deferred_schedule(switch_epoch: int, epoch: int) -> SamplerMode:
    """Instance sampling before switch_epoch, class-balanced at and after it (epochs are 1-based)"""
    if switch_epoch < 0:
        raise ValidationError(f"switch_epoch must be >= 0, got {switch_epoch}")
    return SamplerMode.INSTANCE_RANDOM if epoch < switch_epoch else SamplerMode.CLASS_BALANCED


@dataclass
class SamplerState:
    """
    Reproducible batch stream for a training run.

    Epoch e draws from a generator seeded with (seed..., e), so any epoch's
    batches can be replayed without consuming earlier epochs.
    """

    dataset: Dataset
    mode: SamplerMode
    batch_size: int
    seed: Sequence[int]
    switch_epoch: int = 0
    epoch_len: Optional[int] = None
    epochs_served: int = field(default=0, init=False)

    def __post_init__(self):
        self.mode = SamplerMode.parse(self.mode)
        self.seed = tuple(int(s) for s in (self.seed if isinstance(self.seed, (list, tuple)) else [self.seed]))

    def mode_for(self, epoch: int) -> SamplerMode:
        if self.mode is SamplerMode.DEFERRED:
            return deferred_schedule(self.switch_epoch, epoch)
        return self.mode

    def epoch_batches(self, epoch: int) -> Iterator[np.ndarray]:
        self.epochs_served += 1
        rng = np.random.default_rng([*self.seed, epoch])
        if self.mode_for(epoch) is SamplerMode.INSTANCE_RANDOM:
            return instance_batches(self.dataset, self.batch_size, rng)
        return class_balanced_batches(self.dataset, self.batch_size, self.epoch_len, rng)
