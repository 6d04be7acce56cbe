#!/usr/bin/env python3
"""
Training

Expert training on cardinality-adjacent subsets, the plain joint baseline,
the distilled student with self-paced expert weights and curriculum instance
weights, and per-split evaluation.

Every run is seeded: network initialization, batch streams and therefore all
parameters are determined by (config, dataset).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .distribution import Dataset, Partition
from .errors import ConfigError, EvaluationError, MissingArtifactError, ValidationError
from .imbalance_metrics import CardinalitySplit, split_by_thresholds
from .neuralcore import (DenseNet, ExpertTarget, forward, load_checkpoint, loss_and_gradients,
                         save_checkpoint, sgd_step)
from .sampling import SamplerMode, SamplerState
from .schedules import ExpertWeightState, InstanceWeightState, ScheduleKind, compute_confidences
from .shared_helpers import read_json, write_json

logger = logging.getLogger(__name__)

# seed stream tags
_EXPERT_INIT = 1
_STUDENT_INIT = 2
_SAMPLER = 3


# ==================== CONFIG ====================

@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run (experts or student)."""

    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.05
    lr_milestones: Tuple[int, ...] = (25, 35)
    lr_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    temperature: float = 2.0
    alpha: float = 0.6
    schedule_kind: str = ScheduleKind.LINEAR.value
    sampler: str = SamplerMode.CLASS_BALANCED.value
    switch_epoch: int = 0
    epoch_len: Optional[int] = None
    seed: int = 0
    hidden_dims: Tuple[int, ...] = (32,)
    kd_t2_scaling: bool = False
    use_kd: bool = True
    use_spes: bool = True
    use_curriculum: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lr_milestones", tuple(int(m) for m in self.lr_milestones))
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden dims must be positive, got {list(self.hidden_dims)}")
        if self.switch_epoch < 0:
            raise ConfigError("switch_epoch must be >= 0")
        if self.epoch_len is not None and self.epoch_len < 1:
            raise ConfigError("epoch_len must be >= 1 when set")
        try:
            ScheduleKind.parse(self.schedule_kind)
            SamplerMode.parse(self.sampler)
        except ValidationError as e:
            raise ConfigError(str(e)) from None
        return self

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def lr_at(self, epoch: int) -> float:
        """Step decay: lr * factor^(number of milestones already passed)"""
        passed = sum(1 for m in self.lr_milestones if epoch > m)
        return self.lr * self.lr_factor ** passed

    def to_dict(self) -> Dict[str, object]:
        data = dataclasses.asdict(self)
        data["lr_milestones"] = list(self.lr_milestones)
        data["hidden_dims"] = list(self.hidden_dims)
        return data


EXPERT_DEFAULTS = TrainConfig(sampler=SamplerMode.INSTANCE_RANDOM.value)


# ==================== ARMS ====================

@dataclass(frozen=True)
class ArmSpec:
    """A component-study arm: which sampler and which adaptive parts are active."""

    name: str
    label: str
    distill: bool
    sampler: Optional[str] = None   # None keeps the student config's sampler
    use_spes: bool = False
    use_curriculum: bool = False

    @property
    def needs_experts(self) -> bool:
        return self.distill or self.use_curriculum

    def apply(self, config: TrainConfig) -> TrainConfig:
        return config.replace(
            sampler=self.sampler or config.sampler,
            use_kd=self.distill,
            use_spes=self.use_spes,
            use_curriculum=self.use_curriculum,
        )


ARM_PRESETS: Dict[str, ArmSpec] = {
    "plain_instance": ArmSpec("plain_instance", "Ins.Samp.", False, SamplerMode.INSTANCE_RANDOM.value),
    "instance_kd": ArmSpec("instance_kd", "Ins.Samp.+KD", True, SamplerMode.INSTANCE_RANDOM.value),
    "plain_balanced": ArmSpec("plain_balanced", "Cls.Samp.", False),
    "balanced_kd": ArmSpec("balanced_kd", "Cls.Samp.+KD", True),
    "balanced_kd_spes": ArmSpec("balanced_kd_spes", "Cls.Samp.+KD+SpES", True, use_spes=True),
    "lfme": ArmSpec("lfme", "CurIS+KD+SpES", True, use_spes=True, use_curriculum=True),
}

ABLATIONS = ("no-kd", "no-spes", "no-curriculum")

# the component study adds KD, then SpES, then the curriculum; switching one
# off keeps only the components added before it
_ABLATION_ARMS = {"no-kd": "plain_balanced", "no-spes": "balanced_kd", "no-curriculum": "balanced_kd_spes"}


def arm_from_ablations(ablations: Sequence[str]) -> ArmSpec:
    """The component-study arm left after switching parts of the full method off"""
    flags = set(ablations)
    unknown = sorted(flags - set(ABLATIONS))
    if unknown:
        raise ConfigError(f"unknown ablation {unknown[0]!r}; choose from {', '.join(ABLATIONS)}")
    for flag in ABLATIONS:
        if flag in flags:
            return ARM_PRESETS[_ABLATION_ARMS[flag]]
    return ARM_PRESETS["lfme"]


def resolve_arm(name: str) -> ArmSpec:
    try:
        return ARM_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown arm {name!r}; choose from {', '.join(ARM_PRESETS)}") from None


# ==================== REPORTS ====================

@dataclass(frozen=True)
class AccuracyRecord:
    """Top-1 accuracy over all evaluated instances and per subset"""

    all: float
    subsets: Dict[str, float]
    counts: Dict[str, int]

    def to_dict(self) -> Dict[str, object]:
        return {"all": self.all, "subsets": dict(self.subsets), "counts": dict(self.counts)}

    @classmethod
    def from_dict(cls, data) -> "AccuracyRecord":
        return cls(float(data["all"]), {k: float(v) for k, v in data["subsets"].items()},
                   {k: int(v) for k, v in data["counts"].items()})


@dataclass
class TrainReport:
    name: str
    label: str
    subset_names: List[str]
    epochs: List[Dict[str, object]] = field(default_factory=list)
    final_val: Optional[AccuracyRecord] = None
    final_test: Optional[AccuracyRecord] = None
    config: Dict[str, object] = field(default_factory=dict)

    def expert_weight_history(self) -> List[List[float]]:
        return [list(e["expert_weights"]) for e in self.epochs]

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "label": self.label,
            "subset_names": list(self.subset_names),
            "config": self.config,
            "epochs": self.epochs,
            "final_val": self.final_val.to_dict() if self.final_val else None,
            "final_test": self.final_test.to_dict() if self.final_test else None,
        }

    @classmethod
    def from_dict(cls, data) -> "TrainReport":
        return cls(
            name=data["name"],
            label=data["label"],
            subset_names=list(data["subset_names"]),
            epochs=list(data["epochs"]),
            final_val=AccuracyRecord.from_dict(data["final_val"]) if data.get("final_val") else None,
            final_test=AccuracyRecord.from_dict(data["final_test"]) if data.get("final_test") else None,
            config=dict(data.get("config", {})),
        )

    def save(self, path: Union[str, Path]):
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainReport":
        return cls.from_dict(read_json(path))


# ==================== EVALUATION ====================

def whole_split(dataset: Dataset) -> CardinalitySplit:
    return split_by_thresholds(dataset.distribution, ())


def predict(model: DenseNet, features: np.ndarray, classes: Optional[np.ndarray] = None) -> np.ndarray:
    """Predicted class ids; with classes given the model's outputs index into them"""
    if len(features) == 0:
        return np.zeros(0, dtype=np.int64)
    columns = np.argmax(forward(model, features), axis=1)
    return columns if classes is None else np.asarray(classes, dtype=np.int64)[columns]


def evaluate(model: DenseNet, dataset: Dataset, split: CardinalitySplit,
             partition: Union[str, Partition] = Partition.TEST,
             classes: Optional[Sequence[int]] = None) -> AccuracyRecord:
    """
    Top-1 accuracy on a partition, overall and per subset.

    A student (classes=None) predicts by full-vector argmax over its C outputs.
    An expert passes its sorted class ids; only instances with those labels are
    evaluated and subsets without instances are left out.
    """
    view = dataset.partition(partition)
    labels = view.labels
    features = view.features
    if classes is not None:
        classes = np.array(sorted(classes), dtype=np.int64)
        mask = np.isin(labels, classes)
        labels, features = labels[mask], features[mask]
    if len(labels) == 0:
        raise EvaluationError(f"no {Partition(partition).value} instances to evaluate")

    correct = predict(model, features, classes) == labels
    subsets, counts = {}, {}
    for name, members in zip(split.names, split.subsets):
        in_subset = np.isin(labels, members)
        n = int(in_subset.sum())
        if n == 0:
            if classes is None:
                raise EvaluationError(f"subset {name!r} has no {Partition(partition).value} instances")
            continue
        subsets[name] = float(correct[in_subset].mean())
        counts[name] = n
    return AccuracyRecord(all=float(correct.mean()), subsets=subsets, counts=counts)


def student_subset_accuracy(model: DenseNet, dataset: Dataset, subset: Sequence[int],
                            partition: Union[str, Partition] = Partition.VAL) -> float:
    """Accuracy over instances labelled in subset, using full C-way argmax"""
    view = dataset.partition(partition)
    mask = np.isin(view.labels, np.asarray(subset, dtype=np.int64))
    if not mask.any():
        raise EvaluationError(f"no {Partition(partition).value} instances for subset {list(subset)[:5]}...")
    return float((predict(model, view.features[mask]) == view.labels[mask]).mean())


# ==================== EXPERTS ====================

@dataclass
class ExpertBundle:
    """Frozen experts, their subset-restricted val accuracies and train confidences."""

    split: CardinalitySplit
    experts: List[DenseNet]
    expert_accuracies: List[float]
    confidences: np.ndarray

    def subset_ids(self, dataset: Dataset) -> np.ndarray:
        return self.split.membership(dataset.num_classes)[dataset.train.labels]

    def save(self, directory: Union[str, Path]):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for index, expert in enumerate(self.experts, 1):
            save_checkpoint(expert, directory / f"expert_{index}.npz")
        with open(directory / "confidences.npy", "wb") as f:
            np.save(f, self.confidences)
        meta = {"split": self.split.to_dict(), "expert_accuracies": list(self.expert_accuracies)}
        write_json(directory / "experts.json", meta)

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "ExpertBundle":
        directory = Path(directory)
        meta_path = directory / "experts.json"
        if not meta_path.exists():
            raise MissingArtifactError(f"no expert artifacts in {directory}", stage="train-experts")
        meta = read_json(meta_path)
        split = CardinalitySplit.from_dict(meta["split"])
        experts = [load_checkpoint(directory / f"expert_{i}.npz") for i in range(1, split.num_subsets + 1)]
        confidences = np.load(directory / "confidences.npy", allow_pickle=False)
        return cls(split, experts, [float(a) for a in meta["expert_accuracies"]], confidences)


def train_expert(subset_dataset: Dataset, config: TrainConfig = EXPERT_DEFAULTS,
                 expert_index: int = 0, show_progress: bool = False) -> Tuple[DenseNet, float]:
    """
    Plain cross-entropy training on one subset whose labels are already remapped
    to 0..|S_l|-1. Returns the expert and its top-1 accuracy on the subset's val data.
    """
    config.validate()
    net, _ = _run_training(
        subset_dataset, config, whole_split(subset_dataset),
        name=f"expert_{expert_index + 1}", label=f"Expert {expert_index + 1}",
        init_seed=(config.seed, _EXPERT_INIT, expert_index),
        sampler_seed=(config.seed, _SAMPLER, _EXPERT_INIT, expert_index),
        show_progress=show_progress)
    accuracy = evaluate(net, subset_dataset, whole_split(subset_dataset), Partition.VAL).all
    return net, accuracy


def train_experts(dataset: Dataset, split: CardinalitySplit, config: TrainConfig = EXPERT_DEFAULTS,
                  show_progress: bool = False) -> ExpertBundle:
    """One expert per subset, then confidences for every train instance"""
    if tuple(split.class_ids) != tuple(dataset.distribution.class_ids):
        raise ConfigError("split does not cover exactly the dataset's classes")
    experts, accuracies = [], []
    for index, (name, members) in enumerate(zip(split.names, split.subsets)):
        if not members:
            raise ValidationError(f"subset {name!r} is empty")
        subset_dataset = dataset.restrict(members)
        net, accuracy = train_expert(subset_dataset, config, index, show_progress)
        logger.info("Expert %d (%s, %d classes): val accuracy %.4f",
                    index + 1, name, len(members), accuracy)
        experts.append(net)
        accuracies.append(accuracy)
    confidences = compute_confidences(experts, split, dataset)
    return ExpertBundle(split, experts, accuracies, confidences)


# ==================== STUDENT ====================

def _check_bundle(dataset: Dataset, bundle: ExpertBundle):
    split = bundle.split
    if tuple(split.class_ids) != tuple(range(dataset.num_classes)):
        raise ConfigError("expert split does not cover the dataset's classes")
    recomputed = split_by_thresholds(dataset.distribution, split.thresholds)
    if recomputed.subsets != split.subsets:
        raise ConfigError("expert split was built from a different class distribution")
    if len(bundle.experts) != split.num_subsets:
        raise ConfigError(f"{len(bundle.experts)} experts for {split.num_subsets} subsets")
    for expert, members in zip(bundle.experts, split.subsets):
        if expert.output_dim != len(members) or expert.input_dim != dataset.feature_dim:
            raise ConfigError("expert shape does not match its subset or the feature dimension")
    if bundle.confidences.shape != (len(dataset.train),):
        raise ConfigError("expert confidences do not align with the train partition")


def _run_training(dataset: Dataset, config: TrainConfig, split: CardinalitySplit, *,
                  name: str, label: str, init_seed: Tuple[int, ...], sampler_seed: Tuple[int, ...],
                  bundle: Optional[ExpertBundle] = None,
                  show_progress: bool = False) -> Tuple[DenseNet, TrainReport]:
    train = dataset.train
    dims = (dataset.feature_dim, *config.hidden_dims, dataset.num_classes)
    net = DenseNet.initialize(dims, np.random.default_rng(list(init_seed)))
    sampler = SamplerState(dataset, config.sampler, config.batch_size, sampler_seed,
                           switch_epoch=config.switch_epoch, epoch_len=config.epoch_len)

    order = np.argsort(train.instance_ids, kind="stable")
    sorted_ids = train.instance_ids[order]

    distill = bundle is not None and config.use_kd
    columns = [np.array(members, dtype=np.int64) for members in split.subsets]
    weights_state = None
    if bundle is not None:
        weights_state = ExpertWeightState(
            list(bundle.expert_accuracies), alpha=config.alpha,
            mode="self_paced" if (distill and config.use_spes) else "fixed",
            fixed_value=1.0 if distill else 0.0)
    instance_state = InstanceWeightState(
        initial_weights=np.ones(len(train)), subset_ids=split.membership(dataset.num_classes)[train.labels],
        kind=config.schedule_kind, total_epochs=config.epochs, enabled=False)
    if bundle is not None and config.use_curriculum:
        instance_state = InstanceWeightState.from_confidences(
            bundle.confidences, bundle.subset_ids(dataset), split.avg_shots,
            kind=config.schedule_kind, total_epochs=config.epochs)

    report = TrainReport(name=name, label=label, subset_names=list(split.names), config=config.to_dict())
    state = None
    epochs = tqdm(range(1, config.epochs + 1), desc=name, disable=not show_progress, leave=False)
    for epoch in epochs:
        lr = config.lr_at(epoch)
        v_all = instance_state.weights_at(epoch)
        w = list(weights_state.weights) if distill else []
        sums = np.zeros(2 + (len(w) if distill else 0))
        batches = 0
        for ids in sampler.epoch_batches(epoch):
            pos = order[np.searchsorted(sorted_ids, ids)]
            features, labels = train.features[pos], train.labels[pos]
            targets = []
            if distill:
                targets = [ExpertTarget(forward(expert, features), cols)
                           for expert, cols in zip(bundle.experts, columns)]
            breakdown, grads = loss_and_gradients(net, features, labels, v_all[pos], targets, w,
                                                  config.temperature, config.kd_t2_scaling)
            net, state = sgd_step(net, grads, lr, config.momentum, config.weight_decay, state)
            sums += [breakdown.total, breakdown.weighted_ce, *breakdown.kd_per_expert]
            batches += 1

        val = evaluate(net, dataset, split, Partition.VAL)
        if weights_state is not None:
            weights_state.update([val.subsets[n] for n in split.names])
        means = sums / max(batches, 1)
        report.epochs.append({
            "epoch": epoch,
            "lr": lr,
            "loss_total": float(means[0]),
            "loss_ce": float(means[1]),
            "loss_kd": [float(x) for x in means[2:]] if distill else [0.0] * len(split.names),
            "expert_weights": list(weights_state.weights) if weights_state is not None else [],
            "mean_v": instance_state.subset_means(epoch, split.num_subsets),
            "val_all": val.all,
            "val_subsets": dict(val.subsets),
        })
        logger.debug("%s epoch %d: loss %.4f val %.4f", name, epoch, means[0], val.all)

    report.final_val = evaluate(net, dataset, split, Partition.VAL)
    report.final_test = evaluate(net, dataset, split, Partition.TEST)
    return net, report


def train_plain(dataset: Dataset, config: TrainConfig, split: Optional[CardinalitySplit] = None,
                name: str = "plain", label: str = "Plain", show_progress: bool = False) -> Tuple[DenseNet, TrainReport]:
    """C-way model trained with plain cross-entropy under the configured sampler"""
    config.validate()
    return _run_training(dataset, config, split or whole_split(dataset), name=name, label=label,
                         init_seed=(config.seed, _STUDENT_INIT),
                         sampler_seed=(config.seed, _SAMPLER, _STUDENT_INIT),
                         show_progress=show_progress)


def train_student(dataset: Dataset, experts: ExpertBundle, config: TrainConfig,
                  name: str = "lfme", label: str = "CurIS+KD+SpES",
                  show_progress: bool = False) -> Tuple[DenseNet, TrainReport]:
    """
    Student trained on weighted CE plus expert distillation.

    Each epoch: v_i from the curriculum schedule, batches from the sampler,
    frozen experts run on every batch instance, and after validation each w_l
    is updated from the student's accuracy on subset l.
    """
    config.validate()
    _check_bundle(dataset, experts)
    return _run_training(dataset, config, experts.split, name=name, label=label,
                         init_seed=(config.seed, _STUDENT_INIT),
                         sampler_seed=(config.seed, _SAMPLER, _STUDENT_INIT),
                         bundle=experts, show_progress=show_progress)


def train_arm(dataset: Dataset, arm: ArmSpec, config: TrainConfig, split: CardinalitySplit,
              experts: Optional[ExpertBundle] = None,
              show_progress: bool = False) -> Tuple[DenseNet, TrainReport]:
    arm_config = arm.apply(config)
    if arm.needs_experts:
        if experts is None:
            raise MissingArtifactError(f"arm {arm.name} needs trained experts", stage="train-experts")
        return train_student(dataset, experts, arm_config, arm.name, arm.label, show_progress)
    return train_plain(dataset, arm_config, split, arm.name, arm.label, show_progress)
