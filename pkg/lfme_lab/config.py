#!/usr/bin/env python3
"""
Run Configuration

YAML run config with sections data, split, experts and student plus top-level
seed, arms, log_base and output_dir. Every key has a default; unknown keys are
rejected with their dotted path.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from .distribution import ClassDistribution, GeneratorSpec, Profile
from .errors import ConfigError, ValidationError
from .imbalance_metrics import CardinalitySplit, LogBase, split_by_quantiles, split_by_thresholds
from .training import ARM_PRESETS, EXPERT_DEFAULTS, TrainConfig

OUTPUT_ROOT_ENV = "LFME_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"
RESOLVED_CONFIG_NAME = "config.resolved.yaml"
DEFAULT_CONFIG_PATH = Path(__file__).parent / "configs" / "default.yaml"

# train config keys that make sense for experts; the adaptive parts are student-only
EXPERT_KEYS = ("epochs", "batch_size", "lr", "lr_milestones", "lr_factor", "momentum",
               "weight_decay", "hidden_dims", "sampler", "switch_epoch", "epoch_len")
STUDENT_KEYS = tuple(f.name for f in dataclasses.fields(TrainConfig) if f.name != "seed")
# fields whose default is None, with a value of the type they take when set
_OPTIONAL_TEMPLATES = {"thresholds": (0,), "epoch_len": 0}


@dataclass(frozen=True)
class DataConfig:
    num_classes: int = 30
    profile: str = Profile.EXPONENTIAL.value
    max_cardinality: int = 500
    min_cardinality: int = 5
    power: float = 6.0
    feature_dim: int = 16
    class_separation: float = 2.5
    val_per_class: int = 20
    test_per_class: int = 20

    def generator_spec(self, seed: int) -> GeneratorSpec:
        spec = GeneratorSpec(
            num_classes=self.num_classes,
            max_cardinality=self.max_cardinality,
            min_cardinality=self.min_cardinality,
            profile=Profile.parse(self.profile).value,
            power=self.power,
            feature_dim=self.feature_dim,
            class_separation=self.class_separation,
            seed=seed,
            val_per_class=self.val_per_class,
            test_per_class=self.test_per_class,
        )
        spec.validate()
        return spec


@dataclass(frozen=True)
class SplitConfig:
    """Explicit thresholds win over quantiles; an empty threshold list means one subset"""

    thresholds: Optional[Tuple[int, ...]] = None
    quantiles: Tuple[float, ...] = (1 / 3, 2 / 3)

    def build(self, dist: ClassDistribution) -> CardinalitySplit:
        if self.thresholds is not None:
            return split_by_thresholds(dist, self.thresholds)
        return split_by_quantiles(dist, self.quantiles)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    experts: TrainConfig = EXPERT_DEFAULTS
    student: TrainConfig = field(default_factory=TrainConfig)
    arms: Tuple[str, ...] = tuple(ARM_PRESETS)
    log_base: str = LogBase.NATURAL.value
    output_dir: str = "default"

    def validate(self) -> "RunConfig":
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        try:
            self.data.generator_spec(self.seed)
            LogBase.parse(self.log_base)
        except ValidationError as e:
            raise ConfigError(str(e)) from None
        self.experts.validate()
        self.student.validate()
        if not self.arms:
            raise ConfigError("arms must name at least one arm")
        for arm in self.arms:
            if arm not in ARM_PRESETS:
                raise ConfigError(f"unknown arm {arm!r}; choose from {', '.join(ARM_PRESETS)}")
        return self

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed,
                                   experts=self.experts.replace(seed=seed),
                                   student=self.student.replace(seed=seed))

    def to_dict(self) -> Dict[str, Any]:
        experts = self.experts.to_dict()
        student = self.student.to_dict()
        return {
            "seed": self.seed,
            "data": dataclasses.asdict(self.data),
            "split": {
                "thresholds": list(self.split.thresholds) if self.split.thresholds is not None else None,
                "quantiles": list(self.split.quantiles),
            },
            "experts": {k: experts[k] for k in EXPERT_KEYS},
            "student": {k: student[k] for k in STUDENT_KEYS},
            "arms": list(self.arms),
            "log_base": LogBase.parse(self.log_base).value,
            "output_dir": self.output_dir,
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form, output_dir excluded"""
        payload = self.to_dict()
        payload.pop("output_dir")
        return _digest(payload)

    def stage_hashes(self) -> Dict[str, str]:
        """
        Hash of the config sections each run-directory artifact depends on:
        data (seed, data), metrics (+ split, log_base), experts (+ split,
        experts) and arms (+ student).
        """
        full = self.to_dict()
        data = {"seed": full["seed"], "data": full["data"]}
        metrics = {**data, "split": full["split"], "log_base": full["log_base"]}
        experts = {**data, "split": full["split"], "experts": full["experts"]}
        arms = {**experts, "student": full["student"]}
        return {"data": _digest(data), "metrics": _digest(metrics), "experts": _digest(experts),
                "arms": _digest(arms)}


def _digest(payload: Mapping[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ==================== LOADING ====================

def _coerce(path: str, value: Any, default: Any) -> Any:
    """Coerce a YAML scalar or list to the type of the field default"""
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError("expected an integer")
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError("expected a number")
            return float(value)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise TypeError("expected a list")
            kind = type(default[0]) if default else int
            return tuple(kind(v) for v in value)
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e} (got {value!r})") from None
    return value


def _section(path: str, data: Any, template: Any, allowed: Tuple[str, ...]) -> Dict[str, Any]:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path} must be a mapping")
    values = {}
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {path}.{key}")
        if value is None and key in _OPTIONAL_TEMPLATES:
            values[key] = None
            continue
        default = getattr(template, key)
        if default is None:
            default = _OPTIONAL_TEMPLATES[key]
        values[key] = _coerce(f"{path}.{key}", value, default)
    return values


def config_from_dict(data: Optional[Mapping[str, Any]]) -> RunConfig:
    data = dict(data or {})
    top_keys = ("seed", "data", "split", "experts", "student", "arms", "log_base", "output_dir")
    for key in data:
        if key not in top_keys:
            raise ConfigError(f"unknown config key {key}")

    base = RunConfig()
    seed = _coerce("seed", data.get("seed", base.seed), base.seed)

    data_cfg = DataConfig(**_section("data", data.get("data"), base.data,
                                     tuple(f.name for f in dataclasses.fields(DataConfig))))
    split_values = _section("split", data.get("split"), base.split, ("thresholds", "quantiles"))
    split_cfg = SplitConfig(**split_values)

    experts = EXPERT_DEFAULTS.replace(seed=seed, **_section("experts", data.get("experts"), EXPERT_DEFAULTS, EXPERT_KEYS))
    student = TrainConfig(seed=seed, **_section("student", data.get("student"), TrainConfig(), STUDENT_KEYS))

    arms = data.get("arms", list(base.arms))
    if not isinstance(arms, (list, tuple)):
        raise ConfigError("arms must be a list of arm names")

    config = RunConfig(
        seed=seed,
        data=data_cfg,
        split=split_cfg,
        experts=experts,
        student=student,
        arms=tuple(str(a) for a in arms),
        log_base=str(data.get("log_base", base.log_base)),
        output_dir=str(data.get("output_dir", base.output_dir)),
    )
    return config.validate()


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Load a YAML run config; no path gives the defaults"""
    if path is None:
        return config_from_dict({})
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from None
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def dump_config(config: RunConfig, path: Union[str, Path]):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.to_dict(), f, default_flow_style=False, sort_keys=True)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)


def resolve_run_dir(config: RunConfig, override: Optional[Union[str, Path]] = None) -> Path:
    """Absolute output_dir is used as is; relative ones live under the output root"""
    target = Path(override) if override is not None else Path(config.output_dir)
    if target.is_absolute() or override is not None:
        return target
    return output_root() / target
