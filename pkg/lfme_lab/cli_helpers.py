#!/usr/bin/env python3
"""
CLI Helpers

Argument parsing and console output helpers for the lfme subcommands
"""

import argparse
import dataclasses
import json
from datetime import datetime
from pathlib import Path
from typing import Any, List, Optional, Sequence

from .distribution import ClassDistribution, GeneratorSpec, Profile
from .imbalance_metrics import imbalance_ratio


def int_list(text: str) -> List[int]:
    """argparse type for '20,100'; an empty string gives an empty list"""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be greater than 0, got {value}")
    return value


def generator_overrides(args: argparse.Namespace, spec: GeneratorSpec) -> GeneratorSpec:
    """Apply gen-data flags on top of a spec; --imbalance sets n_min from n_max"""
    changes = {}
    for flag, key in (("classes", "num_classes"), ("profile", "profile"), ("max_count", "max_cardinality"),
                      ("dim", "feature_dim"), ("separation", "class_separation"), ("seed", "seed"),
                      ("val_per_class", "val_per_class"), ("test_per_class", "test_per_class")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    if "profile" in changes:
        changes["profile"] = Profile.parse(changes["profile"]).value
    fields = {**dataclasses.asdict(spec), **changes}
    if getattr(args, "imbalance", None) is not None:
        fields.pop("min_cardinality")
        max_cardinality = fields.pop("max_cardinality")
        return GeneratorSpec.from_imbalance(args.imbalance, max_cardinality, **fields)
    return GeneratorSpec(**fields)


def print_distribution_summary(dist: ClassDistribution, spec: Optional[GeneratorSpec] = None):
    counts = dist.cardinalities
    print(f"Classes: {dist.num_classes}")
    print(f"Train instances: {dist.total}")
    print(f"Counts: max {int(counts.max())}, min {int(counts.min())}, "
          f"imbalance ratio {imbalance_ratio(dist):.1f}")
    if spec is not None:
        print(f"Profile: {spec.profile}, dim {spec.feature_dim}, seed {spec.seed}")


def print_startup_info(title: str, items: Sequence[Any]):
    """Banner with started time and key/value lines"""
    print("=" * 60)
    print(title)
    print("=" * 60)
    print(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    for key, value in items:
        print(f"{key}: {value}")
    print("=" * 60)


def print_completion_info(statistics_tracker, success: bool, outputs: Sequence[Path] = ()):
    print("=" * 60)
    print("COMPLETED" if success else "FAILED")
    print("=" * 60)
    statistics_tracker.print_summary()
    for path in outputs:
        print(f"Wrote {path}")
    print(f"Result: {'SUCCESS' if success else 'FAILED'}")
    print("=" * 60)


def print_json(payload: Any):
    print(json.dumps(payload, indent=2, sort_keys=True))
