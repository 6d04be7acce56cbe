#!/usr/bin/env python3
"""
Experiment System

Stage-wise pipeline over one run directory:

    data -> metrics -> experts -> arms -> report

Every stage writes its artifacts so later stages (and ablation arms) can be
rerun without repeating the earlier ones. The run directory layout:

    config.resolved.yaml      resolved config
    dataset.csv, manifest.csv generated data and its train class counts
    metrics.json              split plus longtailness rows
    experts/                  expert checkpoints, accuracies, confidences
    models/<arm>.npz          trained student / baseline models
    reports/<arm>.json        per-arm training reports
    trajectories.csv          w and v trajectories of the lfme arm
    trajectories_<arm>.csv    the same for every arm
    report.json               aggregated report (no timestamps or absolute paths)
    stamps.json               config hash each artifact was produced under

Artifacts whose stamp does not match the current config are never reused:
data and metrics are regenerated, experts must be retrained, and stale arm
reports are left out of report.json.
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, TypeVar, Union

from ..config import RESOLVED_CONFIG_NAME, RunConfig, dump_config
from ..distribution import Dataset, generate, load_dataset, save_dataset, save_manifest
from ..errors import LfmeError, MissingArtifactError, StageError, StaleArtifactError
from ..imbalance_metrics import CardinalitySplit, LogBase, longtailness_comparison
from ..neuralcore import save_checkpoint
from ..schedules import write_trajectories_csv
from ..shared_helpers import create_directories, read_json, write_json
from ..statistics_tracker import StatisticsTracker
from ..training import (ARM_PRESETS, ArmSpec, ExpertBundle, TrainReport, train_arm, train_experts)

logger = logging.getLogger(__name__)

T = TypeVar("T")

REPORT_NAME = "report.json"
STAMPS_NAME = "stamps.json"
MAIN_ARM = "lfme"
JOINT_ARM = "plain_instance"


class ExperimentSystem:
    """Runs and resumes the pipeline stages of one configured experiment."""

    def __init__(self, config: RunConfig, run_dir: Union[str, Path], show_progress: bool = False):
        self.config = config.validate()
        self.run_dir = Path(run_dir)
        self.show_progress = show_progress

        self.dataset_path = self.run_dir / "dataset.csv"
        self.manifest_path = self.run_dir / "manifest.csv"
        self.metrics_path = self.run_dir / "metrics.json"
        self.experts_dir = self.run_dir / "experts"
        self.models_dir = self.run_dir / "models"
        self.reports_dir = self.run_dir / "reports"
        self.report_path = self.run_dir / REPORT_NAME
        self.stamps_path = self.run_dir / STAMPS_NAME
        self.stage_hashes = self.config.stage_hashes()

        self.statistics_tracker = StatisticsTracker("Experiment")
        self._dataset: Optional[Dataset] = None

    def _stage(self, name: str, action: Callable[[], T]) -> T:
        self.statistics_tracker.start_stage(name)
        try:
            result = action()
        except LfmeError as e:
            self.statistics_tracker.finish_stage(name, False)
            if isinstance(e, StageError):
                raise
            raise StageError(name, e) from e
        except (ValueError, OSError) as e:
            self.statistics_tracker.finish_stage(name, False)
            raise StageError(name, e) from e
        self.statistics_tracker.finish_stage(name, True)
        return result

    # ---------- stamps ----------

    def _stamps(self) -> Dict[str, str]:
        return read_json(self.stamps_path) if self.stamps_path.exists() else {}

    def _stamp(self, artifact: str, kind: str):
        stamps = self._stamps()
        stamps[artifact] = self.stage_hashes[kind]
        write_json(self.stamps_path, stamps)

    def is_current(self, artifact: str, kind: Optional[str] = None) -> bool:
        """True when the artifact was produced under the current config"""
        return self._stamps().get(artifact) == self.stage_hashes[kind or artifact]

    def prepare(self):
        create_directories([self.run_dir, self.experts_dir, self.models_dir, self.reports_dir])
        dump_config(self.config, self.run_dir / RESOLVED_CONFIG_NAME)

    # ---------- data ----------

    def generate_data(self) -> Dataset:
        def action():
            spec = self.config.data.generator_spec(self.config.seed)
            dataset, dist = generate(spec)
            save_dataset(dataset, self.dataset_path)
            save_manifest(dist, self.manifest_path)
            self._stamp("data", "data")
            logger.info("Generated %d train instances over %d classes (imbalance %.1f)",
                        dist.total, dist.num_classes, spec.imbalance_ratio)
            return dataset
        self._dataset = self._stage("data", action)
        return self._dataset

    def dataset(self) -> Dataset:
        """Dataset from the run directory, generated when absent"""
        if self._dataset is None:
            if self.dataset_path.exists() and self.is_current("data"):
                self._dataset = self._stage("data", lambda: load_dataset(self.dataset_path))
            else:
                if self.dataset_path.exists():
                    logger.warning("%s was generated under a different config; regenerating", self.dataset_path)
                self.generate_data()
        return self._dataset

    # ---------- metrics ----------

    def compute_metrics(self, dataset: Dataset) -> CardinalitySplit:
        def action():
            dist = dataset.distribution
            split = self.config.split.build(dist)
            rows = longtailness_comparison(dist, split, self.config.log_base)
            write_json(self.metrics_path, {
                "split": split.to_dict(),
                "rows": [{"split": r.name, "classes": r.num_classes, **r.report.to_dict()} for r in rows],
            })
            self._stamp("metrics", "metrics")
            for name, members, shot in zip(split.names, split.subsets, split.avg_shots):
                logger.info("Subset %-6s %3d classes, average shot %.1f", name, len(members), shot)
            return split
        return self._stage("metrics", action)

    def split(self) -> CardinalitySplit:
        if self.metrics_path.exists() and self.is_current("metrics"):
            return CardinalitySplit.from_dict(read_json(self.metrics_path)["split"])
        if self.metrics_path.exists():
            logger.warning("%s was computed under a different config; recomputing", self.metrics_path)
        return self.compute_metrics(self.dataset())

    # ---------- experts ----------

    def train_experts(self, dataset: Dataset, split: CardinalitySplit) -> ExpertBundle:
        def action():
            bundle = train_experts(dataset, split, self.config.experts, self.show_progress)
            bundle.save(self.experts_dir)
            self._stamp("experts", "experts")
            return bundle
        return self._stage("experts", action)

    def load_experts(self) -> ExpertBundle:
        if not (self.experts_dir / "experts.json").exists():
            raise MissingArtifactError(f"no experts in {self.run_dir}", stage="train-experts")
        if not self.is_current("experts"):
            raise StaleArtifactError(f"experts in {self.run_dir} were trained under a different config",
                                     stage="train-experts")
        return ExpertBundle.load(self.experts_dir)

    # ---------- arms ----------

    def train_arm(self, arm: ArmSpec, dataset: Dataset, split: CardinalitySplit,
                  bundle: Optional[ExpertBundle] = None) -> TrainReport:
        def action():
            experts = bundle
            if arm.needs_experts and experts is None:
                experts = self.load_experts()
            model, report = train_arm(dataset, arm, self.config.student, split, experts, self.show_progress)
            create_directories([self.models_dir, self.reports_dir])
            save_checkpoint(model, self.models_dir / f"{arm.name}.npz")
            report.save(self.reports_dir / f"{arm.name}.json")
            self._stamp(f"arm:{arm.name}", "arms")
            write_trajectories_csv(self.run_dir / f"trajectories_{arm.name}.csv", report.epochs, report.subset_names)
            if arm.name == MAIN_ARM:
                write_trajectories_csv(self.run_dir / "trajectories.csv", report.epochs, report.subset_names)
            final = report.final_test
            logger.info("%-18s test all %.4f  %s", arm.label, final.all,
                        "  ".join(f"{k} {v:.4f}" for k, v in final.subsets.items()))
            return report
        return self._stage(f"arm:{arm.name}", action)

    # ---------- report ----------

    def _arm_reports(self) -> Dict[str, TrainReport]:
        reports = {}
        if not self.reports_dir.exists():
            return reports
        configured = list(self.config.arms)
        extra = sorted(p.stem for p in self.reports_dir.glob("*.json") if p.stem not in configured)
        for name in configured + extra:
            path = self.reports_dir / f"{name}.json"
            if not path.exists():
                continue
            if not self.is_current(f"arm:{name}", "arms"):
                logger.warning("Leaving out arm %s: trained under a different config", name)
                continue
            reports[name] = TrainReport.load(path)
        return reports

    def build_report(self) -> Dict[str, Any]:
        def action():
            if not self.metrics_path.exists():
                raise MissingArtifactError(f"no metrics in {self.run_dir}", stage="train-experts")
            if not self.is_current("metrics"):
                raise StaleArtifactError(f"metrics in {self.run_dir} were computed under a different config",
                                         stage="train-experts")
            metrics = read_json(self.metrics_path)
            split = CardinalitySplit.from_dict(metrics["split"])
            reports = self._arm_reports()

            payload: Dict[str, Any] = {
                "config_hash": self.config.config_hash(),
                "seed": self.config.seed,
                "split": split.to_dict(),
                "log_base": LogBase.parse(self.config.log_base).value,
                "metrics": metrics["rows"],
                "arms": {name: _arm_payload(report) for name, report in reports.items()},
                "table": [_table_row(name, report) for name, report in reports.items()],
            }
            if (self.experts_dir / "experts.json").exists() and self.is_current("experts"):
                experts_meta = read_json(self.experts_dir / "experts.json")
                payload["experts"] = [
                    {"subset": name, "classes": len(members), "avg_shot": shot, "val_accuracy": acc}
                    for name, members, shot, acc in zip(split.names, split.subsets, split.avg_shots,
                                                        experts_meta["expert_accuracies"])
                ]
                if JOINT_ARM in reports:
                    payload["expert_vs_joint"] = expert_vs_joint(payload["experts"], reports[JOINT_ARM])
            write_json(self.report_path, payload)
            return payload
        return self._stage("report", action)

    # ---------- whole pipeline ----------

    def run_experiment(self, arms: Optional[List[str]] = None) -> Dict[str, Any]:
        """All stages with the configured arms; returns the aggregated report"""
        self.prepare()
        dataset = self.generate_data()
        split = self.compute_metrics(dataset)
        names = list(arms or self.config.arms)
        bundle = None
        if any(ARM_PRESETS[n].needs_experts for n in names):
            bundle = self.train_experts(dataset, split)
        for name in names:
            self.train_arm(ARM_PRESETS[name], dataset, split, bundle)
        return self.build_report()


def _arm_payload(report: TrainReport) -> Dict[str, Any]:
    epochs = report.epochs
    return {
        "label": report.label,
        "epochs": {
            "lr": [e["lr"] for e in epochs],
            "loss_total": [e["loss_total"] for e in epochs],
            "loss_ce": [e["loss_ce"] for e in epochs],
            "loss_kd": [e["loss_kd"] for e in epochs],
            "expert_weights": [e["expert_weights"] for e in epochs],
            "mean_v": [e["mean_v"] for e in epochs],
            "val_all": [e["val_all"] for e in epochs],
            "val_subsets": {name: [e["val_subsets"][name] for e in epochs] for name in report.subset_names},
        },
        "final_val": report.final_val.to_dict(),
        "final_test": report.final_test.to_dict(),
    }


def _table_row(name: str, report: TrainReport) -> Dict[str, Any]:
    final = report.final_test
    return {"arm": name, "label": report.label, **final.subsets, "all": final.all}


def expert_vs_joint(experts: List[Dict[str, Any]], joint: TrainReport) -> List[Dict[str, Any]]:
    """Each expert's subset val accuracy beside the joint model's on the same subset"""
    rows = []
    for expert in experts:
        joint_acc = joint.final_val.subsets[expert["subset"]]
        rows.append({"subset": expert["subset"], "expert_val": expert["val_accuracy"],
                     "joint_val": joint_acc, "delta": expert["val_accuracy"] - joint_acc})
    return rows


def run_experiment(config: RunConfig, run_dir: Union[str, Path], show_progress: bool = False) -> Dict[str, Any]:
    return ExperimentSystem(config, run_dir, show_progress).run_experiment()
