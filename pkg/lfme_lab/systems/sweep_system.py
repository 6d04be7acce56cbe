#!/usr/bin/env python3
"""
Sweep System

Runs one experiment per seed in parallel threads and checks the desk-scale
directions over the seeds:

- subsets vs joint: each expert beats the plain instance-sampled joint model
  on its own subset by more than two accuracy points on average;
- main result: the lfme arm's mean test accuracy beats plain class-balanced
  sampling and plain distillation;
- expert weights: the fewest-shot expert's w never rises after leaving 1.0
  and ends below the many-shot expert's, in at least 80% of seeds.
"""

import logging
import math
import queue
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from ..config import RunConfig
from ..errors import LfmeError
from ..shared_helpers import create_directories, write_json
from ..statistics_tracker import StatisticsTracker
from ..worker_monitor import WorkerMonitor, WorkerState
from .experiment_system import JOINT_ARM, MAIN_ARM, ExperimentSystem

logger = logging.getLogger(__name__)

SWEEP_NAME = "sweep.json"
EXPERT_MARGIN = 0.02
WEIGHT_SEED_FRACTION = 0.8


def few_shot_weight_ok(history: Sequence[Sequence[float]], tol: float = 1e-12) -> bool:
    """
    True when w of the first (fewest-shot) expert is non-increasing after it
    first leaves 1.0 and ends strictly below the last (many-shot) expert's w.
    """
    if not history or len(history[0]) < 2:
        return False
    few = [row[0] for row in history]
    start = next((i for i, w in enumerate(few) if w != 1.0), None)
    if start is not None and any(b > a + tol for a, b in zip(few[start:], few[start + 1:])):
        return False
    return few[-1] < history[-1][-1]


def summarize_sweep(reports: Dict[int, Dict[str, Any]]) -> Dict[str, Any]:
    """Per-arm mean accuracies plus the three direction checks"""
    seeds = sorted(reports)
    arm_names = []
    for seed in seeds:
        for name in reports[seed]["arms"]:
            if name not in arm_names:
                arm_names.append(name)

    arms = {}
    for name in arm_names:
        finals = [reports[s]["arms"][name]["final_test"] for s in seeds if name in reports[s]["arms"]]
        subsets = sorted({k for f in finals for k in f["subsets"]})
        arms[name] = {
            "runs": len(finals),
            "test_all": float(np.mean([f["all"] for f in finals])),
            "test_subsets": {k: float(np.mean([f["subsets"][k] for f in finals if k in f["subsets"]]))
                             for k in subsets},
        }

    checks: Dict[str, Any] = {}

    if all("expert_vs_joint" in reports[s] for s in seeds):
        names = [row["subset"] for row in reports[seeds[0]]["expert_vs_joint"]]
        deltas = {n: float(np.mean([next(r["delta"] for r in reports[s]["expert_vs_joint"] if r["subset"] == n)
                                    for s in seeds])) for n in names}
        checks["subsets_vs_joint"] = {"margin": EXPERT_MARGIN, "mean_delta": deltas,
                                      "passed": all(d > EXPERT_MARGIN for d in deltas.values())}
    else:
        checks["subsets_vs_joint"] = {"skipped": f"needs experts and the {JOINT_ARM} arm"}

    if all(a in arms for a in (MAIN_ARM, "plain_balanced", "balanced_kd")):
        main = arms[MAIN_ARM]["test_all"]
        checks["main_result"] = {
            MAIN_ARM: main,
            "plain_balanced": arms["plain_balanced"]["test_all"],
            "balanced_kd": arms["balanced_kd"]["test_all"],
            "passed": main > arms["plain_balanced"]["test_all"] and main > arms["balanced_kd"]["test_all"],
        }
    else:
        checks["main_result"] = {"skipped": "needs the lfme, plain_balanced and balanced_kd arms"}

    if all(MAIN_ARM in reports[s]["arms"] for s in seeds):
        per_seed = {str(s): few_shot_weight_ok(reports[s]["arms"][MAIN_ARM]["epochs"]["expert_weights"])
                    for s in seeds}
        needed = math.ceil(WEIGHT_SEED_FRACTION * len(seeds))
        checks["expert_weights"] = {"per_seed": per_seed, "needed": needed,
                                    "passed": sum(per_seed.values()) >= needed}
    else:
        checks["expert_weights"] = {"skipped": "needs the lfme arm"}

    return {"seeds": seeds, "arms": arms, "checks": checks}


class SweepSystem:
    """One ExperimentSystem per seed under run_root/seed_<n>, run in a thread pool."""

    def __init__(self, config: RunConfig, seeds: Sequence[int], run_root: Union[str, Path],
                 max_workers: int = 1, show_monitor: bool = True):
        if not seeds:
            raise LfmeError("sweep needs at least one seed")
        self.config = config.validate()
        self.seeds = list(dict.fromkeys(int(s) for s in seeds))
        self.run_root = Path(run_root)
        self.max_workers = max(1, min(max_workers, len(self.seeds)))
        self.worker_monitor = WorkerMonitor(max_workers=self.max_workers, enabled=show_monitor)
        self.statistics_tracker = StatisticsTracker("Sweep")
        self._free_workers: "queue.Queue[int]" = queue.Queue()
        for worker_id in range(1, self.max_workers + 1):
            self._free_workers.put(worker_id)

    def run_dir_for(self, seed: int) -> Path:
        return self.run_root / f"seed_{seed}"

    def _run_seed(self, seed: int) -> Dict[str, Any]:
        worker_id = self._free_workers.get()
        try:
            self.worker_monitor.update_worker(worker_id, f"seed {seed}: training", WorkerState.ACTIVE)
            system = ExperimentSystem(self.config.with_seed(seed), self.run_dir_for(seed))
            report = system.run_experiment()
            self.worker_monitor.set_worker_completed(worker_id, f"seed {seed}: done")
            return report
        except Exception as e:
            self.worker_monitor.set_worker_error(worker_id, f"seed {seed}: {e}")
            raise
        finally:
            self._free_workers.put(worker_id)

    def run(self) -> Dict[str, Any]:
        create_directories([self.run_root])
        self.statistics_tracker.start_timing()
        reports: Dict[int, Dict[str, Any]] = {}
        failures: List[str] = []
        with self.worker_monitor:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                future_to_seed = {executor.submit(self._run_seed, seed): seed for seed in self.seeds}
                for future in as_completed(future_to_seed):
                    seed = future_to_seed[future]
                    try:
                        reports[seed] = future.result()
                        self.statistics_tracker.update_success(True)
                        logger.info("Seed %d finished", seed)
                    except Exception as e:
                        self.statistics_tracker.update_success(False)
                        failures.append(f"seed {seed}: {e}")
                        logger.error("Seed %d failed: %s", seed, e)
        if failures:
            raise LfmeError("; ".join(failures))

        summary = summarize_sweep(reports)
        summary["config_hash"] = self.config.config_hash()
        summary["runs"] = {str(s): self.run_dir_for(s).name for s in sorted(reports)}
        write_json(self.run_root / SWEEP_NAME, summary)
        return summary
