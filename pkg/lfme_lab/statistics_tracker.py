#!/usr/bin/env python3
"""
Statistics Tracker

Stage timing and success counts for experiment runs and sweeps.
Durations are display-only and never written into reports.
"""

import time
from typing import Any, Dict, List, Optional, Tuple

from .shared_helpers import format_duration


class StatisticsTracker:
    """Counts completed and failed stages of one operation and times them"""

    def __init__(self, operation_name: str):
        self.operation_name = operation_name
        self.start_time: Optional[float] = None
        self.total_items = 0
        self.successful_items = 0
        self.failed_items = 0
        self.stage_times: List[Tuple[str, float, bool]] = []
        self._stage_started: Dict[str, float] = {}

    def start_timing(self):
        self.start_time = time.perf_counter()

    def start_stage(self, name: str):
        if self.start_time is None:
            self.start_timing()
        self._stage_started[name] = time.perf_counter()

    def finish_stage(self, name: str, success: bool):
        started = self._stage_started.pop(name, None)
        elapsed = time.perf_counter() - started if started is not None else 0.0
        self.stage_times.append((name, elapsed, success))
        self.update_success(success)

    def update_success(self, success: bool):
        self.total_items += 1
        if success:
            self.successful_items += 1
        else:
            self.failed_items += 1

    def get_elapsed_time(self) -> Optional[str]:
        if self.start_time is None:
            return None
        return format_duration(time.perf_counter() - self.start_time)

    def get_success_rate(self) -> float:
        if self.total_items == 0:
            return 0.0
        return (self.successful_items / self.total_items) * 100

    def get_summary_dict(self) -> Dict[str, Any]:
        return {
            "operation": self.operation_name,
            "total": self.total_items,
            "successful": self.successful_items,
            "failed": self.failed_items,
            "success_rate": self.get_success_rate(),
            "elapsed_time": self.get_elapsed_time(),
        }

    def print_summary(self):
        """Print formatted statistics summary"""
        print(f"\n--- {self.operation_name.title()} Summary ---")
        for name, elapsed, success in self.stage_times:
            print(f"  {name:<24} {'[OK]' if success else '[FAILED]':<9} {format_duration(elapsed)}")
        print(f"Stages: {self.successful_items} done, {self.failed_items} failed")
        if self.start_time is not None:
            print(f"Elapsed time: {self.get_elapsed_time()}")

    def get_status_message(self) -> str:
        if self.total_items == 0:
            return "No stages run"
        if self.failed_items == 0:
            return "All stages completed successfully"
        if self.successful_items == 0:
            return "All stages failed"
        return f"Completed with {self.failed_items} failed stages"
