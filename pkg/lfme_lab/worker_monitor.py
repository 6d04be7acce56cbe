#!/usr/bin/env python3
"""
Worker Activity Monitor

Thread-safe status board for the parallel seed sweep: each worker slot holds
a short status line and a state, printed periodically while the sweep runs.
"""

import sys
import threading
import time
from enum import Enum
from typing import Dict, Optional, TextIO


class WorkerState(Enum):
    IDLE = "IDLE"
    ACTIVE = "ACTIVE"
    COMPLETED = "COMPLETED"
    ERROR = "ERROR"


_STATE_TAGS = {
    WorkerState.ACTIVE: "[ACTIVE]",
    WorkerState.COMPLETED: "[OK]",
    WorkerState.ERROR: "[ERROR]",
    WorkerState.IDLE: "[IDLE]",
}


class WorkerMonitor:
    """
    Status slots for workers 1..max_workers.

    With enabled=False the board still tracks state (for summaries) but prints
    nothing.
    """

    def __init__(self, max_workers: int = 1, interval: float = 2.0, enabled: bool = True,
                 stream: Optional[TextIO] = None):
        self.max_workers = max_workers
        self.interval = interval
        self.enabled = enabled
        self.stream = stream or sys.stderr
        self._lock = threading.Lock()
        self._workers: Dict[int, Dict[str, object]] = {
            i: {"status": "IDLE", "state": WorkerState.IDLE, "last_update": time.time()}
            for i in range(1, max_workers + 1)
        }
        self._display_active = False
        self._display_thread: Optional[threading.Thread] = None
        self._stop_display = threading.Event()

    def update_worker(self, worker_id: int, status: str, state: WorkerState = WorkerState.ACTIVE):
        if worker_id not in self._workers:
            raise KeyError(f"worker {worker_id} not found (max: {self.max_workers})")
        with self._lock:
            self._workers[worker_id].update(status=status, state=state, last_update=time.time())

    def set_worker_completed(self, worker_id: int, message: str = "done"):
        self.update_worker(worker_id, message, WorkerState.COMPLETED)

    def set_worker_error(self, worker_id: int, error_message: str):
        self.update_worker(worker_id, error_message, WorkerState.ERROR)

    def start_display(self):
        if self._display_active or not self.enabled:
            return
        self._display_active = True
        self._stop_display.clear()
        print("\n=== WORKER ACTIVITY ===", file=self.stream)
        self._display_thread = threading.Thread(target=self._display_loop, daemon=True)
        self._display_thread.start()

    def stop_display(self):
        if not self._display_active:
            return
        self._stop_display.set()
        if self._display_thread:
            self._display_thread.join(timeout=self.interval + 1.0)
        self._display_active = False
        self._display_workers()
        print("=" * 23, file=self.stream)

    def _display_loop(self):
        while not self._stop_display.wait(self.interval):
            self._display_workers()

    def _display_workers(self):
        current_time = time.strftime("%H:%M:%S")
        with self._lock:
            lines = []
            for worker_id in range(1, self.max_workers + 1):
                data = self._workers[worker_id]
                status = str(data["status"]).replace("\n", " ")
                if len(status) > 40:
                    status = status[:37] + "..."
                lines.append(f"W{worker_id}:{status} {_STATE_TAGS[data['state']]} | {current_time}")
        print("\n".join(lines), file=self.stream)
        print("-" * 60, file=self.stream)

    def get_summary(self) -> Dict[str, int]:
        summary = {state.name: 0 for state in WorkerState}
        with self._lock:
            for data in self._workers.values():
                summary[data["state"].name] += 1
        return summary

    def __enter__(self):
        self.start_display()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop_display()
