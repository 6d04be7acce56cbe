"""
Stateful pipeline systems: experiment runs, report rendering and seed sweeps.
"""

from .experiment_system import ExperimentSystem, run_experiment
from .report_system import ReportSystem, load_run_report
from .sweep_system import SweepSystem, summarize_sweep

__all__ = ["ExperimentSystem", "ReportSystem", "SweepSystem", "load_run_report",
           "run_experiment", "summarize_sweep"]
