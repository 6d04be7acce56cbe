#!/usr/bin/env python3
"""
LFME Lab CLI

Multi-function CLI with subcommands for data generation, imbalance metrics,
stage-wise training, reports, seed sweeps and the gradient check.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .cli_helpers import (float_list, generator_overrides, int_list, positive_int, print_completion_info,
                          print_distribution_summary, print_json, print_startup_info)
from .config import load_config, resolve_run_dir
from .distribution import GeneratorSpec, generate, load_manifest, save_dataset, save_manifest
from .errors import LfmeError, MissingArtifactError
from .imbalance_metrics import (comparison_to_json, format_comparison_table, longtailness_comparison,
                                split_by_quantiles, split_by_thresholds)
from .neuralcore import GradCheckConfig, grad_check
from .shared_helpers import setup_logging, validate_file_path
from .systems.experiment_system import ExperimentSystem
from .systems.report_system import ReportSystem
from .systems.sweep_system import SWEEP_NAME, SweepSystem
from .training import ABLATIONS, ARM_PRESETS, arm_from_ablations, resolve_arm

logger = logging.getLogger("lfme_lab")


def _experiment_system(args) -> ExperimentSystem:
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config = config.with_seed(args.seed)
    run_dir = resolve_run_dir(config, args.run_dir)
    system = ExperimentSystem(config, run_dir, show_progress=args.verbose)
    system.prepare()
    return system


def gen_data_main(args):
    """Handle gen-data subcommand"""
    spec = GeneratorSpec()
    if args.config:
        config = load_config(args.config)
        spec = config.data.generator_spec(config.seed)
    spec = generator_overrides(args, spec)
    spec.validate()

    dataset, dist = generate(spec)
    output = Path(args.output)
    manifest = Path(args.manifest) if args.manifest else output.with_name(f"{output.stem}_manifest.csv")
    for path in (output, manifest):
        path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, output)
    save_manifest(dist, manifest)

    print_distribution_summary(dist, spec)
    print(f"Wrote {output}")
    print(f"Wrote {manifest}")
    return 0


def metrics_main(args):
    """Handle metrics subcommand"""
    path = validate_file_path(args.manifest)
    if path is None:
        raise MissingArtifactError(f"manifest not found: {args.manifest}")
    dist = load_manifest(path)

    split = None
    if args.thresholds is not None:
        split = split_by_thresholds(dist, args.thresholds)
    elif args.quantiles:
        split = split_by_quantiles(dist, args.quantiles)

    rows = longtailness_comparison(dist, split, args.log_base)
    print(comparison_to_json(rows) if args.json else format_comparison_table(rows))
    return 0


def train_experts_main(args):
    """Handle train-experts subcommand"""
    system = _experiment_system(args)
    dataset = system.dataset()
    split = system.compute_metrics(dataset)
    bundle = system.train_experts(dataset, split)
    for name, accuracy in zip(split.names, bundle.expert_accuracies):
        print(f"Expert {name:<8} val accuracy {100 * accuracy:6.2f}")
    system.build_report()
    print(f"Wrote {system.experts_dir}")
    return 0


def train_student_main(args):
    """Handle train-student subcommand"""
    system = _experiment_system(args)
    if args.arm and args.ablate:
        raise LfmeError("use either --arm or --ablate, not both")
    arm = resolve_arm(args.arm) if args.arm else arm_from_ablations(args.ablate or [])
    bundle = system.load_experts() if arm.needs_experts else None
    dataset = system.dataset()
    split = system.split()
    report = system.train_arm(arm, dataset, split, bundle)
    system.build_report()
    print(f"{arm.label}: test accuracy {100 * report.final_test.all:.2f}")
    print(f"Wrote {system.report_path}")
    return 0


def train_plain_main(args):
    """Handle train-plain subcommand"""
    system = _experiment_system(args)
    arm = ARM_PRESETS["plain_instance" if args.sampler == "instance" else "plain_balanced"]
    dataset = system.dataset()
    split = system.split()
    report = system.train_arm(arm, dataset, split)
    system.build_report()
    print(f"{arm.label}: test accuracy {100 * report.final_test.all:.2f}")
    print(f"Wrote {system.report_path}")
    return 0


def run_main(args):
    """Handle run subcommand"""
    system = _experiment_system(args)
    print_startup_info("LFME EXPERIMENT", [
        ("Run directory", system.run_dir),
        ("Seed", system.config.seed),
        ("Arms", ", ".join(system.config.arms)),
    ])
    system.statistics_tracker.start_timing()
    system.run_experiment()
    print(ReportSystem(system.run_dir).format_table())
    print_completion_info(system.statistics_tracker, True, [system.report_path])
    return 0


def report_main(args):
    """Handle report subcommand"""
    reports = ReportSystem(args.run, args.compare or (), args.baseline)
    rows = reports.rows()
    if args.json:
        print_json(rows)
    else:
        print(reports.format_table(rows))
        for line in reports.trajectory_summaries():
            print(line)
    if args.csv:
        reports.write_csv(args.csv, rows)
        print(f"Wrote {args.csv}")
    return 0


def sweep_main(args):
    """Handle sweep subcommand"""
    config = load_config(args.config)
    run_root = resolve_run_dir(config, args.run_root)
    print_startup_info("LFME SEED SWEEP", [
        ("Run root", run_root),
        ("Seeds", ", ".join(str(s) for s in args.seeds)),
        ("Workers", args.workers),
    ])
    sweep = SweepSystem(config, args.seeds, run_root, args.workers, show_monitor=not args.quiet)
    summary = sweep.run()
    for name, arm in summary["arms"].items():
        print(f"{name:<18} mean test accuracy {100 * arm['test_all']:6.2f}  ({arm['runs']} runs)")
    for name, check in summary["checks"].items():
        status = "SKIPPED" if "skipped" in check else "PASS" if check["passed"] else "FAIL"
        print(f"Check {name:<18} {status}")
    print_completion_info(sweep.statistics_tracker, True, [run_root / SWEEP_NAME])
    return 0


def grad_check_main(args):
    """Handle grad-check subcommand"""
    config = GradCheckConfig(kd_t2_scaling=args.t2_scaling)
    result = grad_check(config, trials=args.trials, tolerance=args.tolerance, seed=args.seed)
    if args.json:
        print_json(result.to_dict())
    else:
        print(f"Trials: {result.trials}")
        print(f"Max relative error: {result.max_relative_error:.3e} (tolerance {result.tolerance:.0e})")
        print(f"Result: {'PASS' if result.passed else 'FAIL'}")
    return 0 if result.passed else 1


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging and progress bars")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="lfme",
        description="LFME Lab - long-tailed classification with multiple experts",
        epilog="Use 'lfme <command> --help' for more information on a specific command."
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    gen = subparsers.add_parser(
        "gen-data", parents=[common],
        help="Generate a synthetic long-tailed dataset and its manifest",
        epilog="Example: lfme gen-data --classes 30 --profile exp --imbalance 100 --seed 1 --output data/lt.csv"
    )
    gen.add_argument("--output", "-o", required=True, help="Dataset file to write")
    gen.add_argument("--manifest", help="Manifest file (default: <output>_manifest.csv)")
    gen.add_argument("--config", help="Take data settings and seed from a run config")
    gen.add_argument("--classes", type=positive_int, help="Number of classes")
    gen.add_argument("--profile", help="Cardinality profile: exp or pareto")
    gen.add_argument("--imbalance", type=float, help="Imbalance ratio n_max / n_min")
    gen.add_argument("--max-count", type=positive_int, help="Largest class count n_max")
    gen.add_argument("--dim", type=positive_int, help="Feature dimension")
    gen.add_argument("--separation", type=float, help="Distance of class means from the origin")
    gen.add_argument("--val-per-class", type=positive_int, help="Validation instances per class")
    gen.add_argument("--test-per-class", type=positive_int, help="Test instances per class")
    gen.add_argument("--seed", type=int, help="Generator seed")

    metrics = subparsers.add_parser(
        "metrics", parents=[common],
        help="Longtailness table for a class-count manifest",
        epilog="Example: lfme metrics --manifest imagenet_lt.csv --thresholds 20,100 --log-base 2"
    )
    metrics.add_argument("--manifest", required=True, help="class_id,count file")
    split_group = metrics.add_mutually_exclusive_group()
    split_group.add_argument("--thresholds", type=int_list, help="Band thresholds, e.g. 20,100")
    split_group.add_argument("--quantiles", type=float_list, help="Cardinality quantiles, e.g. 0.33,0.66")
    metrics.add_argument("--log-base", default="natural", choices=["nat", "natural", "2", "base2"],
                         help="Logarithm base of I_KL (default: natural)")
    metrics.add_argument("--json", action="store_true", help="Print JSON instead of a table")

    stage_help = {
        "train-experts": "Train one expert per cardinality subset",
        "train-student": "Train the distilled student (needs experts)",
        "train-plain": "Train the plain cross-entropy baseline",
        "run": "Run the whole pipeline with the configured arms",
    }
    stages = {}
    for name, text in stage_help.items():
        stage = subparsers.add_parser(name, parents=[common], help=text,
                                      epilog=f"Example: lfme {name} --config lfme.yaml")
        stage.add_argument("--config", help="YAML run config (default: built-in defaults)")
        stage.add_argument("--run-dir", help="Run directory (default: output_dir under $LFME_OUTPUT_ROOT)")
        stage.add_argument("--seed", type=int, help="Override the config seed")
        stages[name] = stage
    stages["train-student"].add_argument("--arm", choices=list(ARM_PRESETS), help="Train a named arm")
    stages["train-student"].add_argument("--ablate", action="append", choices=list(ABLATIONS),
                                         help="Switch off a part of the full method (repeatable)")
    stages["train-plain"].add_argument("--sampler", choices=["instance", "balanced"], default="balanced",
                                       help="Batch sampler (default: balanced)")

    report = subparsers.add_parser(
        "report", parents=[common],
        help="Accuracy tables for run directories",
        epilog="Example: lfme report --run runs/plain --compare runs/lfme"
    )
    report.add_argument("--run", required=True, help="Run directory")
    report.add_argument("--compare", nargs="+", help="Further run directories to compare")
    report.add_argument("--baseline", help="Arm of the first run that deltas are taken against")
    report.add_argument("--csv", help="Also write the rows to a CSV file")
    report.add_argument("--json", action="store_true", help="Print JSON rows")

    sweep = subparsers.add_parser(
        "sweep", parents=[common],
        help="Run the pipeline for several seeds in parallel",
        epilog="Example: lfme sweep --config lfme.yaml --seeds 1,2,3,4,5 --workers 2"
    )
    sweep.add_argument("--config", help="YAML run config")
    sweep.add_argument("--seeds", type=int_list, required=True, help="Comma-separated seeds")
    sweep.add_argument("--workers", type=positive_int, default=1, help="Parallel workers (default: 1)")
    sweep.add_argument("--run-root", help="Directory holding one run per seed")

    check = subparsers.add_parser(
        "grad-check", parents=[common],
        help="Compare analytic gradients with central differences",
        epilog="Example: lfme grad-check --trials 20"
    )
    check.add_argument("--trials", type=positive_int, default=20, help="Random configurations (default: 20)")
    check.add_argument("--tolerance", type=float, default=1e-5, help="Max relative error (default: 1e-5)")
    check.add_argument("--seed", type=int, default=0, help="Seed for the random problems")
    check.add_argument("--t2-scaling", action="store_true", help="Scale the KD term by T^2")
    check.add_argument("--json", action="store_true", help="Print the report as JSON")
    return parser


HANDLERS = {
    "gen-data": gen_data_main,
    "metrics": metrics_main,
    "train-experts": train_experts_main,
    "train-student": train_student_main,
    "train-plain": train_plain_main,
    "run": run_main,
    "report": report_main,
    "sweep": sweep_main,
    "grad-check": grad_check_main,
}


def lfme_cli(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point for lfme command"""
    parser = _build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 2

    setup_logging(verbose=args.verbose, quiet=args.quiet)
    try:
        return HANDLERS[args.command](args)
    except KeyboardInterrupt:
        print("\n[OK] Interrupted by user")
        return 130
    except LfmeError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(lfme_cli())
