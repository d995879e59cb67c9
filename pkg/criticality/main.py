"""Command-line entry point: simulate, optimize, evaluate and detect.

Usage:
    criticality simulate --config default --out results/sim
    criticality optimize --config my.json --out results/opt [--traces results/sim/traces.csv]
    criticality evaluate --config default --seed 7 --out results/eval --workers 4
    criticality detect --trace history.csv --theta 0.0012
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import DEFAULT_CONFIG, ExperimentConfig, resolve_config
from .detection import DetectionDataset, detect_critical_time, sgd_optimize
from .errors import CriticalityError
from .experiment import TRAIN_STREAM, run_experiment
from .plots import emit_plot_data, panels_from_report
from .report import format_summary, write_report
from .simulation import Ensemble, derive_seed, run_ensemble
from .statistics import derivative_series
from .storage import MANIFEST_NAME, RunManifest, write_json_atomic, write_manifest
from .traces import export_traces_csv, ingest_trace_csv

logger = logging.getLogger(__name__)

TRACES_NAME = "traces.csv"
OPTIMIZER_NAME = "optimizer.json"
DETECTIONS_NAME = "detections.json"
PLOT_DIR = "plot_data"


def _common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument(
        "--config",
        default=DEFAULT_CONFIG,
        help=f"JSON config file, a run manifest, or '{DEFAULT_CONFIG}' (default)",
    )
    parser.add_argument("--seed", type=int, help="Override experiment.master_seed")
    parser.add_argument(
        "--out", type=Path, required=out_required, help="Output directory for written files"
    )
    parser.add_argument("--verbose", action="store_true", help="Log progress to stderr")


def _ensemble_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, help="Benchmark count (default: dynamics.n_benchmarks)")
    parser.add_argument("--runs", type=int, help="Run count (default: experiment.train_runs)")
    parser.add_argument("--steps", type=int, help="Time steps (default: experiment.steps)")
    parser.add_argument(
        "--workers", type=int, help="Worker processes (default: experiment.workers)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="criticality",
        description="Simulate benchmark-agent systems and detect their critical transition",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Simulate an ensemble and export trace CSVs")
    _common(simulate)
    _ensemble_options(simulate)

    optimize = sub.add_parser("optimize", help="Calibrate the detection threshold")
    _common(optimize)
    _ensemble_options(optimize)
    optimize.add_argument(
        "--traces", type=Path, help="Train on an exported simulated trace CSV instead"
    )

    evaluate = sub.add_parser("evaluate", help="Run the full train/test experiment")
    _common(evaluate)
    evaluate.add_argument("--workers", type=int, help="Worker processes")

    detect = sub.add_parser("detect", help="Detect criticality in a recorded trace CSV")
    _common(detect, out_required=False)
    detect.add_argument("--trace", type=Path, required=True, help="Long-format trace CSV")
    detect.add_argument("--theta", type=float, required=True, help="Detection threshold")
    return parser


def _simulated_ensemble(config: ExperimentConfig, args: argparse.Namespace) -> Ensemble:
    exp = config.experiment
    n = args.n or config.dynamics.n_benchmarks
    params = config.dynamics_params(n)
    return run_ensemble(
        params,
        args.runs or exp.train_runs,
        args.steps or exp.steps,
        derive_seed(exp.master_seed, TRAIN_STREAM),
        workers=args.workers or exp.workers,
    )


def _new_manifest(command: str, config: ExperimentConfig, argv: Sequence[str]) -> RunManifest:
    return RunManifest(
        command=command,
        master_seed=config.experiment.master_seed,
        config=config.echo(),
        argv=["criticality", *argv],
    )


def _finish(out: Path, manifest: RunManifest, written: Sequence[Path]) -> None:
    for path in written:
        manifest.add_file(path, out)
    write_manifest(out, manifest)
    logger.info("wrote %d files and %s to %s", len(written), MANIFEST_NAME, out)


def cmd_simulate(config: ExperimentConfig, args: argparse.Namespace, manifest: RunManifest) -> None:
    ensemble = _simulated_ensemble(config, args)
    written = export_traces_csv(ensemble, args.out / TRACES_NAME)
    if ensemble.excluded_count:
        manifest.notes.append(f"{ensemble.excluded_count} run(s) never reached criticality")
    _finish(args.out, manifest, written)
    print(
        f"Simulated {len(ensemble.traces)} runs "
        f"({ensemble.excluded_count} never critical) -> {written[0]}"
    )


def cmd_optimize(config: ExperimentConfig, args: argparse.Namespace, manifest: RunManifest) -> None:
    aggregation = config.detector.sd_aggregation
    if args.traces is not None:
        traces = ingest_trace_csv(args.traces, config.dynamics.weights, config.dynamics.c_max)
        manifest.notes.append(f"trained on {args.traces}")
    else:
        traces = _simulated_ensemble(config, args).traces
    dataset = DetectionDataset.from_traces(traces, aggregation)
    skipped = len(traces) - len(dataset)
    if skipped:
        manifest.notes.append(f"{skipped} run(s) never reached criticality and were excluded")

    result = sgd_optimize(dataset, config.optimizer_config(), config.detector_config())
    written = write_json_atomic(
        args.out / OPTIMIZER_NAME,
        {
            "theta_star": result.theta_star,
            "final_accuracy": result.final_accuracy,
            "iterations": result.iterations,
            "converged": result.converged,
            "initial_theta": result.initial_theta,
            "training_runs": len(dataset),
            "excluded_runs": skipped,
            "trajectory": [{"theta": t, "loss": v} for t, v in result.trajectory],
        },
    )
    _finish(args.out, manifest, [written])
    print(f"theta* = {result.theta_star!r}")
    print(
        f"  training accuracy {100 * result.final_accuracy:.1f}% over {len(dataset)} runs, "
        f"{result.iterations} iteration(s), converged={result.converged}"
    )


def cmd_evaluate(config: ExperimentConfig, args: argparse.Namespace, manifest: RunManifest) -> None:
    report = run_experiment(config, workers=args.workers)
    written = [write_report(args.out, report)]
    plot_files, notes = emit_plot_data(args.out / PLOT_DIR, panels_from_report(report, config))
    written.extend(plot_files)
    manifest.notes.extend(notes)
    for summary in report.configurations:
        manifest.notes.extend(
            f"n={summary.n_benchmarks} repetition={f.repetition}: {f.reason}"
            for f in summary.failures
        )
    _finish(args.out, manifest, written)
    print(format_summary(report))
    print(f"\nReport: {written[0]}")


def cmd_detect(config: ExperimentConfig, args: argparse.Namespace, manifest: RunManifest) -> None:
    detector = config.detector_config(theta=args.theta)
    detections = []
    for trace in ingest_trace_csv(args.trace, config.dynamics.weights):
        found = detect_critical_time(
            derivative_series(trace, config.detector.sd_aggregation), detector
        )
        detections.append({"run_id": trace.run_id, "detected_t": found})
        status = "no detection" if found is None else f"detected at t={found}"
        print(f"run {trace.run_id}: {status}")
    if args.out is not None:
        written = write_json_atomic(
            args.out / DETECTIONS_NAME,
            {"theta": args.theta, "burn_in": detector.burn_in, "runs": detections},
        )
        _finish(args.out, manifest, [written])


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "detect": cmd_detect,
}


def cli_dispatch(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; return the process exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        config = resolve_config(args.config).with_seed(args.seed)
        manifest = _new_manifest(args.command, config, argv)
        COMMANDS[args.command](config, args, manifest)
    except (CriticalityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":  # pragma: no cover - manual utility
    main()
