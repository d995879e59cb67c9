"""Evaluation report document and the printed accuracy summary."""

from __future__ import annotations

from pathlib import Path

from .experiment import EvaluationReport, Summary
from .storage import write_json_atomic

REPORT_NAME = "report.json"

# Key names of the report document, frozen for downstream readers
REPORT_SCHEMA = {
    "report": ["tool_version", "master_seed", "protocol", "config", "configurations"],
    "configuration": [
        "n_benchmarks",
        "train_accuracy",
        "test_accuracy",
        "train_minus_test",
        "theta_star",
        "excluded_runs",
        "variability_dominance",
        "histogram",
        "repetitions",
        "failures",
    ],
    "accuracy": ["mean", "sd"],
    "repetition": [
        "repetition",
        "seed",
        "train_accuracy",
        "test_accuracy",
        "theta_star",
        "iterations",
        "converged",
        "train_runs",
        "test_runs",
        "excluded_train_runs",
        "excluded_test_runs",
        "detecting_test_runs",
        "variability_dominance",
        "histogram",
    ],
    "histogram": ["bin_edges", "counts", "window_start", "window_end", "in_window", "total"],
    "failure": ["repetition", "seed", "reason"],
}


def write_report(out_dir: str | Path, report: EvaluationReport) -> Path:
    return write_json_atomic(Path(out_dir) / REPORT_NAME, report.to_dict())


def _percent(summary: Summary | None) -> str:
    if summary is None:
        return "n/a"
    return f"{100 * summary.mean:.1f} ± {100 * summary.sd:.1f}"


def format_summary(report: EvaluationReport) -> str:
    """Accuracy table in percent, one row per benchmark count."""
    header = f"{'benchmarks':>10}  {'train accuracy (%)':>18}  {'test accuracy (%)':>18}"
    rows = [header, "-" * len(header)]
    for summary in report.configurations:
        rows.append(
            f"{summary.n_benchmarks:>10}  {_percent(summary.train_accuracy):>18}  "
            f"{_percent(summary.test_accuracy):>18}"
        )
        if summary.failures:
            rows.append(f"{'':>10}  {len(summary.failures)} repetition(s) had no critical run")
    return "\n".join(rows)
