"""Plot-ready CSV series for the four figure families.

Rendering is left to the research notebook; this module only writes data:
aligned complexity, cross-run variances, SD-derivative trajectories and the
detection-time histogram, plus a ``schema.json`` sidecar describing them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import polars as pl
from numpy.typing import ArrayLike

from .config import ExperimentConfig
from .database import run_query
from .errors import EmptyAlignmentError
from .experiment import (
    ConfigurationSummary,
    DetectionHistogram,
    EvaluationReport,
    repetition_ensembles,
)
from .report import REPORT_SCHEMA
from .simulation import Ensemble
from .statistics import (
    AlignedEnsemble,
    EnsembleStatistics,
    SDAggregation,
    align_ensemble,
    derivative_series,
    ensemble_statistics,
)
from .storage import write_csv_atomic, write_json_atomic

logger = logging.getLogger(__name__)

SCHEMA_NAME = "schema.json"

PLOT_SCHEMA = {
    "complexity.csv": {
        "columns": ["n_benchmarks", "kind", "run_id", "relative_t", "value"],
        "kinds": {
            "run": "aligned C(t) of one run",
            "mean": "cross-run mean of C(t)",
            "c_max": "criticality threshold line",
        },
    },
    "variance.csv": {
        "columns": ["n_benchmarks", "kind", "agent_id", "relative_t", "value"],
        "kinds": {
            "agent_variance": "cross-run population variance of one agent's performance",
            "mean_of_variances": "mean of the agent variances",
            "complexity_variance": "cross-run population variance of C(t)",
        },
    },
    "derivative.csv": {
        "columns": ["n_benchmarks", "kind", "run_id", "relative_t", "value"],
        "kinds": {
            "run": "S'(t) of one run",
            "mean": "cross-run mean of S'(t) where every run is defined",
            "threshold": "calibrated threshold line",
            "critical_marker": "criticality origin; value is the mean S' there",
        },
    },
    "detection_histogram.csv": {
        "columns": ["n_benchmarks", "kind", "offset", "count", "window_start", "window_end"],
        "kinds": {
            "window": "correctness window bounds, offsets relative to tau",
            "bin": "test-run detections at offset (detected - tau), unit-width bins",
        },
    },
}

NUMBER_FORMAT = (
    "decimal floats in shortest round-trip form (exact for IEEE-754 doubles); "
    "empty cells are nulls; relative_t is 0 at the first step with C(t) > c_max"
)

_SERIES_SCHEMA = {
    "n_benchmarks": pl.Int64,
    "kind": pl.String,
    "id": pl.Int64,
    "relative_t": pl.Int64,
    "value": pl.Float64,
}


@dataclass(frozen=True, eq=False)
class FigurePanel:
    """Everything plotted for one benchmark count."""

    n_benchmarks: int
    c_max: float
    window: int
    aligned: AlignedEnsemble | None
    histogram: DetectionHistogram | None = None
    theta_star: float | None = None
    aggregation: SDAggregation = SDAggregation.AGENT_MEAN


def panel_from_ensemble(
    ensemble: Ensemble,
    config: ExperimentConfig,
    theta_star: float | None = None,
    histogram: DetectionHistogram | None = None,
) -> FigurePanel:
    try:
        aligned = align_ensemble(ensemble)
    except EmptyAlignmentError:
        aligned = None
    return FigurePanel(
        n_benchmarks=ensemble.params.n_benchmarks,
        c_max=ensemble.params.c_max,
        window=config.detector.window,
        aligned=aligned,
        histogram=histogram,
        theta_star=theta_star,
        aggregation=config.detector.sd_aggregation,
    )


def panels_from_report(report: EvaluationReport, config: ExperimentConfig) -> list[FigurePanel]:
    """Panels built from the first scored repetition's regenerated test ensemble."""
    return [_panel_for_configuration(s, config) for s in report.configurations]


def _panel_for_configuration(
    summary: ConfigurationSummary, config: ExperimentConfig
) -> FigurePanel:
    if not summary.repetitions:
        return FigurePanel(
            n_benchmarks=summary.n_benchmarks,
            c_max=config.dynamics.c_max,
            window=config.detector.window,
            aligned=None,
        )
    first = summary.repetitions[0]
    _, _, test = repetition_ensembles(summary.n_benchmarks, config, first.seed)
    return panel_from_ensemble(test, config, first.theta_star, summary.histogram)


def _series(
    n: int, kind: str, ids: ArrayLike | None, relative_t: ArrayLike, values: ArrayLike
) -> pl.DataFrame:
    relative_t = np.asarray(relative_t, dtype=np.int64)
    size = relative_t.size
    return pl.DataFrame(
        {
            "n_benchmarks": np.full(size, n, dtype=np.int64),
            "kind": [kind] * size,
            "id": [None] * size if ids is None else np.asarray(ids, dtype=np.int64),
            "relative_t": relative_t,
            "value": np.asarray(values, dtype=np.float64),
        },
        schema=_SERIES_SCHEMA,
    )


def _complexity_rows(panel: FigurePanel, stats: EnsembleStatistics) -> pl.DataFrame:
    aligned = panel.aligned
    matrix = aligned.complexity_matrix()
    runs, span = matrix.shape
    rel = aligned.relative_times
    run_ids = np.repeat([t.run_id for t in aligned.traces], span)
    n = panel.n_benchmarks
    return pl.concat(
        [
            _series(n, "run", run_ids, np.tile(rel, runs), matrix.ravel()),
            _series(n, "mean", None, stats.relative_t, stats.mean),
            _series(n, "c_max", None, rel, np.full(rel.size, panel.c_max)),
        ]
    )


def _variance_rows(panel: FigurePanel, stats: EnsembleStatistics) -> pl.DataFrame:
    span, agents = stats.agent_variance.shape
    n = panel.n_benchmarks
    return pl.concat(
        [
            _series(
                n,
                "agent_variance",
                np.tile(np.arange(agents), span),
                np.repeat(stats.relative_t, agents),
                stats.agent_variance.ravel(),
            ),
            _series(n, "mean_of_variances", None, stats.relative_t, stats.mean_of_variances),
            _series(n, "complexity_variance", None, stats.relative_t, stats.variance),
        ]
    )


def aligned_derivative_frame(
    aligned: AlignedEnsemble, aggregation: SDAggregation = SDAggregation.AGENT_MEAN
) -> pl.DataFrame:
    """S'(t) of every aligned run on relative time, clipped to the aligned span."""
    frames = []
    for trace in aligned.traces:
        derivative = derivative_series(trace, aggregation)
        relative = derivative.indices - trace.critical_index
        keep = (relative >= -aligned.pre_span) & (relative <= aligned.post_span)
        frames.append(
            pl.DataFrame(
                {
                    "run_id": np.full(int(keep.sum()), trace.run_id, dtype=np.int64),
                    "relative_t": relative[keep].astype(np.int64),
                    "derivative": derivative.values[keep],
                }
            )
        )
    return pl.concat(frames)


def _derivative_rows(panel: FigurePanel) -> pl.DataFrame:
    aligned = panel.aligned
    frame = aligned_derivative_frame(aligned, panel.aggregation)
    mean = run_query(
        "queries/derivative_mean.sql", [len(aligned.traces)], aligned_derivative=frame
    )
    rel = mean["relative_t"].to_numpy()
    values = mean["mean_derivative"].to_numpy()
    at_origin = values[rel == 0]
    marker = at_origin[:1] if at_origin.size else [np.nan]
    n = panel.n_benchmarks
    parts = [
        _series(n, "run", frame["run_id"], frame["relative_t"], frame["derivative"]),
        _series(n, "mean", None, rel, values),
        _series(n, "critical_marker", None, [0], marker),
    ]
    if panel.theta_star is not None:
        parts.append(_series(n, "threshold", None, rel, np.full(rel.size, panel.theta_star)))
    return pl.concat(parts)


def _histogram_rows(panel: FigurePanel) -> pl.DataFrame:
    histogram = panel.histogram
    offsets = list(histogram.bin_edges[:-1]) if histogram else []
    counts = list(histogram.counts) if histogram else []
    blanks = [None] * len(offsets)
    return pl.DataFrame(
        {
            "n_benchmarks": [panel.n_benchmarks] * (len(offsets) + 1),
            "kind": ["window"] + ["bin"] * len(offsets),
            "offset": [None, *offsets],
            "count": [None, *counts],
            "window_start": [0, *blanks],
            "window_end": [panel.window, *blanks],
        },
        schema={
            "n_benchmarks": pl.Int64,
            "kind": pl.String,
            "offset": pl.Int64,
            "count": pl.Int64,
            "window_start": pl.Int64,
            "window_end": pl.Int64,
        },
    )


def _frame(parts: list[pl.DataFrame], id_column: str) -> pl.DataFrame:
    return pl.concat(parts).rename({"id": id_column})


def write_schema(out_dir: str | Path) -> Path:
    return write_json_atomic(
        Path(out_dir) / SCHEMA_NAME,
        {"number_format": NUMBER_FORMAT, "files": PLOT_SCHEMA, "report": REPORT_SCHEMA},
    )


def emit_plot_data(
    out_dir: str | Path, panels: list[FigurePanel]
) -> tuple[list[Path], list[str]]:
    """Write the figure CSVs and schema sidecar.

    Panels without an aligned ensemble contribute no rows and a note instead;
    when no panel has one, no file is written. Returns (written paths, notes).
    """
    out_dir = Path(out_dir)
    notes = [
        f"n={p.n_benchmarks}: no run reached criticality; figure data omitted"
        for p in panels
        if p.aligned is None
    ]
    usable = [p for p in panels if p.aligned is not None]
    if not usable:
        return [], notes

    complexity, variance, derivative, histogram = [], [], [], []
    for panel in usable:
        stats = ensemble_statistics(panel.aligned)
        complexity.append(_complexity_rows(panel, stats))
        variance.append(_variance_rows(panel, stats))
        derivative.append(_derivative_rows(panel))
        histogram.append(_histogram_rows(panel))
        logger.debug("plot data n=%d runs=%d", panel.n_benchmarks, len(panel.aligned.traces))

    written = [
        write_csv_atomic(out_dir / "complexity.csv", _frame(complexity, "run_id")),
        write_csv_atomic(out_dir / "variance.csv", _frame(variance, "agent_id")),
        write_csv_atomic(out_dir / "derivative.csv", _frame(derivative, "run_id")),
        write_csv_atomic(out_dir / "detection_histogram.csv", pl.concat(histogram)),
        write_schema(out_dir),
    ]
    return written, notes
