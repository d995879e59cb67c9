"""Long-format trace CSVs: export simulated ensembles, ingest recorded histories.

Performance file columns are ``run_id,t,agent_id,performance``; a companion
``<stem>_complexity.csv`` holds ``run_id,t,complexity``. Floats are written in
their shortest round-trip form, so export followed by ingest is exact.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import polars as pl
from numpy.typing import ArrayLike

from .dynamics import aggregate_complexity
from .errors import TraceFormatError
from .simulation import Ensemble, SimulationTrace, find_critical_index
from .storage import write_csv_atomic

logger = logging.getLogger(__name__)

PERFORMANCE_COLUMNS = ("run_id", "t", "agent_id", "performance")
COMPLEXITY_COLUMNS = ("run_id", "t", "complexity")
_INTEGER_COLUMNS = ("run_id", "t", "agent_id")


def complexity_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_complexity{path.suffix or '.csv'}")


def performance_frame(traces: Sequence[SimulationTrace]) -> pl.DataFrame:
    frames = []
    for trace in traces:
        points, agents = trace.performances.shape
        frames.append(
            pl.DataFrame(
                {
                    "run_id": np.full(points * agents, trace.run_id, dtype=np.int64),
                    "t": np.repeat(np.arange(points, dtype=np.int64), agents),
                    "agent_id": np.tile(np.arange(agents, dtype=np.int64), points),
                    "performance": trace.performances.ravel(),
                }
            )
        )
    return pl.concat(frames)


def complexity_frame(traces: Sequence[SimulationTrace]) -> pl.DataFrame:
    return pl.concat(
        pl.DataFrame(
            {
                "run_id": np.full(trace.complexity.size, trace.run_id, dtype=np.int64),
                "t": np.arange(trace.complexity.size, dtype=np.int64),
                "complexity": trace.complexity,
            }
        )
        for trace in traces
    )


def export_traces_csv(ensemble: Ensemble, path: str | Path) -> tuple[Path, Path]:
    """Write the performance file and its complexity companion; return both paths."""
    path = Path(path)
    performance = write_csv_atomic(path, performance_frame(ensemble.traces))
    complexity = write_csv_atomic(complexity_path(path), complexity_frame(ensemble.traces))
    logger.debug("exported %d runs to %s", len(ensemble.traces), path)
    return performance, complexity


def _scan_layout(path: Path) -> None:
    """Check the header and per-line field counts before handing the file to polars."""
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TraceFormatError("file is empty", line=1)
    header = tuple(lines[0].strip().split(","))
    if header != PERFORMANCE_COLUMNS:
        raise TraceFormatError(
            f"expected header {','.join(PERFORMANCE_COLUMNS)!r}, found {lines[0].strip()!r}",
            line=1,
        )
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) < 2:
        raise TraceFormatError("no data rows", line=2)
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise TraceFormatError("blank line inside data", line=number)
        fields = line.split(",")
        if len(fields) != len(PERFORMANCE_COLUMNS):
            raise TraceFormatError(
                f"expected {len(PERFORMANCE_COLUMNS)} fields, found {len(fields)}", line=number
            )


def _first_line(frame: pl.DataFrame, mask: pl.Expr) -> int | None:
    hits = frame.filter(mask)
    return int(hits["line"][0]) if hits.height else None


def _read_rows(path: Path) -> pl.DataFrame:
    try:
        raw = pl.read_csv(path, infer_schema=False).with_row_index("line", offset=2)
    except pl.exceptions.PolarsError as exc:
        raise TraceFormatError(f"unreadable trace file {path}: {exc}") from exc
    typed = raw.with_columns(
        *(pl.col(c).str.strip_chars().cast(pl.Int64, strict=False) for c in _INTEGER_COLUMNS),
        pl.col("performance").str.strip_chars().cast(pl.Float64, strict=False),
    )
    for column in PERFORMANCE_COLUMNS:
        line = _first_line(typed, pl.col(column).is_null())
        if line is not None:
            value = raw.filter(pl.col("line") == line)[column][0]
            raise TraceFormatError(f"{column} is not a valid number: {value!r}", line=line)

    line = _first_line(typed, pl.any_horizontal(pl.col(c) < 0 for c in _INTEGER_COLUMNS))
    if line is not None:
        raise TraceFormatError("run_id, t and agent_id must be nonnegative", line=line)
    line = _first_line(
        typed,
        ~pl.col("performance").is_finite()
        | (pl.col("performance") < 0.0)
        | (pl.col("performance") > 1.0),
    )
    if line is not None:
        value = typed.filter(pl.col("line") == line)["performance"][0]
        raise TraceFormatError(f"performance {value!r} outside [0, 1]", line=line)
    line = _first_line(typed, pl.struct(*_INTEGER_COLUMNS).is_duplicated())
    if line is not None:
        raise TraceFormatError("duplicate (run_id, t, agent_id) row", line=line)
    return typed


def ingest_trace_csv(
    path: str | Path,
    weights: ArrayLike | None = None,
    c_max: float | None = None,
) -> list[SimulationTrace]:
    """Read a long-format performance file into one trace per run.

    Complexity is recomputed from ``weights`` (uniform when omitted). When
    ``c_max`` is given the critical index is recovered from it; recorded
    benchmark histories usually have none.
    """
    path = Path(path)
    _scan_layout(path)
    rows = _read_rows(path)

    traces = []
    n_benchmarks: int | None = None
    for (run_id,), run in rows.partition_by("run_id", maintain_order=True, as_dict=True).items():
        points = int(run["t"].max()) + 1
        agents = int(run["agent_id"].max()) + 1
        if run.height != points * agents:
            raise TraceFormatError(
                f"run {run_id}: time steps must run 0..{points - 1} with agents "
                f"0..{agents - 1} at every step; found {run.height} of {points * agents} rows",
                line=int(run["line"].max()),
            )
        if n_benchmarks is None:
            n_benchmarks = agents
        elif agents != n_benchmarks:
            raise TraceFormatError(
                f"run {run_id} has {agents} agents, earlier runs have {n_benchmarks}",
                line=int(run["line"].min()),
            )
        performances = (
            run.sort("t", "agent_id")["performance"].to_numpy().reshape(points, agents).copy()
        )
        run_weights = np.ones(agents) if weights is None else np.asarray(weights, dtype=float)
        complexity = np.asarray(aggregate_complexity(performances, run_weights), dtype=float)
        traces.append(
            SimulationTrace(
                run_id=int(run_id),
                performances=performances,
                complexity=complexity,
                critical_index=None if c_max is None else find_critical_index(complexity, c_max),
                seed=None,
            )
        )
    logger.debug("ingested %d runs from %s", len(traces), path)
    return traces
