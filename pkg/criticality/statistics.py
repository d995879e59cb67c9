"""Alignment at the critical point and variability statistics.

S(t) summarises how spread out a run's performances are at time t and S'(t) is
its first difference. Three readings are available:

- ``agent_mean``: population SD of each agent's series over the expanding
  prefix [0, t], averaged across agents
- ``complexity``: the same expanding SD taken over C(t)
- ``cross_section``: population SD across the agents at time t

All live on absolute time indices: S starts at t = 1 and S' at t = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import polars as pl
from numpy.typing import ArrayLike, NDArray

from .database import run_query
from .errors import EmptyAlignmentError, ValidationError
from .simulation import Ensemble, SimulationTrace


class SDAggregation(str, Enum):
    """How S(t) summarises the spread of a run's performances."""

    AGENT_MEAN = "agent_mean"  # mean of each agent's expanding SD
    COMPLEXITY = "complexity"  # expanding SD of C(t)
    CROSS_SECTION = "cross_section"  # SD across agents at each t


@dataclass(frozen=True, eq=False)
class SDSeries:
    values: NDArray[np.float64]
    start_index: int

    def __len__(self) -> int:
        return self.values.size

    @property
    def indices(self) -> NDArray[np.int64]:
        return np.arange(self.start_index, self.start_index + self.values.size)


@dataclass(frozen=True, eq=False)
class DerivativeSeries:
    values: NDArray[np.float64]
    start_index: int

    def __len__(self) -> int:
        return self.values.size

    @property
    def indices(self) -> NDArray[np.int64]:
        return np.arange(self.start_index, self.start_index + self.values.size)


@dataclass(frozen=True, eq=False)
class AlignedEnsemble:
    """Critical-reaching runs re-indexed so each run's tau sits at relative time 0."""

    traces: tuple[SimulationTrace, ...]
    pre_span: int
    post_span: int
    excluded_count: int

    @property
    def relative_times(self) -> NDArray[np.int64]:
        return np.arange(-self.pre_span, self.post_span + 1)

    def absolute_index(self, trace_index: int, relative_t: int) -> int:
        if not -self.pre_span <= relative_t <= self.post_span:
            raise ValidationError(
                f"relative time {relative_t} outside [{-self.pre_span}, {self.post_span}]"
            )
        return self.traces[trace_index].critical_index + relative_t

    def performance_at(self, trace_index: int, relative_t: int) -> NDArray[np.float64]:
        trace = self.traces[trace_index]
        return trace.performances[self.absolute_index(trace_index, relative_t)]

    def _window(self, trace: SimulationTrace) -> slice:
        tau = trace.critical_index
        return slice(tau - self.pre_span, tau + self.post_span + 1)

    def complexity_matrix(self) -> NDArray[np.float64]:
        """Aligned C(t), one row per run, one column per relative time."""
        return np.stack([t.complexity[self._window(t)] for t in self.traces])

    def performance_cube(self) -> NDArray[np.float64]:
        """Aligned performances with shape (runs, relative times, agents)."""
        return np.stack([t.performances[self._window(t)] for t in self.traces])


@dataclass(frozen=True, eq=False)
class EnsembleStatistics:
    relative_t: NDArray[np.int64]
    mean: NDArray[np.float64]
    variance: NDArray[np.float64]
    agent_variance: NDArray[np.float64]
    mean_of_variances: NDArray[np.float64]


def align_ensemble(ensemble: Ensemble) -> AlignedEnsemble:
    retained = ensemble.critical_traces
    if not retained:
        raise EmptyAlignmentError(
            f"none of {len(ensemble.traces)} runs reached criticality "
            f"within {ensemble.steps} steps"
        )
    return AlignedEnsemble(
        traces=retained,
        pre_span=min(t.critical_index for t in retained),
        post_span=min(t.steps - t.critical_index for t in retained),
        excluded_count=ensemble.excluded_count,
    )


def expanding_sd(series: ArrayLike, t: int) -> float:
    """Population SD of series[0..t] inclusive."""
    values = np.asarray(series, dtype=np.float64)
    if t < 1:
        raise ValidationError(f"expanding SD needs t >= 1, got {t}")
    if t >= values.size:
        raise ValidationError(f"index {t} beyond series of length {values.size}")
    return float(np.std(values[: t + 1]))


def _expanding_sd_columns(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    """Expanding population SD down each column (Welford's update)."""
    out = np.zeros_like(matrix)
    mean = matrix[0].copy()
    m2 = np.zeros(matrix.shape[1])
    for t in range(1, matrix.shape[0]):
        delta = matrix[t] - mean
        mean += delta / (t + 1)
        m2 += delta * (matrix[t] - mean)
        out[t] = np.sqrt(np.maximum(m2, 0.0) / (t + 1))
    return out


def system_sd_series(
    trace: SimulationTrace, aggregation: SDAggregation = SDAggregation.AGENT_MEAN
) -> SDSeries:
    if trace.performances.shape[0] < 2:
        raise ValidationError("trace needs at least two time points")
    aggregation = SDAggregation(aggregation)
    if aggregation is SDAggregation.COMPLEXITY:
        sd = _expanding_sd_columns(trace.complexity[:, None])[:, 0]
    elif aggregation is SDAggregation.CROSS_SECTION:
        sd = trace.performances.std(axis=1)
    else:
        sd = _expanding_sd_columns(trace.performances).mean(axis=1)
    return SDSeries(values=sd[1:], start_index=1)


def sd_derivative(sd: SDSeries) -> DerivativeSeries:
    if len(sd) < 2:
        raise ValidationError("derivative needs at least two SD values")
    return DerivativeSeries(values=np.diff(sd.values), start_index=sd.start_index + 1)


def derivative_series(
    trace: SimulationTrace, aggregation: SDAggregation = SDAggregation.AGENT_MEAN
) -> DerivativeSeries:
    return sd_derivative(system_sd_series(trace, aggregation))


def variability_shift(
    trace: SimulationTrace,
    span: int = 20,
    aggregation: SDAggregation = SDAggregation.AGENT_MEAN,
) -> tuple[float, float]:
    """Mean |S'| over relative times [-span, 0) and (0, +span].

    A window with no defined derivative yields NaN.
    """
    if trace.critical_index is None:
        raise ValidationError(f"run {trace.run_id} never reached criticality")
    derivative = derivative_series(trace, aggregation)
    relative = derivative.indices - trace.critical_index
    magnitude = np.abs(derivative.values)
    before = magnitude[(relative >= -span) & (relative < 0)]
    after = magnitude[(relative > 0) & (relative <= span)]
    return (
        float(before.mean()) if before.size else math.nan,
        float(after.mean()) if after.size else math.nan,
    )


def _run_ids(aligned: AlignedEnsemble) -> NDArray[np.int64]:
    return np.array([t.run_id for t in aligned.traces], dtype=np.int64)


def aligned_complexity_frame(aligned: AlignedEnsemble) -> pl.DataFrame:
    matrix = aligned.complexity_matrix()
    runs, span = matrix.shape
    return pl.DataFrame(
        {
            "run_id": np.repeat(_run_ids(aligned), span),
            "relative_t": np.tile(aligned.relative_times, runs),
            "complexity": matrix.ravel(),
        }
    )


def aligned_performance_frame(aligned: AlignedEnsemble) -> pl.DataFrame:
    cube = aligned.performance_cube()
    runs, span, agents = cube.shape
    return pl.DataFrame(
        {
            "run_id": np.repeat(_run_ids(aligned), span * agents),
            "relative_t": np.tile(np.repeat(aligned.relative_times, agents), runs),
            "agent_id": np.tile(np.arange(agents), runs * span),
            "performance": cube.ravel(),
        }
    )


def ensemble_statistics(aligned: AlignedEnsemble) -> EnsembleStatistics:
    """Per relative time: cross-run mean/variance of C and per-agent variances."""
    if not aligned.traces:
        raise EmptyAlignmentError("aligned ensemble holds no runs")
    complexity = run_query(
        "queries/ensemble_statistics.sql",
        aligned_complexity=aligned_complexity_frame(aligned),
    )
    agents = run_query(
        "queries/agent_variance.sql",
        aligned_performance=aligned_performance_frame(aligned),
    )
    span = aligned.relative_times.size
    n = aligned.traces[0].n_benchmarks
    return EnsembleStatistics(
        relative_t=complexity["relative_t"].to_numpy(),
        mean=complexity["mean_complexity"].to_numpy(),
        variance=complexity["complexity_variance"].to_numpy(),
        agent_variance=agents["variance"].to_numpy().reshape(span, n),
        mean_of_variances=agents["mean_of_variances"].to_numpy().reshape(span, n)[:, 0],
    )
