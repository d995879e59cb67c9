"""Train/test evaluation protocol across system sizes and repetitions.

For every benchmark count and repetition two disjoint ensembles are generated
from seeds derived as (master_seed, n, repetition, stream); each run draws its
own volatility factors unless the config pins them. The threshold is
calibrated on the training ensemble and scored on the test ensemble.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace

import numpy as np

from .config import ExperimentConfig
from .detection import (
    NO_DETECTION,
    DetectionDataset,
    detection_accuracy,
    detection_times,
    sgd_optimize,
)
from .dynamics import DynamicsParams
from .errors import EmptyAlignmentError, ValidationError
from .simulation import Ensemble, derive_seed, run_ensemble
from .statistics import variability_shift
from .storage import get_version

logger = logging.getLogger(__name__)

TRAIN_STREAM = 0
TEST_STREAM = 1


@dataclass(frozen=True)
class DetectionHistogram:
    """Unit-width bins of (detected - tau) offsets plus the correctness window."""

    bin_edges: tuple[int, ...]
    counts: tuple[int, ...]
    window_start: int
    window_end: int

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def in_window(self) -> int:
        return sum(
            count
            for offset, count in zip(self.bin_edges[:-1], self.counts, strict=True)
            if self.window_start <= offset <= self.window_end
        )

    def count_at(self, offset: int) -> int:
        if not self.counts or not self.bin_edges[0] <= offset < self.bin_edges[-1]:
            return 0
        return self.counts[offset - self.bin_edges[0]]

    def to_dict(self) -> dict:
        return {
            "bin_edges": list(self.bin_edges),
            "counts": list(self.counts),
            "window_start": self.window_start,
            "window_end": self.window_end,
            "in_window": self.in_window,
            "total": self.total,
        }


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd}


@dataclass(frozen=True)
class RepetitionResult:
    n_benchmarks: int
    repetition: int
    seed: int
    train_accuracy: float
    test_accuracy: float
    theta_star: float
    iterations: int
    converged: bool
    detection_offsets: tuple[int, ...]
    window: int
    train_runs: int
    test_runs: int
    excluded_train: int
    excluded_test: int
    variability_dominance: float

    @property
    def histogram(self) -> DetectionHistogram:
        return detection_time_histogram(self.detection_offsets, self.window)

    def to_dict(self) -> dict:
        return {
            "repetition": self.repetition,
            "seed": self.seed,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "theta_star": self.theta_star,
            "iterations": self.iterations,
            "converged": self.converged,
            "train_runs": self.train_runs,
            "test_runs": self.test_runs,
            "excluded_train_runs": self.excluded_train,
            "excluded_test_runs": self.excluded_test,
            "detecting_test_runs": len(self.detection_offsets),
            "variability_dominance": _finite_or_none(self.variability_dominance),
            "histogram": self.histogram.to_dict(),
        }


@dataclass(frozen=True)
class RepetitionFailure:
    n_benchmarks: int
    repetition: int
    seed: int
    reason: str

    def to_dict(self) -> dict:
        return {"repetition": self.repetition, "seed": self.seed, "reason": self.reason}


@dataclass(frozen=True)
class ConfigurationSummary:
    n_benchmarks: int
    train_accuracy: Summary | None
    test_accuracy: Summary | None
    repetitions: tuple[RepetitionResult, ...]
    failures: tuple[RepetitionFailure, ...]
    histogram: DetectionHistogram

    @property
    def theta_stars(self) -> tuple[float, ...]:
        return tuple(r.theta_star for r in self.repetitions)

    @property
    def train_minus_test(self) -> float | None:
        if self.train_accuracy is None or self.test_accuracy is None:
            return None
        return self.train_accuracy.mean - self.test_accuracy.mean

    def to_dict(self) -> dict:
        dominance = [r.variability_dominance for r in self.repetitions]
        dominance = [d for d in dominance if not math.isnan(d)]
        return {
            "n_benchmarks": self.n_benchmarks,
            "train_accuracy": self.train_accuracy.to_dict() if self.train_accuracy else None,
            "test_accuracy": self.test_accuracy.to_dict() if self.test_accuracy else None,
            "train_minus_test": self.train_minus_test,
            "theta_star": list(self.theta_stars),
            "excluded_runs": {
                "train": sum(r.excluded_train for r in self.repetitions),
                "test": sum(r.excluded_test for r in self.repetitions),
            },
            "variability_dominance": float(np.mean(dominance)) if dominance else None,
            "histogram": self.histogram.to_dict(),
            "repetitions": [r.to_dict() for r in self.repetitions],
            "failures": [f.to_dict() for f in self.failures],
        }


@dataclass(frozen=True)
class EvaluationReport:
    tool_version: str
    master_seed: int
    config: dict
    protocol: dict
    configurations: tuple[ConfigurationSummary, ...]

    def configuration(self, n_benchmarks: int) -> ConfigurationSummary:
        for summary in self.configurations:
            if summary.n_benchmarks == n_benchmarks:
                return summary
        raise KeyError(n_benchmarks)

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "protocol": self.protocol,
            "config": self.config,
            "configurations": [c.to_dict() for c in self.configurations],
        }


def _finite_or_none(value: float) -> float | None:
    return None if math.isnan(value) else value


def _summarize(values: list[float]) -> Summary | None:
    """Mean and population SD; a single value has SD 0."""
    if not values:
        return None
    array = np.asarray(values, dtype=np.float64)
    return Summary(mean=float(array.mean()), sd=float(array.std()))


def detection_time_histogram(offsets: Iterable[int], window: int) -> DetectionHistogram:
    if window < 1:
        raise ValidationError(f"window must be at least 1, got {window}")
    values = np.fromiter(offsets, dtype=np.int64)
    if values.size == 0:
        return DetectionHistogram(bin_edges=(), counts=(), window_start=0, window_end=window)
    low, high = int(values.min()), int(values.max())
    counts = np.bincount(values - low, minlength=high - low + 1)
    return DetectionHistogram(
        bin_edges=tuple(range(low, high + 2)),
        counts=tuple(int(c) for c in counts),
        window_start=0,
        window_end=window,
    )


def repetition_seed(master_seed: int, n_benchmarks: int, repetition: int) -> int:
    return derive_seed(master_seed, n_benchmarks, repetition)


def repetition_ensembles(
    n_benchmarks: int, config: ExperimentConfig, seed: int
) -> tuple[DynamicsParams, Ensemble, Ensemble]:
    """System parameters plus the train and test ensembles of one repetition."""
    exp = config.experiment
    params = config.dynamics_params(n_benchmarks)
    train = run_ensemble(params, exp.train_runs, exp.steps, derive_seed(seed, TRAIN_STREAM))
    test = run_ensemble(params, exp.test_runs, exp.steps, derive_seed(seed, TEST_STREAM))
    return params, train, test


def _dominance_fraction(ensemble: Ensemble, config: ExperimentConfig) -> float:
    shifts = [
        variability_shift(trace, aggregation=config.detector.sd_aggregation)
        for trace in ensemble.critical_traces
    ]
    shifts = [(pre, post) for pre, post in shifts if not (math.isnan(pre) or math.isnan(post))]
    if not shifts:
        return math.nan
    return sum(post > pre for pre, post in shifts) / len(shifts)


def run_repetition(
    n_benchmarks: int, config: ExperimentConfig, seed: int, repetition: int = 0
) -> RepetitionResult:
    """Calibrate theta on a training ensemble and score it on a test ensemble."""
    aggregation = config.detector.sd_aggregation
    _, train, test = repetition_ensembles(n_benchmarks, config, seed)
    train_set = DetectionDataset.from_traces(train.traces, aggregation)
    test_set = DetectionDataset.from_traces(test.traces, aggregation)

    detector = config.detector_config()
    result = sgd_optimize(train_set, config.optimizer_config(), detector)
    calibrated = replace(detector, theta=result.theta_star)

    detected = detection_times(test_set, calibrated)
    offsets = tuple(
        int(d - tau)
        for d, tau in zip(detected, test_set.critical_indices, strict=True)
        if d != NO_DETECTION
    )
    return RepetitionResult(
        n_benchmarks=n_benchmarks,
        repetition=repetition,
        seed=seed,
        train_accuracy=result.final_accuracy,
        test_accuracy=detection_accuracy(test_set, calibrated),
        theta_star=result.theta_star,
        iterations=result.iterations,
        converged=result.converged,
        detection_offsets=offsets,
        window=calibrated.window,
        train_runs=len(train_set),
        test_runs=len(test_set),
        excluded_train=train.excluded_count,
        excluded_test=test.excluded_count,
        variability_dominance=_dominance_fraction(test, config),
    )


def _attempt_repetition(
    n_benchmarks: int, config: ExperimentConfig, repetition: int
) -> RepetitionResult | RepetitionFailure:
    seed = repetition_seed(config.experiment.master_seed, n_benchmarks, repetition)
    try:
        return run_repetition(n_benchmarks, config, seed, repetition)
    except EmptyAlignmentError as exc:
        return RepetitionFailure(n_benchmarks, repetition, seed, str(exc))


def _protocol(config: ExperimentConfig) -> dict:
    exp = config.experiment
    return {
        "train_runs": exp.train_runs,
        "test_runs": exp.test_runs,
        "repetitions": exp.repetitions,
        "split": "disjoint train and test ensembles per configuration and repetition",
        "data_regeneration": "every repetition regenerates its system and both ensembles",
        "volatility_factors": "configured, or drawn per run from the run's own stream",
        "sd_aggregation": config.detector.sd_aggregation.value,
        "seed_derivation": "SeedSequence mix of (master_seed, n, repetition, stream); "
        f"train stream {TRAIN_STREAM}, test stream {TEST_STREAM}",
        "sd_convention": "population (divisor N)",
        "detection_window": [0, config.detector.window],
        "undetected_runs": "scored incorrect",
        "unreached_runs": "excluded from scoring and counted",
    }


def _summarize_configuration(
    n_benchmarks: int,
    outcomes: list[RepetitionResult | RepetitionFailure],
    window: int,
) -> ConfigurationSummary:
    results = [o for o in outcomes if isinstance(o, RepetitionResult)]
    failures = [o for o in outcomes if isinstance(o, RepetitionFailure)]
    pooled = [offset for r in results for offset in r.detection_offsets]
    return ConfigurationSummary(
        n_benchmarks=n_benchmarks,
        train_accuracy=_summarize([r.train_accuracy for r in results]),
        test_accuracy=_summarize([r.test_accuracy for r in results]),
        repetitions=tuple(results),
        failures=tuple(failures),
        histogram=detection_time_histogram(pooled, window),
    )


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> EvaluationReport:
    """Run every (benchmark count, repetition) pair and aggregate the accuracies."""
    config.check_benchmark_counts()
    exp = config.experiment
    workers = workers or exp.workers
    tasks = [(n, rep) for n in exp.benchmark_counts for rep in range(exp.repetitions)]
    outcomes: dict[tuple[int, int], RepetitionResult | RepetitionFailure] = {}

    def _record(key: tuple[int, int], outcome: RepetitionResult | RepetitionFailure) -> None:
        outcomes[key] = outcome
        status = (
            f"test={outcome.test_accuracy:.3f}"
            if isinstance(outcome, RepetitionResult)
            else f"failed: {outcome.reason}"
        )
        logger.info("[%d/%d] n=%d repetition=%d %s", len(outcomes), len(tasks), *key, status)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_attempt_repetition, n, config, rep): (n, rep) for n, rep in tasks
            }
            for future in as_completed(futures):
                _record(futures[future], future.result())
    else:
        for n, rep in tasks:
            _record((n, rep), _attempt_repetition(n, config, rep))

    configurations = tuple(
        _summarize_configuration(
            n,
            [outcomes[(n, rep)] for rep in range(exp.repetitions)],
            config.detector.window,
        )
        for n in exp.benchmark_counts
    )
    return EvaluationReport(
        tool_version=get_version(),
        master_seed=exp.master_seed,
        config=config.echo(),
        protocol=_protocol(config),
        configurations=configurations,
    )
