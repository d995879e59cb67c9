"""Threshold-crossing detection of criticality and its SGD calibration.

A run is flagged at the first absolute index t >= burn_in where S'(t) > theta.
A detection is correct when it falls in [tau, tau + window]. The loss is the
negated accuracy, which is piecewise constant in theta; the optimizer therefore
starts from the best point of a grid over the observed derivative values and
keeps the best threshold it has seen.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyAlignmentError, ValidationError
from .simulation import SimulationTrace
from .statistics import DerivativeSeries, SDAggregation, derivative_series

logger = logging.getLogger(__name__)

NO_DETECTION = -1


@dataclass(frozen=True)
class DetectorConfig:
    theta: float = 0.0
    burn_in: int = 2
    window: int = 10

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValidationError(f"window must be at least 1, got {self.window}")
        if self.burn_in < 0:
            raise ValidationError(f"burn_in must be nonnegative, got {self.burn_in}")


@dataclass(frozen=True, eq=False)
class DetectionDataset:
    """One (S' series, tau) pair per simulated run, on absolute time indices."""

    items: tuple[tuple[DerivativeSeries, int], ...]

    def __post_init__(self) -> None:
        for series, tau in self.items:
            last = series.start_index + len(series) - 1
            if not 0 <= tau <= last:
                raise ValidationError(f"critical index {tau} outside [0, {last}]")

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def from_traces(
        cls,
        traces: Iterable[SimulationTrace],
        aggregation: SDAggregation = SDAggregation.AGENT_MEAN,
    ) -> DetectionDataset:
        """Build a dataset from the runs that reached criticality."""
        items = tuple(
            (derivative_series(trace, aggregation), trace.critical_index)
            for trace in traces
            if trace.critical_index is not None
        )
        if not items:
            raise EmptyAlignmentError("no run reached criticality; nothing to score")
        return cls(items=items)

    @cached_property
    def critical_indices(self) -> NDArray[np.int64]:
        return np.array([tau for _, tau in self.items], dtype=np.int64)

    @cached_property
    def matrix(self) -> NDArray[np.float64]:
        """Derivatives laid out by absolute index; undefined cells hold -inf."""
        width = max(s.start_index + len(s) for s, _ in self.items)
        out = np.full((len(self.items), width), -np.inf)
        for row, (series, _) in enumerate(self.items):
            out[row, series.start_index : series.start_index + len(series)] = series.values
        return out

    def all_values(self) -> NDArray[np.float64]:
        return np.concatenate([series.values for series, _ in self.items])


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-5
    tolerance: float = 1e-6
    max_iterations: int = 1000
    epsilon: float = 1e-4
    grid: tuple[float, ...] | None = None
    grid_size: int | None = 101
    initial_theta: float = 0.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if self.epsilon <= 0 or self.learning_rate <= 0 or self.tolerance <= 0:
            raise ValidationError("learning_rate, tolerance and epsilon must be positive")
        if self.grid_size is not None and self.grid_size < 2:
            raise ValidationError("grid_size must be at least 2")


@dataclass(frozen=True)
class OptimizerResult:
    theta_star: float
    iterations: int
    converged: bool
    final_accuracy: float
    initial_theta: float
    trajectory: tuple[tuple[float, float], ...]


def detect_critical_time(derivatives: DerivativeSeries, config: DetectorConfig) -> int | None:
    eligible = derivatives.indices >= config.burn_in
    hits = np.flatnonzero(eligible & (derivatives.values > config.theta))
    return int(derivatives.start_index + hits[0]) if hits.size else None


def detection_times(dataset: DetectionDataset, config: DetectorConfig) -> NDArray[np.int64]:
    """Detected index per run, ``NO_DETECTION`` where S' never crosses theta."""
    matrix = dataset.matrix
    hits = matrix > config.theta
    hits[:, : config.burn_in] = False
    found = hits.any(axis=1)
    return np.where(found, hits.argmax(axis=1), NO_DETECTION)


def detection_accuracy(dataset: DetectionDataset, config: DetectorConfig) -> float:
    if len(dataset) == 0:
        raise ValidationError("detection dataset is empty")
    detected = detection_times(dataset, config)
    tau = dataset.critical_indices
    correct = (detected != NO_DETECTION) & (detected >= tau) & (detected <= tau + config.window)
    return int(correct.sum()) / len(dataset)


def loss(
    dataset: DetectionDataset, theta: float, detector: DetectorConfig | None = None
) -> float:
    config = replace(detector or DetectorConfig(), theta=theta)
    return -detection_accuracy(dataset, config)


def estimate_gradient(
    dataset: DetectionDataset,
    theta: float,
    epsilon: float,
    detector: DetectorConfig | None = None,
) -> float:
    """Forward difference (loss(theta + eps) - loss(theta)) / eps."""
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    return (loss(dataset, theta + epsilon, detector) - loss(dataset, theta, detector)) / epsilon


def grid_candidates(dataset: DetectionDataset, count: int) -> list[float]:
    """``count`` evenly spaced thresholds over the range of observed derivatives."""
    if count < 2:
        raise ValidationError(f"grid needs at least 2 candidates, got {count}")
    values = dataset.all_values()
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise ValidationError("dataset holds no finite derivative values")
    low, high = float(values.min()), float(values.max())
    if low == high:
        return [low]
    return np.linspace(low, high, count).tolist()


def _best(evaluated: Sequence[tuple[float, float]]) -> tuple[float, float]:
    # lowest loss, ties toward the smaller threshold
    return min(evaluated, key=lambda pair: (pair[1], pair[0]))


def sgd_optimize(
    dataset: DetectionDataset,
    opt_config: OptimizerConfig,
    detector: DetectorConfig | None = None,
) -> OptimizerResult:
    """Calibrate theta by finite-difference gradient descent on -accuracy."""
    grid = opt_config.grid
    if grid is None and opt_config.grid_size is not None:
        grid = grid_candidates(dataset, opt_config.grid_size)

    evaluated: list[tuple[float, float]] = []
    if grid:
        evaluated = [(float(theta), loss(dataset, theta, detector)) for theta in grid]
        theta, current = _best(evaluated)
    else:
        theta = float(opt_config.initial_theta)
        current = loss(dataset, theta, detector)
    initial_theta = theta

    trajectory = [(theta, current)]
    converged = False
    iterations = 0
    for iterations in range(1, opt_config.max_iterations + 1):  # noqa: B007
        gradient = estimate_gradient(dataset, theta, opt_config.epsilon, detector)
        new_theta = theta - opt_config.learning_rate * gradient
        if abs(new_theta - theta) < opt_config.tolerance:
            converged = True
            break
        theta = new_theta
        trajectory.append((theta, loss(dataset, theta, detector)))

    theta_star, best_loss = _best(evaluated + trajectory)
    logger.debug(
        "sgd: theta*=%.6g accuracy=%.3f iterations=%d converged=%s",
        theta_star,
        -best_loss,
        iterations,
        converged,
    )
    return OptimizerResult(
        theta_star=theta_star,
        iterations=iterations,
        converged=converged,
        final_accuracy=-best_loss,
        initial_theta=initial_theta,
        trajectory=tuple(trajectory),
    )
