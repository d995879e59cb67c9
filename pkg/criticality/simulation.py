"""Seeded simulation runs and ensembles of runs."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dynamics import DynamicsParams, SystemState, aggregate_complexity, step_system
from .errors import ValidationError

logger = logging.getLogger(__name__)


def derive_seed(*components: int) -> int:
    """Mix integer components into one stable 64-bit seed.

    Uses numpy's ``SeedSequence`` hashing, so the value depends only on the
    components and never on the order runs are scheduled in.
    """
    if any(c < 0 for c in components):
        raise ValidationError(f"seed components must be nonnegative, got {components}")
    state = np.random.SeedSequence(list(components)).generate_state(1, dtype=np.uint64)
    return int(state[0])


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """One run: performances (steps+1, n), complexity per step and tau."""

    run_id: int
    performances: NDArray[np.float64]
    complexity: NDArray[np.float64]
    critical_index: int | None
    seed: int | None
    volatility_factors: NDArray[np.float64] | None = None

    @property
    def steps(self) -> int:
        return self.performances.shape[0] - 1

    @property
    def n_benchmarks(self) -> int:
        return self.performances.shape[1]


@dataclass(frozen=True, eq=False)
class Ensemble:
    params: DynamicsParams
    steps: int
    traces: tuple[SimulationTrace, ...]
    base_seed: int

    @property
    def critical_traces(self) -> tuple[SimulationTrace, ...]:
        return tuple(t for t in self.traces if t.critical_index is not None)

    @property
    def excluded_count(self) -> int:
        """Runs that never crossed c_max within the horizon."""
        return len(self.traces) - len(self.critical_traces)


def initialize_agents(params: DynamicsParams, rng: np.random.Generator) -> SystemState:
    performances = rng.uniform(params.init_min, params.init_max, params.n_benchmarks)
    return SystemState(t=0, performances=performances)


def find_critical_index(complexity: ArrayLike, c_max: float) -> int | None:
    """First time step with C(t) strictly above c_max, or None."""
    series = np.asarray(complexity, dtype=np.float64)
    if series.size == 0:
        raise ValidationError("complexity series is empty")
    hits = np.flatnonzero(series > c_max)
    return int(hits[0]) if hits.size else None


def run_simulation(
    params: DynamicsParams, steps: int, seed: int, run_id: int = 0
) -> SimulationTrace:
    """Simulate ``steps`` updates from a fresh random initial state.

    Unset volatility factors are drawn uniformly on [0, 1] right after the
    initial performances, from the same stream.
    """
    if steps < 1:
        raise ValidationError(f"steps must be at least 1, got {steps}")
    rng = np.random.default_rng(seed)
    state = initialize_agents(params, rng)
    if params.agent_volatility_factors is None:
        params = params.with_factors(rng.uniform(0.0, 1.0, params.n_benchmarks))

    performances = np.empty((steps + 1, params.n_benchmarks))
    complexity = np.empty(steps + 1)
    performances[0] = state.performances
    complexity[0] = aggregate_complexity(state.performances, params.weights)
    for t in range(1, steps + 1):
        state = step_system(state, params, rng)
        performances[t] = state.performances
        complexity[t] = aggregate_complexity(state.performances, params.weights)

    return SimulationTrace(
        run_id=run_id,
        performances=performances,
        complexity=complexity,
        critical_index=find_critical_index(complexity, params.c_max),
        seed=seed,
        volatility_factors=params.agent_volatility_factors,
    )


def run_ensemble(
    params: DynamicsParams,
    count: int,
    steps: int,
    base_seed: int,
    workers: int = 1,
) -> Ensemble:
    """Run ``count`` independent simulations; run k is seeded with mix(base_seed, k)."""
    if count < 1:
        raise ValidationError(f"count must be at least 1, got {count}")
    seeds = [derive_seed(base_seed, k) for k in range(count)]
    run_ids = range(count)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(
                pool.map(
                    run_simulation,
                    repeat(params),
                    repeat(steps),
                    seeds,
                    run_ids,
                    chunksize=max(1, count // (4 * workers)),
                )
            )
    else:
        traces = [run_simulation(params, steps, s, k) for k, s in enumerate(seeds)]

    ensemble = Ensemble(params=params, steps=steps, traces=tuple(traces), base_seed=base_seed)
    logger.debug(
        "ensemble n=%d runs=%d excluded=%d",
        params.n_benchmarks,
        count,
        ensemble.excluded_count,
    )
    return ensemble
