"""Update rules for benchmark agents below and above the complexity threshold.

Each agent holds a performance P_i(t) in [0, 1]. The system complexity C(t) is
the weighted mean of all performances and couples every agent to the others:

    C(t) = (1/n) * sum_i w_i * P_i(t)

While C(t) <= c_max agents improve with diminishing returns,

    P_i(t+1) = clamp(P_i(t) + N(mu_i, sigma_base) / (1 + P_i(t)))

and once C(t) > c_max every agent takes a volatile step,

    P_i(t+1) = clamp(P_i(t) + z_i * volatility_i * sigma_var)

In experiment mode volatility_i is a fixed per-agent factor in [0, 1]; when
the parameters leave it unset, each run draws its own.

The pure functions below accept scalars or numpy arrays; a scalar input gives a
``float`` back. ``step_system`` applies them to all agents at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ValidationError

WEIGHT_TOLERANCE = 1e-9


class VolatilityMode(str, Enum):
    """How the post-critical noise multiplier is chosen."""

    FRAMEWORK = "framework"  # exp(1 + excess ratio), shared by all agents
    EXPERIMENT = "experiment"  # fixed per-agent factor in [0, 1]


def _frozen(values: ArrayLike) -> NDArray[np.float64]:
    array = np.array(values, dtype=np.float64)
    array.flags.writeable = False
    return array


def _scalar_or_array(values: NDArray[np.float64]) -> float | NDArray[np.float64]:
    return float(values) if values.ndim == 0 else values


@dataclass(frozen=True, eq=False)
class DynamicsParams:
    """Every constant that governs agent evolution for one system size."""

    n_benchmarks: int
    weights: NDArray[np.float64]
    agent_volatility_factors: NDArray[np.float64] | None
    c_max: float = 0.8
    sigma_base: float = 0.01
    mu_gain_min: float = 0.0
    mu_gain_max: float = 0.05
    sigma_var: float = 0.1
    volatility_mode: VolatilityMode = VolatilityMode.EXPERIMENT
    init_min: float = 0.0
    init_max: float = 0.7

    def __post_init__(self) -> None:
        if self.n_benchmarks < 1:
            raise ValidationError(f"n_benchmarks must be positive, got {self.n_benchmarks}")
        weights = _frozen(self.weights)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "volatility_mode", VolatilityMode(self.volatility_mode))

        if weights.shape != (self.n_benchmarks,):
            raise ValidationError(
                f"weights has length {weights.size}, expected {self.n_benchmarks}"
            )
        if np.any(weights < 0):
            raise ValidationError("weights must be nonnegative")
        if abs(weights.mean() - 1.0) > WEIGHT_TOLERANCE:
            raise ValidationError(f"mean of weights must be 1, got {weights.mean():.12g}")
        if self.agent_volatility_factors is not None:
            self._check_factors()
        if not 0 < self.c_max <= 1:
            raise ValidationError(f"c_max must lie in (0, 1], got {self.c_max}")
        if self.sigma_base < 0 or self.sigma_var < 0:
            raise ValidationError("noise scales must be nonnegative")
        if not 0 <= self.mu_gain_min <= self.mu_gain_max:
            raise ValidationError("expected 0 <= mu_gain_min <= mu_gain_max")
        if not 0 <= self.init_min <= self.init_max <= 1:
            raise ValidationError("expected 0 <= init_min <= init_max <= 1")

    def _check_factors(self) -> None:
        factors = _frozen(self.agent_volatility_factors)
        object.__setattr__(self, "agent_volatility_factors", factors)
        if factors.shape != (self.n_benchmarks,):
            raise ValidationError(
                f"agent_volatility_factors has length {factors.size}, "
                f"expected {self.n_benchmarks}"
            )
        if np.any((factors < 0) | (factors > 1)):
            raise ValidationError("agent_volatility_factors must lie in [0, 1]")

    @classmethod
    def uniform(cls, n_benchmarks: int, **overrides) -> DynamicsParams:
        """Uniform weights; volatility factors left unset are drawn per run."""
        overrides.setdefault("agent_volatility_factors", None)
        return cls(n_benchmarks=n_benchmarks, weights=np.ones(n_benchmarks), **overrides)

    def with_factors(self, factors: ArrayLike) -> DynamicsParams:
        return replace(self, agent_volatility_factors=factors)


@dataclass(frozen=True, eq=False)
class SystemState:
    t: int
    performances: NDArray[np.float64]


def aggregate_complexity(
    performances: ArrayLike, weights: ArrayLike
) -> float | NDArray[np.float64]:
    """Weighted mean performance. A (T, n) matrix gives one value per row."""
    p = np.asarray(performances, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError("weights must be a nonempty vector")
    if p.ndim == 0 or p.shape[-1] != w.size:
        raise ValidationError(
            f"performances and weights differ in length ({p.shape[-1:]} vs {w.size})"
        )
    return _scalar_or_array(np.asarray((p @ w) / w.size))


def excess_complexity_ratio(c: float, c_max: float) -> float:
    if c_max <= 0:
        raise ValidationError(f"c_max must be positive, got {c_max}")
    return max(0.0, (c - c_max) / c_max)


def volatility_factor_framework(ratio: float) -> float:
    if ratio < 0:
        raise ValidationError(f"excess ratio must be nonnegative, got {ratio}")
    return math.exp(1.0 + ratio)


def clamp_unit(x: ArrayLike) -> float | NDArray[np.float64]:
    values = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError("cannot clamp a non-finite value")
    return _scalar_or_array(np.clip(values, 0.0, 1.0))


def _check_unit(p: NDArray[np.float64]) -> None:
    if np.any((p < 0) | (p > 1)):
        raise ValidationError("performance must lie in [0, 1]")


def pre_critical_update(p: ArrayLike, gain_draw: ArrayLike) -> float | NDArray[np.float64]:
    """Ordered growth: the gain shrinks as performance approaches 1."""
    p = np.asarray(p, dtype=np.float64)
    _check_unit(p)
    return clamp_unit(p + np.asarray(gain_draw, dtype=np.float64) / (1.0 + p))


def post_critical_update(
    p: ArrayLike,
    std_normal_draw: ArrayLike,
    vol_factor: ArrayLike,
    sigma_var: float,
) -> float | NDArray[np.float64]:
    """Volatile step: standard-normal draw scaled by the volatility factor and sigma_var."""
    if sigma_var < 0:
        raise ValidationError(f"sigma_var must be nonnegative, got {sigma_var}")
    p = np.asarray(p, dtype=np.float64)
    _check_unit(p)
    vol = np.asarray(vol_factor, dtype=np.float64)
    if np.any(vol < 0):
        raise ValidationError("volatility factor must be nonnegative")
    return clamp_unit(p + np.asarray(std_normal_draw, dtype=np.float64) * vol * sigma_var)


def step_system(
    state: SystemState, params: DynamicsParams, rng: np.random.Generator
) -> SystemState:
    """Advance every agent by one time step.

    The draw order is fixed and blocked by vector: all per-agent gain means
    (uniform on [mu_gain_min, mu_gain_max], agents ascending), then one
    standard-normal draw per agent. Both are consumed in either regime, so the
    stream position after ``k`` steps does not depend on when the system
    turned critical.
    """
    p = state.performances
    if p.shape != (params.n_benchmarks,):
        raise ValidationError(
            f"state holds {p.size} performances, expected {params.n_benchmarks}"
        )
    c = aggregate_complexity(p, params.weights)
    mu = rng.uniform(params.mu_gain_min, params.mu_gain_max, params.n_benchmarks)
    z = rng.standard_normal(params.n_benchmarks)

    if c > params.c_max:
        if params.volatility_mode is VolatilityMode.FRAMEWORK:
            vol = volatility_factor_framework(excess_complexity_ratio(c, params.c_max))
        elif params.agent_volatility_factors is None:
            raise ValidationError("agent volatility factors are unset")
        else:
            vol = params.agent_volatility_factors
        nxt = post_critical_update(p, z, vol, params.sigma_var)
    else:
        nxt = pre_critical_update(p, mu + params.sigma_base * z)
    return SystemState(t=state.t + 1, performances=np.asarray(nxt))
