"""Experiment configuration: JSON file schema, defaults and validation.

Every section and key is optional; absent keys take the published defaults.
Unknown keys are rejected so a typo never silently falls back to a default.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .detection import DetectorConfig, OptimizerConfig
from .dynamics import WEIGHT_TOLERANCE, DynamicsParams, VolatilityMode
from .errors import ConfigError
from .statistics import SDAggregation

DEFAULT_CONFIG = "default"

UnitFloat = Annotated[float, Field(ge=0.0, le=1.0)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExperimentSection(_Section):
    benchmark_counts: list[Annotated[int, Field(gt=0)]] = Field(
        default_factory=lambda: [2, 5, 10, 20], min_length=1
    )
    train_runs: int = Field(100, gt=0)
    test_runs: int = Field(100, gt=0)
    repetitions: int = Field(20, gt=0)
    steps: int = Field(300, ge=2)
    master_seed: int = Field(0, ge=0)
    workers: int = Field(1, gt=0)


class DynamicsSection(_Section):
    n_benchmarks: int = Field(5, gt=0)
    weights: list[Annotated[float, Field(ge=0.0)]] | None = None
    c_max: float = Field(0.8, gt=0.0, le=1.0)
    sigma_base: float = Field(0.01, ge=0.0)
    mu_gain_min: float = Field(0.0, ge=0.0)
    mu_gain_max: float = Field(0.05, ge=0.0)
    sigma_var: float = Field(0.1, ge=0.0)
    volatility_mode: VolatilityMode = VolatilityMode.EXPERIMENT
    agent_volatility_factors: list[UnitFloat] | None = None
    init_min: UnitFloat = 0.0
    init_max: UnitFloat = 0.7

    @model_validator(mode="after")
    def _check_ranges(self) -> DynamicsSection:
        if self.mu_gain_min > self.mu_gain_max:
            raise ValueError("mu_gain_min must not exceed mu_gain_max")
        if self.init_min > self.init_max:
            raise ValueError("init_min must not exceed init_max")
        if self.weights is not None:
            if len(self.weights) != self.n_benchmarks:
                raise ValueError(
                    f"weights has {len(self.weights)} entries but n_benchmarks is "
                    f"{self.n_benchmarks}"
                )
            mean = sum(self.weights) / len(self.weights)
            if abs(mean - 1.0) > WEIGHT_TOLERANCE:
                raise ValueError(f"weights must average to 1, got mean {mean:.12g}")
        factors = self.agent_volatility_factors
        if factors is not None and len(factors) != self.n_benchmarks:
            raise ValueError(
                f"agent_volatility_factors has {len(factors)} entries but n_benchmarks "
                f"is {self.n_benchmarks}"
            )
        return self


class DetectorSection(_Section):
    burn_in: int = Field(2, ge=0)
    window: int = Field(10, gt=0)
    sd_aggregation: SDAggregation = SDAggregation.CROSS_SECTION


class OptimizerSection(_Section):
    learning_rate: float = Field(1e-5, gt=0.0)
    tolerance: float = Field(1e-6, gt=0.0)
    max_iterations: int = Field(1000, gt=0)
    epsilon: float = Field(1e-4, gt=0.0)
    grid_size: Annotated[int, Field(ge=2)] | None = 101
    grid: Annotated[list[float], Field(min_length=1)] | None = None
    initial_theta: float = 0.0


class ExperimentConfig(_Section):
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    dynamics: DynamicsSection = Field(default_factory=DynamicsSection)
    detector: DetectorSection = Field(default_factory=DetectorSection)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)

    def with_seed(self, seed: int | None) -> ExperimentConfig:
        if seed is None:
            return self
        if seed < 0:
            raise ConfigError(f"experiment.master_seed: must be nonnegative, got {seed}")
        experiment = self.experiment.model_copy(update={"master_seed": seed})
        return self.model_copy(update={"experiment": experiment})

    def echo(self) -> dict:
        """Plain-JSON form of the full configuration; parseable by ``load_config``."""
        return self.model_dump(mode="json")

    def check_benchmark_counts(self) -> None:
        """Per-agent vectors only fit runs with exactly ``n_benchmarks`` agents."""
        d = self.dynamics
        if d.weights is None and d.agent_volatility_factors is None:
            return
        for n in self.experiment.benchmark_counts:
            if n != d.n_benchmarks:
                raise ConfigError(
                    f"experiment.benchmark_counts: {n} differs from dynamics.n_benchmarks="
                    f"{d.n_benchmarks}, which the per-agent weights/factors are sized for"
                )

    def dynamics_params(self, n_benchmarks: int) -> DynamicsParams:
        """Dynamics for an ``n_benchmarks`` system; unset volatility factors are drawn per run."""
        d = self.dynamics
        if (
            d.weights is not None or d.agent_volatility_factors is not None
        ) and n_benchmarks != d.n_benchmarks:
            raise ConfigError(
                f"dynamics: per-agent vectors are sized for {d.n_benchmarks} benchmarks, "
                f"not {n_benchmarks}"
            )
        settings = {
            "agent_volatility_factors": d.agent_volatility_factors,
            "c_max": d.c_max,
            "sigma_base": d.sigma_base,
            "mu_gain_min": d.mu_gain_min,
            "mu_gain_max": d.mu_gain_max,
            "sigma_var": d.sigma_var,
            "volatility_mode": d.volatility_mode,
            "init_min": d.init_min,
            "init_max": d.init_max,
        }
        if d.weights is None:
            return DynamicsParams.uniform(n_benchmarks, **settings)
        return DynamicsParams(n_benchmarks=n_benchmarks, weights=d.weights, **settings)

    def detector_config(self, theta: float = 0.0) -> DetectorConfig:
        return DetectorConfig(
            theta=theta, burn_in=self.detector.burn_in, window=self.detector.window
        )

    def optimizer_config(self) -> OptimizerConfig:
        o = self.optimizer
        return OptimizerConfig(
            learning_rate=o.learning_rate,
            tolerance=o.tolerance,
            max_iterations=o.max_iterations,
            epsilon=o.epsilon,
            grid=tuple(o.grid) if o.grid is not None else None,
            grid_size=o.grid_size,
            initial_theta=o.initial_theta,
        )


def _describe(exc: PydanticValidationError) -> str:
    first = exc.errors()[0]
    path = ".".join(str(part) for part in first["loc"]) or "<root>"
    message = first["msg"].removeprefix("Value error, ")
    extra = exc.error_count() - 1
    suffix = f" (and {extra} more)" if extra else ""
    return f"{path}: {message}{suffix}"


def load_config(raw: dict) -> ExperimentConfig:
    """Validate an already-decoded config document."""
    try:
        return ExperimentConfig.model_validate(raw)
    except PydanticValidationError as exc:
        raise ConfigError(_describe(exc)) from exc


def parse_config(path: str | Path) -> tuple[ExperimentConfig, DynamicsParams]:
    """Read a JSON config file.

    Returns the validated configuration and the dynamics for its
    ``dynamics.n_benchmarks`` system.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8") or "{}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    if {"config", "files"} <= raw.keys():
        # a run manifest replays the configuration it echoes
        raw = raw["config"]
    config = load_config(raw)
    params = config.dynamics_params(config.dynamics.n_benchmarks)
    return config, params


def resolve_config(value: str | Path | None) -> ExperimentConfig:
    """Config for a ``--config`` flag: the literal ``default`` or a file path."""
    if value is None or str(value) == DEFAULT_CONFIG:
        return ExperimentConfig()
    config, _ = parse_config(value)
    return config
