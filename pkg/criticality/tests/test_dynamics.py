"""Tests for the agent update rules."""

from __future__ import annotations

import math

import numpy as np
import pytest

from criticality.dynamics import (
    DynamicsParams,
    SystemState,
    VolatilityMode,
    aggregate_complexity,
    clamp_unit,
    excess_complexity_ratio,
    post_critical_update,
    pre_critical_update,
    step_system,
    volatility_factor_framework,
)
from criticality.errors import ValidationError


def _params(n: int = 2, **overrides) -> DynamicsParams:
    factors = np.random.default_rng(3).uniform(0.0, 1.0, n)
    overrides.setdefault("agent_volatility_factors", factors)
    return DynamicsParams.uniform(n, **overrides)


def test_aggregate_complexity_examples():
    assert aggregate_complexity([0.4, 0.6], [1, 1]) == pytest.approx(0.5)
    assert aggregate_complexity([0.2, 0.4, 0.9], [1, 1, 1]) == pytest.approx(0.5)
    assert aggregate_complexity([0.6, 0.2], [2, 0]) == pytest.approx(0.6)


def test_aggregate_complexity_rows_of_a_matrix():
    values = aggregate_complexity(np.array([[0.4, 0.6], [0.0, 1.0], [1.0, 1.0]]), [1, 1])
    np.testing.assert_allclose(values, [0.5, 0.5, 1.0])


def test_aggregate_complexity_rejects_length_mismatch():
    with pytest.raises(ValidationError):
        aggregate_complexity([0.4, 0.6, 0.1], [1, 1])


def test_excess_complexity_ratio_examples():
    assert excess_complexity_ratio(0.7, 0.8) == 0.0
    assert excess_complexity_ratio(0.8, 0.8) == 0.0
    assert excess_complexity_ratio(0.9, 0.8) == pytest.approx(0.125)


def test_volatility_factor_framework_examples():
    assert volatility_factor_framework(0.0) == pytest.approx(math.e)
    assert volatility_factor_framework(1.0) == pytest.approx(7.389056099)
    assert volatility_factor_framework(0.125) == pytest.approx(3.08021685, rel=1e-8)
    with pytest.raises(ValidationError):
        volatility_factor_framework(-0.1)


def test_clamp_unit_examples():
    assert clamp_unit(1.2) == 1.0
    assert clamp_unit(-0.05) == 0.0
    assert clamp_unit(0.37) == 0.37
    assert isinstance(clamp_unit(0.37), float)
    with pytest.raises(ValidationError):
        clamp_unit(float("nan"))


def test_pre_critical_update_examples():
    assert pre_critical_update(0.5, 0.03) == pytest.approx(0.52)
    assert pre_critical_update(0.0, 0.0) == 0.0
    assert pre_critical_update(0.99, 0.05) == 1.0


def test_post_critical_update_examples():
    assert post_critical_update(0.85, 0.0, 0.5, 0.05) == 0.85
    assert post_critical_update(0.85, 1.0, 0.5, 0.05) == pytest.approx(0.875)
    assert post_critical_update(0.85, -20.0, 1.0, 0.05) == 0.0


def test_updates_reject_out_of_range_performance():
    with pytest.raises(ValidationError):
        pre_critical_update(1.5, 0.0)
    with pytest.raises(ValidationError):
        post_critical_update(-0.1, 0.0, 0.5, 0.05)
    with pytest.raises(ValidationError):
        post_critical_update(0.5, 0.0, 0.5, -0.05)


def test_updates_never_leave_unit_interval():
    """A million vectorised calls of each rule with heavy-tailed draws."""
    rng = np.random.default_rng(20240501)
    size = 1_000_000
    p = rng.uniform(0.0, 1.0, size)
    pre = pre_critical_update(p, rng.standard_cauchy(size))
    post = post_critical_update(p, rng.standard_cauchy(size), rng.uniform(0, 3, size), 0.5)
    for values in (pre, post):
        assert np.count_nonzero((values < 0.0) | (values > 1.0)) == 0


def test_zero_noise_is_a_fixpoint():
    p = np.linspace(0.0, 1.0, 101)
    np.testing.assert_array_equal(pre_critical_update(p, np.zeros_like(p)), p)
    np.testing.assert_array_equal(post_critical_update(p, np.zeros_like(p), 0.7, 0.05), p)


def test_params_reject_weights_not_averaging_to_one():
    with pytest.raises(ValidationError):
        DynamicsParams(n_benchmarks=2, weights=[2, 2], agent_volatility_factors=[0.5, 0.5])
    params = DynamicsParams(n_benchmarks=2, weights=[2, 0], agent_volatility_factors=[0.5, 0.5])
    assert params.weights.tolist() == [2.0, 0.0]


def test_params_reject_c_max_out_of_range():
    with pytest.raises(ValidationError):
        _params(c_max=1.1)
    with pytest.raises(ValidationError):
        _params(c_max=0.0)


def test_step_below_threshold_uses_pre_critical_rule():
    params = _params(c_max=0.8)
    state = SystemState(t=4, performances=np.array([0.4, 0.6]))
    rng = np.random.default_rng(11)
    mirror = np.random.default_rng(11)
    mu = mirror.uniform(params.mu_gain_min, params.mu_gain_max, 2)
    z = mirror.standard_normal(2)

    nxt = step_system(state, params, rng)
    assert nxt.t == 5
    expected = pre_critical_update(state.performances, mu + params.sigma_base * z)
    np.testing.assert_array_equal(nxt.performances, expected)


@pytest.mark.parametrize("mode", list(VolatilityMode))
def test_step_above_threshold_uses_post_critical_rule(mode):
    params = _params(c_max=0.8, volatility_mode=mode)
    state = SystemState(t=0, performances=np.array([0.8, 0.9]))
    rng = np.random.default_rng(5)
    mirror = np.random.default_rng(5)
    mirror.uniform(size=2)
    z = mirror.standard_normal(2)

    if mode is VolatilityMode.FRAMEWORK:
        c = aggregate_complexity(state.performances, params.weights)
        vol = volatility_factor_framework(excess_complexity_ratio(c, params.c_max))
    else:
        vol = params.agent_volatility_factors
    expected = post_critical_update(state.performances, z, vol, params.sigma_var)
    np.testing.assert_allclose(step_system(state, params, rng).performances, expected, atol=1e-15)


def test_step_consumes_same_draws_in_both_regimes():
    params = _params()
    calm = SystemState(t=0, performances=np.array([0.1, 0.2]))
    wild = SystemState(t=0, performances=np.array([0.95, 0.95]))
    rng_a, rng_b = np.random.default_rng(9), np.random.default_rng(9)
    step_system(calm, params, rng_a)
    step_system(wild, params, rng_b)
    assert rng_a.random() == rng_b.random()


def test_step_is_deterministic_for_equal_seeds():
    params = _params(n=5)
    state = SystemState(t=0, performances=np.full(5, 0.5))
    first = step_system(state, params, np.random.default_rng(123))
    second = step_system(state, params, np.random.default_rng(123))
    np.testing.assert_array_equal(first.performances, second.performances)


def test_step_rejects_wrong_agent_count():
    with pytest.raises(ValidationError):
        step_system(SystemState(0, np.array([0.5])), _params(n=2), np.random.default_rng(0))


def test_pre_critical_step_improves_in_expectation():
    rng = np.random.default_rng(77)
    size = 200_000
    p = 0.3
    gain = rng.uniform(0.0, 0.05, size) + 0.01 * rng.standard_normal(size)
    increments = pre_critical_update(np.full(size, p), gain) - p
    expected = 0.025 / (1.0 + p)
    standard_error = increments.std() / math.sqrt(size)
    assert increments.mean() > 0.0
    assert abs(increments.mean() - expected) <= 3 * standard_error


def test_equal_gain_yields_smaller_increment_at_higher_performance():
    p = np.linspace(0.0, 0.9, 10)
    increments = pre_critical_update(p, np.full_like(p, 0.05)) - p
    assert np.all(np.diff(increments) < 0)


def test_framework_volatility_grows_strictly_with_complexity():
    c_max = 0.8
    levels = np.linspace(0.81, 1.0, 20)
    factors = [volatility_factor_framework(excess_complexity_ratio(c, c_max)) for c in levels]
    assert np.all(np.diff(factors) > 0)
    assert factors[0] > volatility_factor_framework(excess_complexity_ratio(c_max, c_max))
    assert volatility_factor_framework(excess_complexity_ratio(0.5, c_max)) == pytest.approx(math.e)
