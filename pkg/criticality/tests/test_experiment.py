"""Tests for the train/test protocol and report aggregation."""

from __future__ import annotations

import json

import numpy as np
import pytest

from criticality.config import load_config
from criticality.detection import DetectionDataset, detection_accuracy
from criticality.experiment import (
    TEST_STREAM,
    TRAIN_STREAM,
    detection_time_histogram,
    repetition_ensembles,
    repetition_seed,
    run_experiment,
    run_repetition,
)
from criticality.simulation import derive_seed


def _small_config(**experiment):
    settings = {
        "benchmark_counts": [2, 5],
        "train_runs": 12,
        "test_runs": 12,
        "repetitions": 2,
        "steps": 120,
        "master_seed": 3,
    }
    settings.update(experiment)
    return load_config({"experiment": settings, "optimizer": {"max_iterations": 20}})


def test_histogram_examples():
    histogram = detection_time_histogram([0, 3, 3, 15], window=10)
    assert histogram.count_at(0) == 1
    assert histogram.count_at(3) == 2
    assert histogram.count_at(15) == 1
    assert histogram.count_at(7) == 0
    assert histogram.in_window == 3
    assert histogram.total == 4
    assert histogram.bin_edges[0] == 0
    assert len(histogram.bin_edges) == len(histogram.counts) + 1

    single = detection_time_histogram([0, 0, 0], window=10)
    assert single.counts == (3,)
    assert single.bin_edges == (0, 1)


def test_empty_histogram_keeps_window_bounds():
    histogram = detection_time_histogram([], window=10)
    assert histogram.counts == ()
    assert histogram.total == 0
    assert (histogram.window_start, histogram.window_end) == (0, 10)


def test_repetition_is_deterministic():
    config = _small_config()
    seed = repetition_seed(3, 5, 0)
    assert run_repetition(5, config, seed).to_dict() == run_repetition(5, config, seed).to_dict()


def test_train_and_test_streams_differ():
    config = _small_config()
    seed = repetition_seed(3, 5, 0)
    assert derive_seed(seed, TRAIN_STREAM) != derive_seed(seed, TEST_STREAM)
    params, train, test = repetition_ensembles(5, config, seed)
    assert train.base_seed != test.base_seed
    assert {t.seed for t in train.traces}.isdisjoint({t.seed for t in test.traces})
    assert train.params is params
    assert test.params is params


def test_repetition_accuracies_are_reproducible_from_theta():
    config = _small_config()
    seed = repetition_seed(3, 5, 1)
    result = run_repetition(5, config, seed, repetition=1)
    _, train, test = repetition_ensembles(5, config, seed)
    detector = config.detector_config(theta=result.theta_star)

    train_set = DetectionDataset.from_traces(train.traces, config.detector.sd_aggregation)
    test_set = DetectionDataset.from_traces(test.traces, config.detector.sd_aggregation)
    assert detection_accuracy(train_set, detector) == result.train_accuracy
    assert detection_accuracy(test_set, detector) == result.test_accuracy
    assert result.histogram.in_window / result.test_runs == result.test_accuracy
    assert result.histogram.total == len(result.detection_offsets)


def test_experiment_aggregates_per_benchmark_count():
    config = _small_config()
    report = run_experiment(config)
    assert [c.n_benchmarks for c in report.configurations] == [2, 5]
    for summary in report.configurations:
        assert len(summary.repetitions) + len(summary.failures) == 2
        tests = [r.test_accuracy for r in summary.repetitions]
        trains = [r.train_accuracy for r in summary.repetitions]
        assert abs(summary.test_accuracy.mean - np.mean(tests)) <= 1e-12
        assert abs(summary.test_accuracy.sd - np.std(tests)) <= 1e-12
        assert abs(summary.train_accuracy.mean - np.mean(trains)) <= 1e-12
        assert 0.0 <= summary.test_accuracy.mean <= 1.0
        assert summary.train_minus_test == pytest.approx(
            summary.train_accuracy.mean - summary.test_accuracy.mean
        )
        pooled = sum(len(r.detection_offsets) for r in summary.repetitions)
        assert summary.histogram.total == pooled


def test_single_repetition_reports_zero_sd():
    report = run_experiment(_small_config(benchmark_counts=[5], repetitions=1))
    (summary,) = report.configurations
    assert summary.test_accuracy.sd == 0.0
    assert summary.train_accuracy.sd == 0.0


def test_same_seed_gives_identical_report():
    config = _small_config()
    first = json.dumps(run_experiment(config).to_dict())
    second = json.dumps(run_experiment(config).to_dict())
    assert first == second


def test_parallel_experiment_matches_sequential():
    config = _small_config(benchmark_counts=[2, 5])
    sequential = run_experiment(config, workers=1).to_dict()
    parallel = run_experiment(config, workers=2).to_dict()
    assert json.dumps(sequential) == json.dumps(parallel)


def test_unreachable_threshold_is_recorded_not_fatal():
    config = _small_config(benchmark_counts=[2], repetitions=2)
    dynamics = config.dynamics.model_copy(update={"c_max": 1.0})
    report = run_experiment(config.model_copy(update={"dynamics": dynamics}))
    (summary,) = report.configurations
    assert summary.repetitions == ()
    assert len(summary.failures) == 2
    assert summary.test_accuracy is None
    assert summary.to_dict()["test_accuracy"] is None


def test_report_carries_protocol_and_config_echo():
    config = _small_config(benchmark_counts=[5], repetitions=1)
    document = run_experiment(config).to_dict()
    assert document["master_seed"] == 3
    assert document["config"] == config.echo()
    assert document["protocol"]["train_runs"] == 12
    assert document["protocol"]["sd_convention"].startswith("population")
    assert load_config(document["config"]) == config

