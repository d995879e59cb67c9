"""End-to-end tests of the command-line front end."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import polars as pl

from criticality.config import load_config
from criticality.experiment import TRAIN_STREAM
from criticality.main import cli_dispatch
from criticality.simulation import derive_seed, run_ensemble
from criticality.storage import file_digest

SMALL = {
    "experiment": {
        "benchmark_counts": [2, 5],
        "train_runs": 8,
        "test_runs": 8,
        "repetitions": 2,
        "steps": 100,
    },
    "optimizer": {"max_iterations": 10},
}


def _config(tmp_path: Path, document: dict = SMALL) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)


def _manifest(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text())


def _check_inventory(out: Path) -> None:
    manifest = _manifest(out)
    assert manifest["files"]
    for entry in manifest["files"]:
        path = out / entry["path"]
        assert path.is_file()
        assert file_digest(path) == entry["sha256"]
        assert path.stat().st_size == entry["bytes"]


def test_simulate_writes_traces_and_manifest(tmp_path, capsys):
    out = tmp_path / "sim"
    status = cli_dispatch(
        ["simulate", "--config", _config(tmp_path), "--out", str(out), "--runs", "4", "--seed", "9"]
    )
    assert status == 0
    assert (out / "traces.csv").is_file()
    assert (out / "traces_complexity.csv").is_file()
    manifest = _manifest(out)
    assert manifest["command"] == "simulate"
    assert manifest["master_seed"] == 9
    assert manifest["config"]["experiment"]["master_seed"] == 9
    _check_inventory(out)
    assert "Simulated 4 runs" in capsys.readouterr().out


def test_simulate_output_matches_seeded_ensemble(tmp_path):
    argv = ["simulate", "--config", _config(tmp_path), "--n", "3", "--runs", "2", "--steps", "5"]
    assert cli_dispatch([*argv, "--seed", "9", "--out", str(tmp_path / "a")]) == 0
    assert cli_dispatch([*argv, "--seed", "9", "--out", str(tmp_path / "b")]) == 0
    for name in ("traces.csv", "traces_complexity.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    config = load_config({**SMALL, "experiment": {**SMALL["experiment"], "master_seed": 9}})
    expected = run_ensemble(config.dynamics_params(3), 2, 5, derive_seed(9, TRAIN_STREAM))
    frame = pl.read_csv(tmp_path / "a" / "traces.csv")
    assert frame.columns == ["run_id", "t", "agent_id", "performance"]
    assert frame.height == 2 * 6 * 3
    for trace in expected.traces:
        rows = frame.filter(pl.col("run_id") == trace.run_id).sort("t", "agent_id")
        performances = rows["performance"].to_numpy().reshape(6, 3)
        np.testing.assert_array_equal(performances, trace.performances)

    complexity = pl.read_csv(tmp_path / "a" / "traces_complexity.csv")
    first = complexity.filter(pl.col("run_id") == 0).sort("t")["complexity"].to_numpy()
    np.testing.assert_allclose(first, expected.traces[0].complexity, rtol=0, atol=1e-15)


def test_optimize_on_fresh_and_exported_traces(tmp_path, capsys):
    config = _config(tmp_path)
    sim = tmp_path / "sim"
    assert cli_dispatch(["simulate", "--config", config, "--out", str(sim), "--runs", "6"]) == 0

    fresh = tmp_path / "fresh"
    assert cli_dispatch(["optimize", "--config", config, "--out", str(fresh), "--runs", "6"]) == 0
    replayed = tmp_path / "replayed"
    traces = str(sim / "traces.csv")
    status = cli_dispatch(
        ["optimize", "--config", config, "--out", str(replayed), "--traces", traces]
    )
    assert status == 0

    first = json.loads((fresh / "optimizer.json").read_text())
    second = json.loads((replayed / "optimizer.json").read_text())
    assert first["theta_star"] == second["theta_star"]
    assert 0.0 <= first["final_accuracy"] <= 1.0
    assert first["iterations"] <= 10
    assert "theta* =" in capsys.readouterr().out


def test_evaluate_writes_report_plots_and_manifest(tmp_path, capsys):
    out = tmp_path / "eval"
    assert cli_dispatch(["evaluate", "--config", _config(tmp_path), "--out", str(out)]) == 0
    assert (out / "report.json").is_file()
    for name in ("complexity.csv", "variance.csv", "derivative.csv", "detection_histogram.csv"):
        assert (out / "plot_data" / name).is_file()
    assert (out / "plot_data" / "schema.json").is_file()
    _check_inventory(out)
    listed = {entry["path"] for entry in _manifest(out)["files"]}
    assert "report.json" in listed
    assert "plot_data/complexity.csv" in listed
    assert "test accuracy (%)" in capsys.readouterr().out


def test_report_regenerates_from_manifest(tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert cli_dispatch(["evaluate", "--config", _config(tmp_path), "--out", str(first)]) == 0
    replay = ["evaluate", "--config", str(first / "manifest.json"), "--out", str(second)]
    assert cli_dispatch([*replay, "--workers", "2"]) == 0
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()


def test_detect_reports_no_detection(tmp_path, capsys):
    trace = tmp_path / "flat.csv"
    rows = "".join(f"0,{t},{a},0.5\n" for t in range(6) for a in range(2))
    trace.write_text("run_id,t,agent_id,performance\n" + rows, encoding="utf-8")
    status = cli_dispatch(["detect", "--trace", str(trace), "--theta", "0.01"])
    assert status == 0
    assert "run 0: no detection" in capsys.readouterr().out


def test_detect_reports_crossing_time(tmp_path, capsys):
    trace = tmp_path / "jump.csv"
    values = [0.5, 0.5, 0.5, 0.5, 0.9, 0.1]
    rows = "".join(f"0,{t},0,{v}\n" for t, v in enumerate(values))
    trace.write_text("run_id,t,agent_id,performance\n" + rows, encoding="utf-8")
    out = tmp_path / "detect"
    status = cli_dispatch(
        ["detect", "--trace", str(trace), "--theta", "0.01", "--out", str(out)]
    )
    assert status == 0
    assert "run 0: detected at t=4" in capsys.readouterr().out
    document = json.loads((out / "detections.json").read_text())
    assert document["runs"] == [{"run_id": 0, "detected_t": 4}]


def test_missing_config_fails_with_path(tmp_path, capsys):
    missing = tmp_path / "absent.json"
    status = cli_dispatch(["simulate", "--config", str(missing), "--out", str(tmp_path / "o")])
    assert status == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert "absent.json" in err
    assert len(err.strip().splitlines()) == 1


def test_malformed_trace_fails_with_line(tmp_path, capsys):
    trace = tmp_path / "bad.csv"
    trace.write_text("run_id,t,agent_id,performance\n0,0,0,0.5\n0,1,0,1.5\n", encoding="utf-8")
    assert cli_dispatch(["detect", "--trace", str(trace), "--theta", "0"]) == 1
    assert "line 3" in capsys.readouterr().err


def test_unknown_subcommand_prints_usage(capsys):
    assert cli_dispatch(["frobnicate"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_unknown_flag_prints_usage(capsys):
    assert cli_dispatch(["simulate", "--out", "x", "--bogus"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_help_exits_cleanly(capsys):
    assert cli_dispatch(["--help"]) == 0
    assert "evaluate" in capsys.readouterr().out
