import json
import subprocess
import sys

import numpy as np
import pytest

from losscurv.cli import SUBCOMMANDS, run
from losscurv.io import read_csv


def body(path):
    """CSV content after the config comment line."""
    return path.read_text().split("\n", 1)[1]


def test_curvature_prints_sc(tmp_path, capsys):
    code = run(["curvature", "--field", "quadratic", "--diag", "1,1", "--at", "0,0", "--out", str(tmp_path)])
    assert code == 0
    assert capsys.readouterr().out.startswith("Sc = 2 ")
    report = json.loads((tmp_path / "curvature.json").read_text())["report"]
    assert report["scalar_curvature"] == 2.0


def test_saddle_grid_csv(tmp_path):
    assert run(["saddle-grid", "--c", "0.1", "--u", "0:6:121", "--v", "0:6.283:121",
                "--out", str(tmp_path)]) == 0
    config, cols = read_csv(tmp_path / "saddle-grid.csv")
    assert list(cols) == ["u", "v", "f", "trace", "sc"]
    assert cols["u"].size == 121 * 121
    assert config["seed"] == 0 and config["c"] == 0.1
    lines = (tmp_path / "saddle-grid.csv").read_text().splitlines()
    assert lines[1] == "u,v,f,trace,sc" and len(lines) == 2 + 121 * 121


@pytest.mark.slow
def test_ball_volume_paraboloid(tmp_path):
    assert run(["ball-volume", "--field", "paraboloid", "--r", "0.05:0.3:6", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "ball-volume.json").read_text())["report"]
    assert report["Sc_estimate"] == pytest.approx(2.0, rel=0.05)


def test_help_lists_subcommands():
    proc = subprocess.run([sys.executable, "-m", "losscurv.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in SUBCOMMANDS:
        assert name in proc.stdout


def test_usage_errors_exit_two(tmp_path, capsys):
    assert run(["no-such-command"]) == 2
    assert run(["curvature", "--bogus"]) == 2
    assert run(["saddle-grid", "--u", "0:6"]) == 2
    assert run(["curvature", "--field", "model", "--out", str(tmp_path)]) == 2
    assert run(["curvature", "--diag", "1,1", "--at", "0,0,0", "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_runtime_error_exits_one(tmp_path, capsys):
    code = run(["escape", "--diag", "1,-1", "--t", "0.01", "--dt", "0.001", "--paths", "10",
                "--out", str(tmp_path)])
    assert code == 1
    assert "NotPositiveSemidefinite" in capsys.readouterr().err


def test_global_flags_before_or_after_subcommand(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["--seed", "5", "--out", str(a), "perturb", "--diag", "1,2", "--directions", "50"]) == 0
    assert run(["perturb", "--diag", "1,2", "--directions", "50", "--seed", "5", "--out", str(b)]) == 0
    assert (a / "perturb.csv").read_text() == (b / "perturb.csv").read_text()


@pytest.mark.parametrize("argv, name", [
    (["perturb", "--diag", "1,2", "--directions", "100", "--seed", "3"], "perturb"),
    (["escape", "--diag", "1,2", "--paths", "500", "--seed", "4"], "escape"),
    (["estimate", "--diag", "1,2,3", "--probes", "200", "--seed", "9"], "estimate"),
    (["riemann", "--field", "random", "--dim", "3", "--at", "0.1,0.2,0.3"], "riemann"),
    (["christoffel", "--field", "paraboloid", "--at", "1,0"], "christoffel"),
    (["minibatch", "--batch-diags", "2,0", "0,2"], "minibatch"),
])
def test_reruns_are_byte_identical_and_embed_config(tmp_path, argv, name):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(argv + ["--out", str(a)]) == 0
    assert run(argv + ["--out", str(b)]) == 0
    assert (a / f"{name}.csv").read_bytes() == (b / f"{name}.csv").read_bytes()
    assert (a / f"{name}.json").read_bytes() == (b / f"{name}.json").read_bytes()
    config, _ = read_csv(a / f"{name}.csv")
    assert config["command"] == name and "seed" in config
    assert json.loads((a / f"{name}.json").read_text())["config"] == config


def test_threads_do_not_change_outputs(tmp_path):
    argv = ["estimate", "--matrix", "2,1,0;1,3,1;0,1,1", "--probes", "3000", "--seed", "2"]
    assert run(argv + ["--threads", "1", "--out", str(tmp_path / "one")]) == 0
    assert run(argv + ["--threads", "4", "--out", str(tmp_path / "four")]) == 0
    assert (tmp_path / "one/estimate.csv").read_bytes() == (tmp_path / "four/estimate.csv").read_bytes()


def test_format_flag(tmp_path):
    assert run(["curvature", "--diag", "1,1", "--format", "json", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "curvature.json").exists() and not (tmp_path / "curvature.csv").exists()


def test_minibatch_counterexample_summary(tmp_path, capsys):
    assert run(["minibatch", "--out", str(tmp_path)]) == 0
    assert "sc_gap = 2" in capsys.readouterr().out


def test_train_then_analyse_model(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["train", "--widths", "1,6,1", "--n", "30", "--steps", "300", "--seed", "1",
                "--out", str(out)]) == 0
    model = out / "model.json"
    snapshot = json.loads(model.read_text())
    assert snapshot["seed"] == 1 and len(snapshot["params"]) == 19
    _, trace = read_csv(out / "train.csv")
    assert trace["step"][-1] == 300
    assert run(["curvature", "--field", "model", "--model", str(model), "--out", str(out)]) == 0
    assert run(["minibatch", "--model", str(model), "--batches", "3", "--out", str(out)]) == 0
    report = json.loads((out / "minibatch.json").read_text())["report"]
    assert report["trace_gap"] <= 1e-10 * (1 + abs(report["full_trace"]))
    assert np.isfinite(report["full_sc"])
