import json

from ocbfnav.cli import main
from ocbfnav.plotting import modes_in_svg


def test_bench_twice_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["bench", "--n-envs", "3", "--set", "sim.max_time=3", "--out-dir", str(d)]) == 0
        outs.append(d)
    for f in ("report.json", "episodes.jsonl", "trace_check.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    rep = json.loads((outs[0] / "report.json").read_text())
    assert rep["n_envs"] == 3 and "median_latency_ms" not in rep
    assert set(json.loads((outs[0] / "timing.json").read_text())) == {"median_latency_ms",
                                                                       "mean_latency_ms"}


def test_run_bugtrap_svg(tmp_path):
    assert main(["run", "--env", "bugtrap", "--max-time", "5", "--out-dir", str(tmp_path)]) == 0
    svg = (tmp_path / "trajectory.svg").read_text()
    assert modes_in_svg(svg) == ["G", "E"]
    lines = (tmp_path / "episode.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["record"] == "episode"


def test_verify_small(tmp_path):
    assert main(["verify", "--samples", "1000", "--set", "verify.n_envs=2",
                 "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "feasibility.json").read_text())
    assert rep["n_samples"] == 1000 and 0.0 <= rep["fraction_feasible"] <= 1.0


def test_train_tiny(tmp_path, capsys):
    args = ["train", "--quiet", "--set", "train.n_samples=64", "--set", "train.epochs=1",
            "--set", "train.n_envs=1", "--dataset", str(tmp_path / "d.jsonl"), "--out-dir",
            str(tmp_path)]
    assert main(args) == 0
    assert (tmp_path / "d.jsonl").exists()
    first = (tmp_path / "model.json").read_bytes()
    assert main(args) == 0  # second run reads the cached dataset
    assert (tmp_path / "model.json").read_bytes() == first
    assert "model.json" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text("version: 1\nbench:\n  policy: greedy\n")
    assert main(["bench", "--config", str(p), "--out-dir", str(tmp_path)]) == 2
    assert f"{p}:2:" in capsys.readouterr().err


def test_missing_model_exit_code(tmp_path, capsys):
    assert main(["run", "--model", str(tmp_path / "none.json"), "--out-dir", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err
