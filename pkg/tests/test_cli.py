import json
import math

import numpy as np
import pytest

from mvtae import cli
from mvtae.experiment import (
    ExperimentConfig,
    build_split,
    load_config,
    read_csv,
    sweep_seed,
    write_csv,
)

TINY = ["--window-size", "10", "--step", "25", "--hidden-size", "4", "--alpha-widths", "6,6", "--epochs", "1"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert run("train", "--out", out, *TINY) == 0
    return out


def test_generate_defaults(tmp_path, capsys):
    assert run("generate", "--out", tmp_path / "a") == 0
    assert run("generate", "--out", tmp_path / "b") == 0
    a = (tmp_path / "a" / cli.SERIES_FILE).read_bytes()
    assert a == (tmp_path / "b" / cli.SERIES_FILE).read_bytes()
    header, rows = read_csv(tmp_path / "a" / cli.SERIES_FILE)
    assert header == ["t", "sine_1", "sine_2", "noise", "combined_signal"]
    assert len(rows) == 6000 and all(len(r) == 5 for r in rows)
    combined = np.array([r[4] for r in rows])
    assert combined.min() >= -6 and combined.max() <= 6
    assert b"\r\n" not in a
    assert "combined_signal" in capsys.readouterr().out


def test_train_writes_model_and_report(trained):
    report = json.loads((trained / cli.REPORT_FILE).read_text())
    assert len(report["encoder_decoder"]["loss_history"]) == 1
    assert set(report["test"]) == {"mse", "mae", "r_squared", "n"}
    assert "seconds" not in report["encoder_decoder"]
    assert (trained / cli.MODEL_FILE).read_bytes().startswith(b"MVTAE-MODEL\n")


def test_train_epochs_zero_gives_empty_histories(tmp_path):
    assert run("train", "--out", tmp_path, *TINY[:-2], "--epochs", "0") == 0
    report = json.loads((tmp_path / cli.REPORT_FILE).read_text())
    assert report["encoder_decoder"]["loss_history"] == [] and report["alpha"]["loss_history"] == []


def test_eval_matches_train_report(trained):
    assert run("eval", "--out", trained) == 0
    ev = json.loads((trained / cli.EVAL_FILE).read_text())
    report = json.loads((trained / cli.REPORT_FILE).read_text())
    assert ev == report["test"]
    header, rows = read_csv(trained / cli.TRACE_FILE)
    assert header == ["window_end_index", "target_denorm", "pred_denorm"]
    cfg = ExperimentConfig(window_size=10, step=25)
    assert len(rows) == len(build_split(cfg).test)
    assert all(abs(r[1]) <= 6.0 for r in rows)


def test_hidden_dump(trained):
    assert run("hidden", "--out", trained) == 0
    header, rows = read_csv(trained / cli.HIDDEN_FILE)
    assert header == [f"h_{j}" for j in range(4)]
    h = np.array(rows)
    assert h.shape[1] == 4 and np.all(np.abs(h) < 1.0)


def test_eval_rejects_window_mismatch_and_missing_model(trained, tmp_path):
    assert run("eval", "--out", tmp_path, "--model", trained / cli.MODEL_FILE, "--window-size", "12") == 1
    assert run("eval", "--out", tmp_path, "--model", tmp_path / "nope.mvtae") == 1


def test_sweep_single_value_matches_train(tmp_path):
    assert run("sweep", "--out", tmp_path / "s", *TINY, "--sweep-axis", "batch_size", "--sweep-values", "8") == 0
    header, rows = read_csv(tmp_path / "s" / "sweep_batch_size.csv")
    assert header == ["axis_value", "mse", "mae", "r_squared", "seed", "seconds"]
    assert len(rows) == 1
    seed = sweep_seed(0, "batch_size", 8)
    assert int(rows[0][4]) == seed
    assert run("train", "--out", tmp_path / "t", *TINY, "--batch-size", "8", "--seed", seed) == 0
    test = json.loads((tmp_path / "t" / cli.REPORT_FILE).read_text())["test"]
    assert rows[0][1:4] == [test["mse"], test["mae"], test["r_squared"]]


def test_sweep_continues_past_failed_cell(tmp_path, capsys):
    code = run("sweep", "--out", tmp_path, *TINY, "--sweep-axis", "window_size", "--sweep-values", "1,10")
    assert code == 0
    _, rows = read_csv(tmp_path / "sweep_window_size.csv")
    assert [r[0] for r in rows] == [1, 10]
    assert math.isnan(rows[0][3]) and not math.isnan(rows[1][3])
    assert "1 cell(s) failed" in capsys.readouterr().out


def test_baseline_grid_deterministic(tmp_path):
    args = ("--window-size", "10", "--step", "25", "--epochs", "1",
            "--grid-batch-sizes", "16", "--grid-lstm-sizes", "4")
    assert run("baseline", "--out", tmp_path / "a", *args) == 0
    assert run("baseline", "--out", tmp_path / "b", *args) == 0
    a = (tmp_path / "a" / cli.GRID_FILE).read_bytes()
    assert a == (tmp_path / "b" / cli.GRID_FILE).read_bytes()
    header, rows = read_csv(tmp_path / "a" / cli.GRID_FILE)
    assert header == ["batch_size", "lstm_size", "mse", "mae", "r_squared"] and len(rows) == 1


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--no-such-flag"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--epochs", "many"])
    assert exc.value.code == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nwidth = 3\n")
    assert run("train", "--config", bad) == 1
    misplaced = tmp_path / "misplaced.ini"
    misplaced.write_text("[dataset]\nseed = 3\n")
    assert run("train", "--config", misplaced) == 1
    assert run("train", "--config", tmp_path / "missing.ini") == 1
    assert run("sweep", "--sweep-axis", "colour") == 1


def test_numeric_failure_exits_2(tmp_path, capsys):
    assert run("train", "--out", tmp_path, *TINY, "--lr", "nan") == 2
    assert "runtime error" in capsys.readouterr().err


def test_config_file_and_flag_layering(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text(ExperimentConfig(hidden_size=16, epochs=3).to_ini())
    cfg = load_config(ini, {"epochs": 5, "seed": None})
    assert cfg.hidden_size == 16 and cfg.epochs == 5 and cfg.seed == 0
    assert load_config(ini) == ExperimentConfig(hidden_size=16, epochs=3)


def test_csv_roundtrip_full_precision(tmp_path):
    g = np.random.default_rng(3)
    rows = [[int(i), float(x), float(y)] for i, (x, y) in enumerate(g.normal(size=(50, 2)) * 10.0 ** g.integers(-20, 20, (50, 2)))]
    rows.append([50, 0.1 + 0.2, -1e-300])
    path = tmp_path / "x.csv"
    write_csv(path, ["i", "x", "y"], rows)
    header, back = read_csv(path)
    assert header == ["i", "x", "y"] and back == rows
