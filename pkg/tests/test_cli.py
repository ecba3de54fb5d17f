import json

import pytest

from sparsefield.cli import main, parse_tags
from sparsefield.errors import LayoutError
from sparsefield.io import load_model, read_csv_matrix

FAST = ["--epochs", "5", "--hidden", "8"]


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    assert main(["simulate", "--out", str(out)]) == 0
    return out


def test_simulate_inventory(dataset_dir):
    names = {p.name for p in dataset_dir.iterdir()}
    assert {"manifest.json", "snapshots.csv", "inputs.csv", "layout.json", "truth"} <= names
    header, data = read_csv_matrix(dataset_dir / "snapshots.csv", header=True)
    assert data.shape == (16, 2000)
    assert header[0] == 1.0 and header[-1] == 2000.0
    _, inputs = read_csv_matrix(dataset_dir / "inputs.csv", header=True)
    assert inputs.shape == (2, 2000)
    assert len(list((dataset_dir / "truth").glob("frame_*.csv"))) == 200


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--duration", "40", "--truth-stride", "0", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("snapshots.csv", "inputs.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_sim_dt_exits_with_config_error(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "x"), "--sim-dt", "5"]) == 2
    assert "stability" in capsys.readouterr().err
    assert not (tmp_path / "x" / "manifest.json").exists()


def test_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("SPARSEFIELD_NOISE", "0")
    assert main(["simulate", "--out", str(tmp_path / "clean"), "--duration", "20",
                 "--truth-stride", "0"]) == 0
    monkeypatch.delenv("SPARSEFIELD_NOISE")
    assert main(["simulate", "--out", str(tmp_path / "noisy"), "--duration", "20",
                 "--truth-stride", "0", "--noise", "0"]) == 0
    a = (tmp_path / "clean" / "snapshots.csv").read_bytes()
    assert a == (tmp_path / "noisy" / "snapshots.csv").read_bytes()


def test_missing_dataset_is_file_error(tmp_path):
    assert main(["train", "--dataset", str(tmp_path / "none"), "--out", str(tmp_path),
                 "--sensors", "1,2"]) == 4


def test_duplicate_tags_rejected_before_compute(tmp_path):
    with pytest.raises(LayoutError):
        parse_tags("3,3")
    # the dataset path does not exist, so reaching the loader would exit 4
    assert main(["train", "--dataset", str(tmp_path / "none"), "--out", str(tmp_path),
                 "--sensors", "3,3"]) == 2


def test_train_and_evaluate(dataset_dir, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--dataset", str(dataset_dir), "--out", str(run),
                 "--sensors", "1,2"] + FAST) == 0
    report = json.loads((run / "report.json").read_text())
    for key in ("n_f", "n_s", "condition_number", "lstm_train_loss", "lstm_val_loss"):
        assert key in report
    assert load_model(run / "model.json").layout.s_tag == (1, 2)

    ev = tmp_path / "eval"
    assert main(["evaluate", "--dataset", str(dataset_dir), "--out", str(ev),
                 "--model", str(run / "model.json"), "--timestamps", "1500,1800",
                 "--perfect-model"]) == 0
    summary = json.loads((ev / "summary.json").read_text())
    for key in ("train_rmse", "test_rmse", "n_s", "n_f", "condition_number", "perfect_model"):
        assert key in summary
    assert summary["perfect_model"]["test_rmse"] <= summary["test_rmse"] + 1e-12
    snae = (ev / "snae.csv").read_text().splitlines()
    assert snae[0] == "t,snae" and len(snae) == 201
    heat = {p.name for p in (ev / "heatmaps").iterdir()}
    assert {"predicted_t1500.pgm", "stae_t1500.pgm", "predicted_t1800.csv"} <= heat


def test_evaluate_rejects_bad_timestamp(dataset_dir, tmp_path, capsys):
    code = main(["evaluate", "--dataset", str(dataset_dir), "--out", str(tmp_path),
                 "--sensors", "1,2", "--timestamps", "99999"] + FAST)
    assert code == 2
    assert "valid range" in capsys.readouterr().err


def test_full_order_threshold(dataset_dir, tmp_path):
    assert main(["train", "--dataset", str(dataset_dir), "--out", str(tmp_path),
                 "--sensors", "1,2", "--threshold", "1.0"] + FAST) == 0
    assert json.loads((tmp_path / "report.json").read_text())["n_f"] == 16


def test_full_kl_baseline(dataset_dir, tmp_path):
    assert main(["evaluate", "--dataset", str(dataset_dir), "--out", str(tmp_path),
                 "--baseline", "full-kl"] + FAST) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["baseline"] == "full-kl" and summary["n_s"] == summary["n_f"]


def test_sweeps(dataset_dir, tmp_path):
    assert main(["sweep-count", "--dataset", str(dataset_dir), "--out", str(tmp_path),
                 "--max-count", "3", "--reuse-temporal"] + FAST) == 0
    header = (tmp_path / "sweep_count.csv").read_text().splitlines()
    assert header[0].startswith("sensors,s_tag,n_s,n_f,condition_number")
    assert len(header) == 4

    assert main(["sweep-scheme", "--dataset", str(dataset_dir), "--out", str(tmp_path),
                 "--anchor", "13", "--reuse-temporal"] + FAST) == 0
    lines = (tmp_path / "sweep_scheme.csv").read_text().splitlines()
    assert len(lines) == 16
    meta = json.loads((tmp_path / "sweep_scheme.json").read_text())
    assert meta["anchor"] == 13
    rmses = [float(l.split(",")[-1]) for l in lines[1:]]
    assert meta["winner"]["test_rmse"] == min(rmses)
    assert all(isinstance(t, list) for t in meta["ill_conditioned"])


def test_unknown_command_exit_code():
    assert main(["nonsense"]) == 2
