import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from geen.cli import main, parse_config_file
from geen.data import Dataset, load_dataset, save_dataset

TINY_CONFIG = """\
# desk-scale settings
m = 24
n_obs_train = 60
n_obs_val = 20
batch_obs = 20
max_epochs = 3
patience = 2
lambda = 0.3
w = 1.0
"""


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def simulate_tiny(runner, out_dir, seed=7, experiment="baseline", sizes="200,60,60"):
    result = invoke(
        runner, "simulate", "--experiment", experiment, "--sizes", sizes,
        "--seed", seed, "--out", out_dir,
    )
    assert result.exit_code == 0, result.output
    return out_dir


def strip_wall_time(path: Path) -> dict:
    doc = json.loads(path.read_text())
    doc.pop("wall_time_seconds", None)
    return doc


def tree_bytes(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            if p.name == "metadata.json":
                text = json.dumps(strip_wall_time(p), sort_keys=True)
                out[str(p.relative_to(root))] = text.replace(str(root), "<root>")
            else:
                out[str(p.relative_to(root))] = p.read_bytes()
    return out


class TestConfigFile:
    def test_parses_known_keys(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text(TINY_CONFIG)
        cfg = parse_config_file(path)
        assert cfg["m"] == 24 and cfg["lam"] == 0.3 and cfg["w"] == 1.0

    def test_rejects_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("bogus = 3\n")
        with pytest.raises(Exception, match="unknown config key"):
            parse_config_file(path)

    def test_bandwidth_n_values(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("bandwidth_n = m\n")
        assert parse_config_file(path)["bandwidth_n"] is None
        path.write_text("bandwidth_n = 500\n")
        assert parse_config_file(path)["bandwidth_n"] == 500


class TestSimulate:
    def test_writes_three_files(self, runner, tmp_path):
        out = simulate_tiny(runner, tmp_path / "d")
        for name in ("train.csv", "val.csv", "test.csv"):
            assert (out / name).exists()
        ds = load_dataset(out / "train.csv")
        assert ds.n_pts == 200 and ds.k == 4 and ds.truth is not None
        header = (out / "train.csv").read_text().splitlines()[:4]
        assert header[0] == "# geen-dataset v1"

    def test_unknown_experiment_exit_2_with_names(self, runner, tmp_path):
        result = runner.invoke(main, [
            "simulate", "--experiment", "nope", "--sizes", "10,10,10",
            "--seed", "1", "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2
        assert "baseline" in result.output and "double_error" in result.output

    def test_bad_sizes_exit_2(self, runner, tmp_path):
        result = runner.invoke(main, [
            "simulate", "--experiment", "baseline", "--sizes", "10,10",
            "--seed", "1", "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2

    def test_rerun_byte_identical(self, runner, tmp_path):
        a = simulate_tiny(runner, tmp_path / "a")
        b = simulate_tiny(runner, tmp_path / "b")
        assert tree_bytes(a) == tree_bytes(b)


class TestTrain:
    @pytest.fixture()
    def data_dir(self, runner, tmp_path):
        return simulate_tiny(runner, tmp_path / "data")

    @pytest.fixture()
    def config_path(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text(TINY_CONFIG)
        return path

    def test_artifacts_written(self, runner, tmp_path, data_dir, config_path):
        out = tmp_path / "run"
        result = invoke(runner, "train", "--data", data_dir, "--config", config_path,
                        "--seed", 1, "--out", out)
        assert result.exit_code == 0, result.output
        assert (out / "model.json").exists()
        assert (out / "history.csv").exists()
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["command"] == "train"
        assert meta["args"]["experiment"] == "baseline"
        history = (out / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_loss"
        assert len(history) >= 2

    def test_m_one_rejected_before_training(self, runner, tmp_path, data_dir):
        bad = tmp_path / "bad.txt"
        bad.write_text("m = 1\n")
        result = runner.invoke(main, [
            "train", "--data", str(data_dir), "--config", str(bad),
            "--out", str(tmp_path / "run"),
        ])
        assert result.exit_code == 2
        assert "m must be >= 2" in result.output

    def test_truth_isolation_identical_model_bytes(self, runner, tmp_path, data_dir, config_path):
        stripped_dir = tmp_path / "stripped"
        stripped_dir.mkdir()
        for name in ("train", "val"):
            ds = load_dataset(data_dir / f"{name}.csv")
            save_dataset(ds.without_truth(), stripped_dir / f"{name}.csv")
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        r1 = invoke(runner, "train", "--data", data_dir, "--config", config_path,
                    "--seed", 3, "--out", out1)
        r2 = invoke(runner, "train", "--data", stripped_dir, "--config", config_path,
                    "--seed", 3, "--out", out2)
        assert r1.exit_code == 0 and r2.exit_code == 0
        assert (out1 / "model.json").read_bytes() == (out2 / "model.json").read_bytes()

    def test_missing_data_exit_2(self, runner, tmp_path):
        result = runner.invoke(main, [
            "train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "run"),
        ])
        assert result.exit_code == 2

    def test_collapse_exit_3(self, runner, tmp_path, config_path):
        # constant columns cannot support bandwidth selection
        bad_dir = tmp_path / "bad"
        bad_dir.mkdir()
        feats = np.ones((50, 3))
        feats[:, 0] = np.linspace(0, 1, 50)
        feats[:, 1] = np.linspace(1, 2, 50)
        for name in ("train", "val"):
            save_dataset(Dataset(feats), bad_dir / f"{name}.csv")
        result = runner.invoke(main, [
            "train", "--data", str(bad_dir), "--config", str(config_path),
            "--out", str(tmp_path / "run"),
        ])
        assert result.exit_code == 3
        assert "collapse" in result.output


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    runner = CliRunner()
    root = tmp_path_factory.mktemp("pipeline")
    data_dir = simulate_tiny(runner, root / "data")
    config_path = root / "cfg.txt"
    config_path.write_text(TINY_CONFIG)
    out = root / "run"
    result = invoke(runner, "train", "--data", data_dir, "--config", config_path,
                    "--seed", 1, "--out", out)
    assert result.exit_code == 0
    return runner, data_dir, config_path, out


class TestEvaluateDiagnoseReport:
    def test_evaluate_writes_report_and_scatter(self, trained):
        runner, data_dir, _, run_dir = trained
        result = invoke(runner, "evaluate", "--model", run_dir / "model.json",
                        "--data", data_dir, "--out", run_dir)
        assert result.exit_code == 0, result.output
        doc = json.loads((run_dir / "eval.json").read_text())
        assert doc["experiment"] == "baseline"
        assert -1.0 <= doc["corr_latent"] <= 1.0
        scatter = (run_dir / "scatter.csv").read_text().splitlines()
        assert scatter[0] == "xstar,xhat"
        assert len(scatter) == 61  # 60 test rows

    def test_evaluate_without_truth_exit_2(self, trained, tmp_path):
        runner, data_dir, _, run_dir = trained
        bare = tmp_path / "bare"
        bare.mkdir()
        ds = load_dataset(data_dir / "test.csv")
        save_dataset(ds.without_truth(), bare / "test.csv")
        result = runner.invoke(main, [
            "evaluate", "--model", str(run_dir / "model.json"),
            "--data", str(bare), "--out", str(tmp_path / "out"),
        ])
        assert result.exit_code == 2
        assert "ground truth" in result.output

    def test_diagnose_curve_shape(self, trained, tmp_path):
        runner, data_dir, config_path, _ = trained
        out = tmp_path / "diag"
        result = invoke(runner, "diagnose", "--data", data_dir, "--config", config_path,
                        "--noise", "0,0.5,1.0", "--seed", 2, "--out", out)
        assert result.exit_code == 0, result.output
        rows = (out / "diagnostic.csv").read_text().splitlines()
        assert rows[0] == "noise_std,mean_loss"
        assert len(rows) == 4
        stds = [float(r.split(",")[0]) for r in rows[1:]]
        assert stds == [0.0, 0.5, 1.0]

    def test_diagnose_requires_zero(self, trained, tmp_path):
        runner, data_dir, config_path, _ = trained
        result = runner.invoke(main, [
            "diagnose", "--data", str(data_dir), "--config", str(config_path),
            "--noise", "0.5,1.0", "--out", str(tmp_path / "d"),
        ])
        assert result.exit_code == 2

    def test_report_table(self, trained, tmp_path):
        runner, data_dir, _, run_dir = trained
        invoke(runner, "evaluate", "--model", run_dir / "model.json",
               "--data", data_dir, "--out", run_dir)
        out_csv = tmp_path / "table.csv"
        result = invoke(runner, "report", run_dir, "--out", out_csv)
        assert result.exit_code == 0, result.output
        rows = out_csv.read_text().splitlines()
        assert rows[0] == "experiment,n_runs,corr_min,corr_median,corr_max,corr_x1"
        cells = rows[1].split(",")
        assert cells[0] == "baseline" and cells[1] == "1"
        assert cells[2] == cells[3] == cells[4]

    def test_report_missing_eval_exit_2(self, trained, tmp_path):
        runner, *_ = trained
        empty = tmp_path / "empty_run"
        empty.mkdir()
        result = runner.invoke(main, ["report", str(empty), "--out", str(tmp_path / "t.csv")])
        assert result.exit_code == 2


class TestDeterminism:
    def test_train_rerun_byte_identical(self, runner, tmp_path):
        data_dir = simulate_tiny(runner, tmp_path / "data")
        config_path = tmp_path / "cfg.txt"
        config_path.write_text(TINY_CONFIG)
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            result = invoke(runner, "train", "--data", data_dir, "--config", config_path,
                            "--seed", 5, "--out", out)
            assert result.exit_code == 0
            invoke(runner, "evaluate", "--model", out / "model.json",
                   "--data", data_dir, "--out", out)
            invoke(runner, "diagnose", "--data", data_dir, "--config", config_path,
                   "--noise", "0,0.5", "--seed", 1, "--out", out / "diag")
            outs.append(tree_bytes(out))
        assert outs[0] == outs[1]
