import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from gcpstereo.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from gcpstereo.imageio import load_disparity_png, save_disparity_png
from gcpstereo.synthetic import random_dot_dataset, write_dataset


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    write_dataset(random_dot_dataset(3, (24, 24), 5, seed=1), d)
    return d


@pytest.fixture(scope="module")
def model(data_dir, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "net.bin"
    assert main(["train", str(data_dir), "--model", str(path), "--epochs", "2", "--seed", "1"]) == EXIT_OK
    return path


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestTrain:
    def test_outputs(self, model):
        assert model.stat().st_size > 0
        log = rows(str(model) + ".log.csv")
        assert [r["epoch"] for r in log] == ["0", "1", "2"]

    def test_missing_dir(self, tmp_path, capsys):
        missing = tmp_path / "nowhere"
        assert main(["train", str(missing), "--model", str(tmp_path / "m.bin")]) == EXIT_USAGE
        assert str(missing) in capsys.readouterr().err

    def test_empty_dir(self, tmp_path):
        assert main(["train", str(tmp_path), "--model", str(tmp_path / "m.bin")]) == EXIT_USAGE

    def test_bad_config(self, data_dir, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("cost_kind = ssd\n")
        argv = ["train", str(data_dir), "--model", str(tmp_path / "m.bin"), "--config", str(cfg)]
        assert main(argv) == EXIT_USAGE

    def test_usage_error(self):
        assert main(["train"]) == EXIT_USAGE


class TestMatch:
    def test_self_match(self, data_dir, tmp_path):
        left = str(data_dir / "000000_left.png")
        out = tmp_path / "d.png"
        assert main(["match", left, left, "--out", str(out), "--dmax", "5"]) == EXIT_OK
        disp = np.nan_to_num(load_disparity_png(out))
        assert np.all(disp[4:-4, 4:-4] == 0)

    def test_dumps(self, data_dir, model, tmp_path):
        out = tmp_path / "d.png"
        argv = ["match", str(data_dir / "000000_left.png"), str(data_dir / "000000_right.png"),
                "--out", str(out), "--model", str(model), "--dmax", "5",
                "--dump-gcp", "--dump-confidence", "--preview"]
        assert main(argv) == EXIT_OK
        for suffix in ("_gcp.png", "_confidence.png", "_confidence.bin", "_color.png"):
            assert os.path.isfile(tmp_path / f"d{suffix}")

    def test_dump_needs_model(self, data_dir, tmp_path):
        left = str(data_dir / "000000_left.png")
        assert main(["match", left, left, "--out", str(tmp_path / "d.png"), "--dump-gcp"]) == EXIT_USAGE

    def test_missing_model(self, data_dir, tmp_path):
        left = str(data_dir / "000000_left.png")
        argv = ["match", left, left, "--out", str(tmp_path / "d.png"), "--model", str(tmp_path / "no.bin")]
        assert main(argv) == EXIT_USAGE

    def test_unreadable_model(self, data_dir, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"junk")
        left = str(data_dir / "000000_left.png")
        argv = ["match", left, left, "--out", str(tmp_path / "d.png"), "--model", str(bad)]
        assert main(argv) == EXIT_FAILURE

    def test_size_mismatch(self, tmp_path):
        from gcpstereo.imageio import save_gray_png

        save_gray_png(np.random.default_rng(0).random((10, 10)), tmp_path / "a.png")
        save_gray_png(np.random.default_rng(1).random((10, 12)), tmp_path / "b.png")
        argv = ["match", str(tmp_path / "a.png"), str(tmp_path / "b.png"), "--out", str(tmp_path / "d.png")]
        assert main(argv) == EXIT_USAGE


class TestEval:
    def test_rows(self, data_dir, model, tmp_path, capsys):
        argv = ["eval", str(data_dir), "--model", str(model), "--dmax", "5", "--out-dir", str(tmp_path)]
        assert main(argv) == EXIT_OK
        report = rows(tmp_path / "frames.csv")
        assert len(report) == 3
        for r in report:
            assert float(r["improvement"]) == pytest.approx(float(r["error_baseline"]) - float(r["error_refined"]))
        assert "mean improvement" in capsys.readouterr().out

    def test_perfect_predictions(self, tmp_path):
        data = tmp_path / "one"
        frames = random_dot_dataset(1, (16, 16), 4, seed=2)
        write_dataset(frames, data)
        preds = tmp_path / "preds"
        preds.mkdir()
        save_disparity_png(frames[0][2], preds / "000000_disp.png")
        argv = ["eval", str(data), "--predictions", str(preds), "--out-dir", str(tmp_path)]
        assert main(argv) == EXIT_OK
        assert float(rows(tmp_path / "frames.csv")[0]["error_baseline"]) == 0.0

    def test_empty_dir(self, tmp_path):
        assert main(["eval", str(tmp_path)]) == EXIT_USAGE

    def test_all_frames_fail(self, data_dir, tmp_path):
        argv = ["eval", str(data_dir), "--predictions", str(tmp_path), "--out-dir", str(tmp_path)]
        assert main(argv) == EXIT_FAILURE


class TestSweep:
    def test_sweep(self, data_dir, model, tmp_path):
        argv = ["sweep-theta", str(data_dir), "--model", str(model), "--dmax", "5",
                "--thetas", "0,0.5,1", "--out-dir", str(tmp_path)]
        assert main(argv) == EXIT_OK
        assert [r["theta"] for r in rows(tmp_path / "theta_sweep.csv")] == ["0.0", "0.5", "1.0"]

    def test_bad_thetas(self, data_dir, model, tmp_path):
        base = ["sweep-theta", str(data_dir), "--model", str(model), "--out-dir", str(tmp_path)]
        assert main(base + ["--thetas", "a,b"]) == EXIT_USAGE
        assert main(base + ["--thetas", "1.5"]) == EXIT_USAGE


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gcpstereo", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sweep-theta" in proc.stdout
