"""End-to-end checks of the command-line tool in fresh subprocesses."""

import pytest

from conftest import run_cli
from ieanet.training import METRICS_HEADER

DATA = ["--synth-train", "32", "--synth-test", "16", "--num-classes", "2",
        "--data-seed", "5"]
MODEL = ["--depth", "1", "--channels", "4", "--m", "1"]
SGD = ["--epochs", "2", "--batch-size", "8", "--lr", "0.05"]


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_train")
    res = run_cli(["train", *DATA, *MODEL, *SGD,
                   "--seeds", "0,1", "--out", out])
    assert res.returncode == 0, res.stderr
    return out


class TestTrain:
    def test_artifacts_written(self, train_dir):
        for name in ("runspec.txt", "metrics_seed0.csv", "metrics_seed1.csv",
                     "model_seed0.ieac", "model_seed1.ieac"):
            assert (train_dir / name).is_file(), name

    def test_metrics_header(self, train_dir):
        lines = (train_dir / "metrics_seed0.csv").read_text().splitlines()
        assert lines[0] == METRICS_HEADER
        assert len(lines) == 3  # header + 2 epochs

    def test_runspec_echoes_resolved_settings(self, train_dir):
        text = (train_dir / "runspec.txt").read_text()
        assert text.splitlines()[0] == "command = train"
        for line in ("epochs = 2", "lr = 0.05", "seeds = 0,1",
                     "batch_size = 8", "channels = 4"):
            assert line in text, line

    def test_refuses_nonempty_out_dir(self, train_dir, tmp_path):
        res = run_cli(["train", *DATA, *MODEL, *SGD, "--out", train_dir])
        assert res.returncode == 2
        assert "not empty" in res.stderr

    def test_force_reuses_out_dir(self, tmp_path):
        out = tmp_path / "reused"
        out.mkdir()
        (out / "sentinel.txt").write_text("x")
        res = run_cli(["train", *DATA, *MODEL, *SGD, "--force", "--out", out])
        assert res.returncode == 0, res.stderr

    def test_rerun_reproduces_checkpoint_bytes(self, train_dir, tmp_path):
        out = tmp_path / "replay"
        res = run_cli(["train", "--config", train_dir / "runspec.txt",
                       "--out", out])
        assert res.returncode == 0, res.stderr
        for name in ("model_seed0.ieac", "model_seed1.ieac"):
            assert (out / name).read_bytes() == (train_dir / name).read_bytes()

    def test_missing_idx_paths_exit_2(self, tmp_path):
        res = run_cli(["train", "--data", "idx", "--out", tmp_path / "x"])
        assert res.returncode == 2
        assert "--train-images" in res.stderr

    def test_invalid_batch_size_exit_2(self, tmp_path):
        res = run_cli(["train", *DATA, *MODEL, "--batch-size", "1",
                       "--out", tmp_path / "x"])
        assert res.returncode == 2
        assert "batch_size" in res.stderr

    def test_unknown_flag_exit_2(self, tmp_path):
        res = run_cli(["train", "--no-such-flag", "--out", tmp_path / "x"])
        assert res.returncode == 2


class TestEval:
    def test_matches_training_log(self, train_dir, tmp_path):
        out = tmp_path / "eval"
        res = run_cli(["eval", *DATA, "--checkpoint",
                       train_dir / "model_seed0.ieac", "--out", out])
        assert res.returncode == 0, res.stderr
        header, row = (out / "eval.csv").read_text().splitlines()
        assert header == "checkpoint,test_error_pct"
        logged = (train_dir / "metrics_seed0.csv").read_text()
        final_err = logged.splitlines()[-1].split(",")[4]
        assert row.split(",")[1] == final_err

    def test_missing_checkpoint_exit_1(self, tmp_path):
        res = run_cli(["eval", *DATA, "--checkpoint", tmp_path / "no.ieac",
                       "--out", tmp_path / "x"])
        assert res.returncode == 1


class TestSweepM:
    def test_requires_two_seeds(self, tmp_path):
        res = run_cli(["sweep-m", *DATA, *MODEL, *SGD, "--m-list", "1,2",
                       "--seeds", "0", "--out", tmp_path / "x"])
        assert res.returncode == 2
        assert "2 seeds" in res.stderr

    def test_artifacts_and_duplicate_warning(self, tmp_path):
        out = tmp_path / "sweep"
        res = run_cli(["sweep-m", *DATA, *MODEL, *SGD, "--m-list", "1,2,2",
                       "--seeds", "0,1", "--out", out])
        assert res.returncode == 0, res.stderr
        assert "duplicate m=2" in res.stderr
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "m,mean_error,std_error"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2"]
        for m in (1, 2):
            for seed in (0, 1):
                assert (out / f"m{m}" / f"metrics_seed{seed}.csv").is_file()
                assert (out / f"m{m}" / f"model_seed{seed}.ieac").is_file()


class TestEnsemble:
    def test_csv_lists_members_then_ensemble(self, train_dir, tmp_path):
        out = tmp_path / "ens"
        res = run_cli(["ensemble", *DATA,
                       "--checkpoints", train_dir / "model_seed0.ieac",
                       train_dir / "model_seed1.ieac", "--out", out])
        assert res.returncode == 0, res.stderr
        lines = (out / "ensemble.csv").read_text().splitlines()
        assert lines[0] == "member,error_pct"
        assert len(lines) == 4
        assert lines[-1].startswith("ensemble,")
        for ln in lines[1:]:
            float(ln.rsplit(",", 1)[1])  # parseable error value

    def test_single_checkpoint_exit_2(self, train_dir, tmp_path):
        res = run_cli(["ensemble", *DATA,
                       "--checkpoints", train_dir / "model_seed0.ieac",
                       "--out", tmp_path / "x"])
        assert res.returncode == 2


class TestAnalyze:
    def test_exports_scores_and_maps(self, train_dir, tmp_path):
        out = tmp_path / "ana"
        res = run_cli(["analyze", *DATA,
                       "--checkpoint", train_dir / "model_seed0.ieac",
                       "--layer", "0", "--probe-batch", "4", "--out", out])
        assert res.returncode == 0, res.stderr
        header, row = (out / "mss.csv").read_text().splitlines()
        assert header == "layer,n,mss_score"
        layer, n, score = row.split(",")
        assert layer == "0" and n == "4"
        assert 0.0 <= float(score) <= 3.0
        pgms = sorted(p.name for p in out.glob("*.pgm"))
        assert pgms == [f"layer0_ch{c}.pgm" for c in range(4)]
        for p in out.glob("*.pgm"):
            assert p.read_bytes().startswith(b"P5\n")

    def test_probe_index_out_of_range_exit_2(self, train_dir, tmp_path):
        res = run_cli(["analyze", *DATA,
                       "--checkpoint", train_dir / "model_seed0.ieac",
                       "--probe-index", "99", "--out", tmp_path / "x"])
        assert res.returncode == 2


class TestConfigFile:
    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs = 2\nlr = 0.05\nbatch-size = 8\n"
                       "synth-train = 32\nsynth-test = 16\nnum-classes = 2\n"
                       "depth = 1\nchannels = 4\n")
        out = tmp_path / "out"
        res = run_cli(["train", "--config", cfg, "--lr", "0.1", "--out", out])
        assert res.returncode == 0, res.stderr
        text = (out / "runspec.txt").read_text()
        assert "lr = 0.1" in text      # command line wins
        assert "epochs = 2" in text    # file value survives
        assert "batch_size = 8" in text

    def test_malformed_line_exit_2(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this is not a key value pair\n")
        res = run_cli(["train", "--config", cfg, "--out", tmp_path / "x"])
        assert res.returncode == 2
        assert "key = value" in res.stderr

    def test_idx_smoke_with_limits(self, digit_paths, tmp_path):
        out = tmp_path / "idx"
        res = run_cli(["train", "--data", "idx",
                       "--train-images", digit_paths["train_images"],
                       "--train-labels", digit_paths["train_labels"],
                       "--test-images", digit_paths["test_images"],
                       "--test-labels", digit_paths["test_labels"],
                       "--limit-train", "100", "--limit-test", "50",
                       *MODEL, *SGD, "--out", out])
        assert res.returncode == 0, res.stderr
        assert (out / "metrics_seed0.csv").is_file()
