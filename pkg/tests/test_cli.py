import csv
import json

import numpy as np
import pytest

from fmrnn import cli
from fmrnn.layers import RBFLayer
from fmrnn.models import load_model

TINY = {
    "synth": {"n_classes": 2, "d": 8, "block_size": 4, "n_frames": 6, "videos_per_class": 4,
              "split_fracs": [0.5, 0.0, 0.5]},
    "train": {"D": 4, "S": 4, "epochs": 1, "batch_forecaster": 4, "batch_classifier": 8,
              "classifier_widths": [8, 4], "classifier_kernels": 4, "base_lr": 0.01},
}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


@pytest.fixture
def dataset(tmp_path, config):
    assert run("gen-synthetic", "--config", config, "--out", tmp_path / "data") == 0
    return tmp_path / "data" / "manifest.json"


@pytest.fixture
def trained(tmp_path, config, dataset):
    out = tmp_path / "run"
    assert run("train", "--config", config, "--data", dataset, "--out", out) == 0
    return out


def _records(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestGenSynthetic:
    def test_writes_manifest_and_files(self, dataset):
        doc = json.loads(dataset.read_text())
        assert len(doc["entries"]) == 8
        for e in doc["entries"]:
            assert (dataset.parent / e["path"]).exists()
        assert (dataset.parent / "config.json").exists()

    def test_same_seed_same_bytes(self, tmp_path, config):
        for name in ("a", "b"):
            assert run("gen-synthetic", "--config", config, "--seed", 5,
                       "--out", tmp_path / name) == 0
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.fmf"))
        assert files
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
        assert ((tmp_path / "a" / "manifest.json").read_bytes()
                == (tmp_path / "b" / "manifest.json").read_bytes())

    def test_unwritable_output(self, tmp_path, config, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert run("gen-synthetic", "--config", config, "--out", blocker / "sub") != 0
        err = capsys.readouterr().err
        assert err.startswith("fmrnn: error:") and err.count("\n") == 1


class TestConfigResolution:
    def test_defaults(self):
        args = cli.build_parser().parse_args(["train", "--out", "x"])
        tc = cli.resolve_config(args)["train"]
        assert (tc["H"], tc["D"], tc["S"], tc["n_kernels"]) == (4, 128, 64, 6)
        assert (tc["w_l2"], tc["w_adv"], tc["base_lr"], tc["decay_rate"]) == (10, 1, 0.001, 0.9)

    def test_flags_win_over_file(self, config):
        args = cli.build_parser().parse_args(
            ["train", "--config", str(config), "--feature-step", "2", "--w-adv", "0",
             "--seed", "9", "--out", "x"])
        cfg = cli.resolve_config(args)
        assert cfg["train"]["D"] == 2 and cfg["train"]["S"] == 4
        assert cfg["train"]["w_adv"] == 0.0
        assert cfg["train"]["seed"] == 9 and cfg["synth"]["seed"] == 9

    def test_unknown_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"train": {"hidden_size": 3}}))
        assert run("param-count", "--config", bad) != 0
        assert "hidden_size" in capsys.readouterr().err

    def test_resolved_config_written(self, trained):
        cfg = json.loads((trained / "config.json").read_text())
        assert cfg["train"]["D"] == 4 and cfg["command"] == "train"


class TestTrain:
    def test_outputs(self, trained):
        for name in ("forecaster.ckpt", "discriminator.ckpt", "classifier.ckpt",
                     "loss_forecaster.jsonl", "loss_classifier.jsonl", "metrics.jsonl"):
            assert (trained / name).exists(), name
        losses = _records(trained / "loss_forecaster.jsonl")
        assert {"l2", "adv", "disc", "total"} <= set(losses[0])
        rec = _records(trained / "metrics.jsonl")[-1]
        assert rec["metrics"]["forecaster_params"] == 101
        assert rec["run_id"] and rec["timestamp"]

    def test_linear_baseline(self, tmp_path, config, dataset):
        out = tmp_path / "lin"
        assert run("train", "--config", config, "--data", dataset, "--mode", "linear",
                   "--what", "forecaster", "--out", out) == 0
        model = load_model(out / "forecaster.ckpt", kind="forecaster")
        assert model.mode == "linear" and model.store.size() == 16

    def test_l2_only(self, tmp_path, config, dataset):
        out = tmp_path / "l2"
        assert run("train", "--config", config, "--data", dataset, "--w-adv", 0,
                   "--what", "forecaster", "--out", out) == 0
        assert not (out / "discriminator.ckpt").exists()
        assert "adv" not in _records(out / "loss_forecaster.jsonl")[0]

    def test_incompatible_segmentation(self, tmp_path, config, dataset, capsys):
        assert run("train", "--config", config, "--data", dataset, "--feature-step", 3,
                   "--out", tmp_path / "bad") != 0
        assert "S=4" in capsys.readouterr().err

    def test_missing_dataset(self, tmp_path, config):
        assert run("train", "--config", config, "--data", tmp_path / "none.json",
                   "--out", tmp_path / "x") != 0


class TestEvaluate:
    def test_accuracy_printed_and_persisted(self, tmp_path, dataset, trained, capsys):
        out = tmp_path / "eval"
        assert run("evaluate", "--data", dataset, "--forecaster", trained / "forecaster.ckpt",
                   "--classifier", trained / "classifier.ckpt", "--observe-frac", 0.2,
                   "--predict-frac", 0.5, "--pooling", "max", "--out", out) == 0
        assert "accuracy" in capsys.readouterr().out
        rec = _records(out / "metrics.jsonl")[-1]
        assert 0.0 <= rec["metrics"]["accuracy"] <= 1.0
        assert rec["config"]["anticipation"]["pooling"] == "max"

    def test_p_sweep_series(self, tmp_path, dataset, trained):
        out = tmp_path / "eval"
        assert run("evaluate", "--data", dataset, "--forecaster", trained / "forecaster.ckpt",
                   "--classifier", trained / "classifier.ckpt", "--pooling", "none",
                   "--p-sweep", "0,0.1,0.2,0.3,0.4,0.5", "--out", out) == 0
        rows = list(csv.reader(open(out / "accuracy_vs_p.csv")))
        assert rows[0] == ["p", "accuracy"] and len(rows) == 7
        assert len(_records(out / "metrics.jsonl")[-1]["series"]["accuracy_vs_p"]) == 6

    def test_missing_checkpoint(self, tmp_path, dataset, capsys):
        assert run("evaluate", "--data", dataset, "--classifier", tmp_path / "no.ckpt",
                   "--predict-frac", 0, "--out", tmp_path / "e") != 0
        assert capsys.readouterr().err.count("\n") == 1

    def test_wrong_checkpoint_kind(self, tmp_path, dataset, trained, capsys):
        assert run("evaluate", "--data", dataset, "--classifier", trained / "forecaster.ckpt",
                   "--out", tmp_path / "e") != 0
        assert "not a classifier" in capsys.readouterr().err


class TestSweep:
    def test_skips_invalid_values(self, tmp_path, config, dataset, caplog):
        out = tmp_path / "sweep"
        assert run("sweep", "--config", config, "--data", dataset, "--axis", "D",
                   "--values", "2,3,4", "--stride", 1, "--w-adv", 0, "--out", out) == 0
        rows = list(csv.reader(open(out / "sweep_D.csv")))
        assert [r[0] for r in rows[1:]] == ["2", "3", "4"]
        assert [r[2] for r in rows[1:]] == ["ok", "ok", "ok"]
        out2 = tmp_path / "sweep2"
        assert run("sweep", "--config", config, "--data", dataset, "--axis", "D",
                   "--values", "4,3,8", "--w-adv", 0, "--out", out2) == 0
        rows = list(csv.reader(open(out2 / "sweep_D.csv")))
        assert [r[2] for r in rows[1:]] == ["ok", "skipped", "ok"]
        assert "skip D=3" in caplog.text
        skipped = [r for r in _records(out2 / "metrics.jsonl") if r.get("status") == "skipped"]
        assert len(skipped) == 1 and skipped[0]["value"] == 3

    def test_hidden_axis(self, tmp_path, config, dataset):
        out = tmp_path / "sweepH"
        assert run("sweep", "--config", config, "--data", dataset, "--axis", "H",
                   "--values", "2,4", "--w-adv", 0, "--out", out) == 0
        recs = [r for r in _records(out / "metrics.jsonl") if r.get("status") == "ok"]
        assert [r["value"] for r in recs] == [2, 4]
        assert recs[0]["metrics"]["params"] < recs[1]["metrics"]["params"]


class TestCorrAnalysis:
    def test_curve(self, tmp_path, dataset):
        out = tmp_path / "corr"
        assert run("corr-analysis", "--data", dataset, "--steps", "2,3,4", "--out", out) == 0
        rows = list(csv.reader(open(out / "correlation_vs_D.csv")))
        assert [r[0] for r in rows[1:]] == ["2", "4"]


class TestParamCount:
    def test_reports_exact_and_approximation(self, capsys):
        assert run("param-count") == 0
        text = capsys.readouterr().out
        assert "exact total 101" in text and "4(H+1) = 20" in text and "exact 5244928" in text
        assert "4(dH+d^2) = 20971520" in text


class TestVerify:
    def test_corrupted_backward_is_named(self, monkeypatch, capsys):
        original = RBFLayer.backward

        def corrupted(self, dout, cache):
            dh = original(self, dout, cache)
            self.store.grad(self.s_name)[...] *= 1.5
            return dh

        monkeypatch.setattr(RBFLayer, "backward", corrupted)
        assert run("verify") != 0
        captured = capsys.readouterr()
        assert "FAIL  grad:rbf" in captured.out
        assert "grad:rbf" in captured.err
