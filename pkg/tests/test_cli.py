import json

import numpy as np
import pytest

from sspe import jsonio
from sspe.cli import run
from sspe.models import save_point_cloud

from conftest import random_blob


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "blob.xyz"
    save_point_cloud(random_blob(npts=30, scale=0.12), path)
    return str(path)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory, model_path):
    out = tmp_path_factory.mktemp("data") / "train.jsonl"
    code = run([
        "gen-data", "--model", model_path, "--scenes", "12", "--occ", "0:0.2",
        "--seed", "7", "--out", str(out), "--n", "6", "--m", "8",
    ])
    assert code == 0
    return str(out)


@pytest.fixture(scope="module")
def small_checkpoint(tmp_path_factory, small_dataset):
    out = tmp_path_factory.mktemp("ckpt") / "head.json"
    code = run([
        "train", "--data", small_dataset, "--seed", "3", "--out", str(out),
        "--epochs", "2", "--batch", "4", "--feat-dim", "8",
        "--phi-s", "8,8", "--phi-g", "16,8", "--quiet",
    ])
    assert code == 0
    return str(out)


class TestGenData:
    def test_scene_count_and_manifest(self, tmp_path, model_path):
        out = tmp_path / "d.jsonl"
        code = run([
            "gen-data", "--model", model_path, "--scenes", "5", "--occ", "0.3:0.9",
            "--seed", "1", "--out", str(out), "--n", "4", "--m", "6",
        ])
        assert code == 0
        assert len(out.read_text().strip().splitlines()) == 5
        manifest = json.loads((tmp_path / "d.jsonl.manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert manifest["master_seed"] == 1
        assert manifest["config"]["occ"] == {"min_fraction": 0.3, "max_fraction": 0.9}

    def test_occ_preset(self, tmp_path, model_path):
        out = tmp_path / "d.jsonl"
        code = run([
            "gen-data", "--model", model_path, "--scenes", "2", "--occ", "heavy",
            "--seed", "1", "--out", str(out), "--n", "4", "--m", "6",
        ])
        assert code == 0
        manifest = json.loads((tmp_path / "d.jsonl.manifest.json").read_text())
        assert manifest["config"]["occ"] == {"min_fraction": 0.3, "max_fraction": 0.9}

    def test_rerun_byte_identical(self, tmp_path, model_path):
        args = [
            "gen-data", "--model", model_path, "--scenes", "4", "--occ", "0.1:0.5",
            "--seed", "9", "--n", "4", "--m", "6",
        ]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run(args + ["--out", str(a)]) == 0
        assert run(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_replay_from_manifest_byte_identical(self, tmp_path, model_path):
        out = tmp_path / "orig.jsonl"
        argv = [
            "gen-data", "--model", model_path, "--scenes", "4", "--occ", "0.1:0.4",
            "--seed", "21", "--n", "4", "--m", "6", "--out", str(out),
        ]
        assert run(argv) == 0
        original = out.read_bytes()
        manifest = json.loads((tmp_path / "orig.jsonl.manifest.json").read_text())
        assert run(manifest["argv"]) == 0  # replay verbatim
        assert out.read_bytes() == original

    def test_missing_model_is_runtime_error(self, tmp_path):
        code = run([
            "gen-data", "--model", str(tmp_path / "nope.xyz"), "--scenes", "2",
            "--seed", "1", "--out", str(tmp_path / "d.jsonl"),
        ])
        assert code == 2

    def test_seed_required(self, tmp_path, model_path):
        code = run([
            "gen-data", "--model", model_path, "--scenes", "2", "--out", str(tmp_path / "d.jsonl"),
        ])
        assert code == 1


class TestUsageErrors:
    def test_bad_flag_exit_1(self):
        assert run(["train", "--bad-flag"]) == 1

    def test_unknown_subcommand_exit_1(self):
        assert run(["frobnicate"]) == 1

    def test_no_args_exit_1(self):
        assert run([]) == 1


class TestTrainEval:
    def test_train_writes_checkpoint_and_manifest(self, small_checkpoint):
        doc = jsonio.load(small_checkpoint)
        assert doc["version"] == 1
        manifest = jsonio.load(small_checkpoint + ".manifest.json")
        assert manifest["command"] == "train"
        assert manifest["config"]["train_config"]["seed"] == 3

    def test_train_determinism(self, tmp_path, small_dataset):
        args = [
            "train", "--data", small_dataset, "--seed", "5", "--epochs", "2",
            "--batch", "4", "--feat-dim", "8", "--phi-s", "8,8", "--phi-g", "16,8", "--quiet",
        ]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(args + ["--out", str(a)]) == 0
        assert run(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_eval_report_consistent(self, tmp_path, model_path, small_dataset, small_checkpoint):
        out = tmp_path / "report.json"
        code = run([
            "eval", "--checkpoint", small_checkpoint, "--data", small_dataset,
            "--model", model_path, "--out", str(out),
        ])
        assert code == 0
        report = jsonio.load(out)
        from sspe.metrics import add01d_accuracy
        from sspe.models import load_point_cloud

        model = load_point_cloud(model_path)
        recomputed = add01d_accuracy(report["errors"], model, report["failures"])
        assert report["accuracy"] == pytest.approx(recomputed)
        assert report["scenes"] == 12

    def test_eval_rerun_byte_identical(self, tmp_path, model_path, small_dataset, small_checkpoint):
        a, b = tmp_path / "ra.json", tmp_path / "rb.json"
        for out in (a, b):
            assert run([
                "eval", "--checkpoint", small_checkpoint, "--data", small_dataset,
                "--model", model_path, "--out", str(out),
            ]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestBaselineCommand:
    def test_report_written(self, tmp_path, model_path, small_dataset):
        out = tmp_path / "base.json"
        code = run([
            "baseline", "--data", small_dataset, "--model", model_path,
            "--seed", "2", "--out", str(out),
        ])
        assert code == 0
        report = jsonio.load(out)
        assert report["variant"] == "baseline"
        assert report["scenes"] == 12
        # noise-free light-occlusion scenes: the classical pipeline is exact
        assert report["accuracy"] == 100.0


class TestKeypointsCommand:
    def test_output(self, tmp_path, model_path):
        out = tmp_path / "kps.json"
        assert run(["keypoints", "--model", model_path, "--n", "5", "--out", str(out)]) == 0
        doc = jsonio.load(out)
        assert len(doc["points"]) == 5
        assert len(doc["indices"]) == 5


class TestExportFeaturesCommand:
    def test_csv_written(self, tmp_path, small_dataset, small_checkpoint):
        out = tmp_path / "feats.csv"
        code = run([
            "export-features", "--checkpoint", small_checkpoint, "--data", small_dataset,
            "--out", str(out), "--scenes", "2",
        ])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("label,f0")
        assert len(lines) == 1 + 2 * 6 * 4  # scenes * n * (m/2)


class TestAblateCommand:
    def test_two_variants_one_seed(self, tmp_path, model_path, small_dataset):
        out = tmp_path / "ablate.json"
        code = run([
            "ablate", "--variants", "sspe-r,sspe-ours", "--train", small_dataset,
            "--test", small_dataset, "--model", model_path, "--seeds", "1",
            "--epochs", "1", "--batch", "4", "--feat-dim", "8",
            "--phi-s", "8,8", "--phi-g", "16,8", "--out", str(out),
        ])
        assert code == 0
        doc = jsonio.load(out)
        assert set(doc["results"]) == {"sspe-r", "sspe-ours"}
        for row in doc["results"].values():
            assert len(row["accuracy_per_seed"]) == 1


class TestConfigFile:
    def test_config_file_overrides_defaults(self, tmp_path, model_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenes": 3, "m": 6, "n": 4}))
        out = tmp_path / "d.jsonl"
        code = run([
            "--config", str(cfg), "gen-data", "--model", model_path,
            "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        assert len(out.read_text().strip().splitlines()) == 3

    def test_flags_beat_config(self, tmp_path, model_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenes": 3, "m": 6, "n": 4}))
        out = tmp_path / "d.jsonl"
        code = run([
            "--config", str(cfg), "gen-data", "--model", model_path,
            "--scenes", "5", "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        assert len(out.read_text().strip().splitlines()) == 5
