"""End-to-end pipeline runs on tiny synthetic configs: artifact completeness,
byte-identical determinism, and external validation."""

import json
from pathlib import Path

import numpy as np
import pytest

from buscad.nn import TrainConfig
from buscad.pipeline import (
    PreprocessRecipe,
    RunConfig,
    run_pipeline,
    validate_external,
)
from buscad.synth import SynthConfig, write_dataset


def tiny_config(outdir, seed=0, roster=("svm-handcrafted", "knn-handcrafted", "cnn"), sigma=0.05):
    return RunConfig(
        outdir=str(outdir),
        seed=seed,
        synth=SynthConfig(10, 10, 10, height=32, width=32, noise_sigma=sigma, seed=seed),
        ratios=(0.7, 0.15, 0.15),
        recipe=PreprocessRecipe(target_size=32),
        svm_c_grid=(1.0, 10.0),
        svm_gamma_grid=(0.1, 1.0),
        knn_k_range=(1, 3, 5),
        train=TrainConfig(learning_rate=1e-3, max_epochs=3, patience=3, seed=seed),
        pretext_epochs=2,
        roster=roster,
        gradcam_max_images=3,
    )


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_pipeline(tiny_config(out))


class TestRunArtifacts:
    def test_one_metrics_confusion_roc_per_model(self, run_dir):
        for name in ("svm_handcrafted", "knn_handcrafted", "cnn"):
            assert (run_dir / f"metrics_{name}.json").is_file()
            assert (run_dir / f"confusion_{name}.csv").is_file()
            for c in range(3):
                assert (run_dir / f"roc_{name}_class{c}.csv").is_file()

    def test_selection_names_one_winner(self, run_dir):
        text = (run_dir / "selection.txt").read_text()
        assert text.startswith("selected: ")
        winner = text.splitlines()[0].split(": ")[1]
        assert winner in ("svm-handcrafted", "knn-handcrafted", "cnn")

    def test_checkpoint_and_gradcam_panels(self, run_dir):
        assert (run_dir / "cnn.npz").is_file()
        panels = list((run_dir / "gradcam").glob("*.pgm"))
        assert len(panels) == 6  # 3 samples x (heat + blend)
        peaks = json.loads((run_dir / "gradcam" / "peaks.json").read_text())
        assert len(peaks) == 3

    def test_metrics_content_sane(self, run_dir):
        doc = json.loads((run_dir / "metrics_cnn.json").read_text())
        assert 0.0 <= doc["accuracy_standard"] <= 1.0
        assert 0.0 <= doc["malignant_recall"] <= 1.0
        assert len(doc["confusion"]) == 3
        assert "latency_s" not in doc  # latency lives in timings.json

    def test_timings_sidecar(self, run_dir):
        timings = json.loads((run_dir / "timings.json").read_text())
        assert set(timings) == {"svm-handcrafted", "knn-handcrafted", "cnn"}
        assert all(v > 0 for v in timings.values())

    def test_summary_csv_rows(self, run_dir):
        lines = (run_dir / "metrics_summary.csv").read_text().strip().splitlines()
        assert len(lines) == 4  # header + 3 models


class TestRunBehaviors:
    def test_single_roster_selection_trivial(self, tmp_path):
        out = run_pipeline(tiny_config(tmp_path / "one", roster=("knn-handcrafted",)))
        assert "selected: knn-handcrafted" in (out / "selection.txt").read_text()
        assert not (out / "cnn.npz").exists()

    def test_unwritable_outdir_fails_without_metrics(self, tmp_path):
        blocked = tmp_path / "blocked"
        blocked.write_text("a file, not a directory")
        cfg = tiny_config(blocked / "run")
        with pytest.raises(RuntimeError, match=r"\[output\]"):
            run_pipeline(cfg)
        assert not list(tmp_path.glob("**/metrics_*.json"))

    def test_determinism_byte_identical_metrics(self, tmp_path):
        a = run_pipeline(tiny_config(tmp_path / "a", seed=3, roster=("svm-handcrafted", "cnn")))
        b = run_pipeline(tiny_config(tmp_path / "b", seed=3, roster=("svm-handcrafted", "cnn")))
        compared = 0
        for fa in sorted(a.glob("metrics_*.json")) + sorted(a.glob("*.csv")) + [a / "split.json"]:
            fb = b / fa.name
            assert fb.is_file(), fa.name
            assert fa.read_bytes() == fb.read_bytes(), fa.name
            compared += 1
        for fa in sorted(a.glob("roc_*.csv")) + sorted(a.glob("confusion_*.csv")):
            assert fa.read_bytes() == (b / fa.name).read_bytes()
            compared += 1
        assert compared >= 6


class TestValidateExternal:
    def test_self_consistency_and_shift(self, run_dir, tmp_path):
        ckpt = run_dir / "cnn.npz"
        # self-consistency: the run's own dataset
        report_self, delta_self = validate_external(ckpt, run_dir / "dataset" / "manifest.csv")
        assert report_self.accuracy_standard >= 0.0
        # shifted set: same generator, much higher speckle
        shifted = write_dataset(SynthConfig(8, 8, 8, height=32, width=32, noise_sigma=0.28, seed=77), tmp_path / "ext")
        report_shift, delta_shift = validate_external(ckpt, shifted)
        assert delta_shift.delta_mu > delta_self.delta_mu

    def test_empty_external_manifest_errors(self, run_dir, tmp_path):
        bad = tmp_path / "empty.csv"
        bad.write_text("image_path,label,mask_path,source\n")
        with pytest.raises(ValueError, match="empty manifest"):
            validate_external(run_dir / "cnn.npz", bad)


class TestConfigValidation:
    def test_empty_roster(self, tmp_path):
        with pytest.raises(ValueError, match="roster"):
            tiny_config(tmp_path, roster=())

    def test_unknown_roster(self, tmp_path):
        with pytest.raises(ValueError, match="unknown roster"):
            tiny_config(tmp_path, roster=("resnet-152",))

    def test_needs_data_source(self, tmp_path):
        with pytest.raises(ValueError, match="manifest or a synth"):
            RunConfig(outdir=str(tmp_path), roster=("cnn",))
