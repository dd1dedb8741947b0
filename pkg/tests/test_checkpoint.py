"""Round-trips for the CNN npz checkpoint and the classic-model JSON files."""

import numpy as np
import pytest

from buscad.checkpoint import load_checkpoint, load_classic, save_checkpoint, save_knn, save_svm
from buscad.classic import KernelSpec, KnnModel, knn_predict_batch, svm_decision, svm_train_ovr
from buscad.features import FeatureVector, fit_scaler
from buscad.nn import build_mini_cnn, predict_logits, replace_head


class TestCnnCheckpoint:
    def test_round_trip_preserves_everything(self, tmp_path):
        model = build_mini_cnn(input_hw=(16, 16), conv_channels=(2, 3), embed_dim=4, seed=1)
        replace_head(model, 3, seed=2)
        model.layers[0].params["w"] += 0.5  # drift theta away from the anchor
        mean = np.arange(4, dtype=np.float64)
        path = tmp_path / "m.npz"
        save_checkpoint(path, model, {"target_size": 16, "median_filter": True, "use_roi": False},
                        {"seed": 2}, embed_mean=mean)
        loaded = load_checkpoint(path)
        again = loaded["model"]
        x = np.random.default_rng(0).random((2, 1, 16, 16))
        np.testing.assert_array_equal(predict_logits(model, x), predict_logits(again, x))
        for la, lb, aa, ab in zip(model.layers, again.layers, model.anchor, again.anchor):
            assert la.frozen == lb.frozen
            for k in la.params:
                np.testing.assert_array_equal(la.params[k], lb.params[k])
                np.testing.assert_array_equal(aa[k], ab[k])
        np.testing.assert_array_equal(loaded["embed_mean"], mean)
        assert loaded["preprocess"]["target_size"] == 16

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "none.npz")


class TestClassicFiles:
    def test_svm_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        x = np.vstack([rng.normal(loc=c, size=(8, 2)) for c in (0.0, 4.0, 8.0)])
        y = np.repeat([0, 1, 2], 8)
        model = svm_train_ovr(x, y, 10.0, KernelSpec("rbf", 0.5))
        scaler = fit_scaler([FeatureVector(["a", "b"], r) for r in x])
        path = tmp_path / "svm.json"
        save_svm(path, model, scaler, ["a", "b"])
        loaded = load_classic(path)
        assert loaded["type"] == "svm_ovr"
        np.testing.assert_allclose(
            svm_decision(loaded["model"], x), svm_decision(model, x), atol=1e-12
        )
        assert loaded["scaler"].names == ["a", "b"]

    def test_knn_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(12, 3))
        y = rng.integers(0, 3, size=12)
        model = KnnModel(x, y, k=3)
        path = tmp_path / "knn.json"
        save_knn(path, model)
        loaded = load_classic(path)
        preds_a, mass_a = knn_predict_batch(model, x)
        preds_b, mass_b = knn_predict_batch(loaded["model"], x)
        np.testing.assert_array_equal(preds_a, preds_b)
        np.testing.assert_allclose(mass_a, mass_b, atol=1e-12)

    def test_unknown_type_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"version": 1, "type": "forest"}')
        with pytest.raises(ValueError, match="unknown classic model type"):
            load_classic(path)
