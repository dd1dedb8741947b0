"""Versioned model containers: npz checkpoints for the CNN (weights, anchor,
freeze flags, preprocessing recipe, training-set embedding mean) and JSON
files for the classical models."""

import json
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .classic import BinarySvmModel, KernelSpec, KnnModel, SvmOvrModel
from .features import MinMaxScaler
from .nn.model import CnnModel, build_mini_cnn

CHECKPOINT_VERSION = 1
CLASSIC_VERSION = 1


def save_checkpoint(
    path,
    model: CnnModel,
    preprocess_recipe: dict,
    train_config: dict,
    embed_mean: Optional[np.ndarray] = None,
    arch: Optional[dict] = None,
) -> None:
    arch = arch if arch is not None else getattr(model, "arch", None)
    if arch is None:
        raise ValueError("model has no architecture descriptor; pass arch=")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "arch": arch,
        "frozen": [bool(l.frozen) for l in model.layers],
        "preprocess": preprocess_recipe,
        "train_config": train_config,
    }
    arrays = {}
    for i, (layer, anchor) in enumerate(zip(model.layers, model.anchor)):
        for k, v in layer.params.items():
            arrays[f"theta_{i}_{k}"] = v
            arrays[f"anchor_{i}_{k}"] = anchor[k]
    if embed_mean is not None:
        arrays["embed_mean"] = np.asarray(embed_mean, dtype=np.float64)
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path) -> dict:
    """Rebuild the model and return it with its recorded recipe and stats."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version in {path}")
        arch = meta["arch"]
        model = build_mini_cnn(
            input_hw=tuple(arch["input_hw"]),
            conv_channels=tuple(arch["conv_channels"]),
            embed_dim=arch["embed_dim"],
            n_classes=arch["n_classes"],
            residual=arch["residual"],
            seed=0,
        )
        for i, layer in enumerate(model.layers):
            for k in layer.params:
                layer.params[k] = z[f"theta_{i}_{k}"].copy()
                model.anchor[i][k] = z[f"anchor_{i}_{k}"].copy()
        for layer, frozen in zip(model.layers, meta["frozen"]):
            layer.frozen = bool(frozen)
        embed_mean = z["embed_mean"].copy() if "embed_mean" in z.files else None
    return {
        "model": model,
        "arch": arch,
        "preprocess": meta["preprocess"],
        "train_config": meta["train_config"],
        "embed_mean": embed_mean,
    }


def _scaler_to_json(scaler: Optional[MinMaxScaler]) -> Optional[dict]:
    if scaler is None:
        return None
    return {"names": scaler.names, "mins": scaler.mins.tolist(), "maxs": scaler.maxs.tolist()}


def _scaler_from_json(d: Optional[dict]) -> Optional[MinMaxScaler]:
    if d is None:
        return None
    return MinMaxScaler(d["names"], np.array(d["mins"]), np.array(d["maxs"]))


def save_svm(path, model: SvmOvrModel, scaler: Optional[MinMaxScaler] = None, feature_names: Optional[list] = None) -> None:
    doc = {
        "type": "svm_ovr",
        "version": CLASSIC_VERSION,
        "feature_names": feature_names,
        "scaler": _scaler_to_json(scaler),
        "classes": [
            {
                "sv_x": m.sv_x.tolist(),
                "dual_coef": m.dual_coef.tolist(),
                "bias": m.bias,
                "sv_index": m.sv_index.tolist(),
                "kernel": {"kind": m.kernel.kind, "gamma": m.kernel.gamma},
                "C": m.C,
            }
            for m in model.models
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def save_knn(path, model: KnnModel, scaler: Optional[MinMaxScaler] = None, feature_names: Optional[list] = None) -> None:
    doc = {
        "type": "knn",
        "version": CLASSIC_VERSION,
        "feature_names": feature_names,
        "scaler": _scaler_to_json(scaler),
        "k": model.k,
        "epsilon": model.epsilon,
        "n_classes": model.n_classes,
        "x": model.x.tolist(),
        "y": model.y.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_classic(path) -> dict:
    """Load an svm_ovr or knn JSON model file."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CLASSIC_VERSION:
        raise ValueError(f"unsupported classic-model version in {path}")
    scaler = _scaler_from_json(doc.get("scaler"))
    if doc["type"] == "svm_ovr":
        models = [
            BinarySvmModel(
                sv_x=np.array(c["sv_x"], dtype=np.float64),
                dual_coef=np.array(c["dual_coef"], dtype=np.float64),
                bias=float(c["bias"]),
                kernel=KernelSpec(c["kernel"]["kind"], c["kernel"]["gamma"]),
                C=float(c["C"]),
                sv_index=np.array(c["sv_index"], dtype=int),
            )
            for c in doc["classes"]
        ]
        return {"type": "svm_ovr", "model": SvmOvrModel(models), "scaler": scaler,
                "feature_names": doc.get("feature_names")}
    if doc["type"] == "knn":
        model = KnnModel(
            np.array(doc["x"], dtype=np.float64),
            np.array(doc["y"], dtype=int),
            int(doc["k"]),
            float(doc["epsilon"]),
            int(doc["n_classes"]),
        )
        return {"type": "knn", "model": model, "scaler": scaler,
                "feature_names": doc.get("feature_names")}
    raise ValueError(f"unknown classic model type {doc.get('type')!r} in {path}")
