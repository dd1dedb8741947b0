"""The mini-CNN: architecture, forward/backward plumbing, anchored L2-SP
loss, head replacement, and penultimate embeddings."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..features import FeatureVector
from .layers import Conv3x3, Dense, GlobalAvgPool, Layer, MaxPool2, ReLU, ResidualBlock


@dataclass
class ForwardState:
    """Per-layer caches and outputs from one forward pass."""

    outs: list
    caches: list


class CnnModel:
    """Layer stack with parameters theta, anchor theta0 and freeze flags."""

    def __init__(self, layers: list[Layer], input_hw: tuple[int, int], n_classes: int):
        self.layers = layers
        self.input_hw = tuple(input_hw)
        self.n_classes = n_classes
        self.anchor = self.theta_copy()
        conv_like = [i for i, l in enumerate(layers) if isinstance(l, (Conv3x3, ResidualBlock))]
        dense = [i for i, l in enumerate(layers) if isinstance(l, Dense)]
        if not conv_like or not dense:
            raise ValueError("model needs at least one conv layer and a dense head")
        self.last_conv_index = conv_like[-1]
        self.head_index = dense[-1]
        # embedding source: output of the layer feeding the head
        self.penultimate_index = self.head_index - 1
        # Grad-CAM activation maps: last conv output after its activation,
        # so the maps are nonnegative (a ResidualBlock already ends in ReLU)
        self.gradcam_index = self.last_conv_index
        if self.gradcam_index + 1 < len(layers) and isinstance(layers[self.gradcam_index + 1], ReLU):
            self.gradcam_index += 1

    # -- parameter bookkeeping ------------------------------------------------

    def theta_copy(self) -> list[dict[str, np.ndarray]]:
        return [{k: v.copy() for k, v in l.params.items()} for l in self.layers]

    def theta_load(self, theta: list[dict[str, np.ndarray]]) -> None:
        for layer, saved in zip(self.layers, theta):
            for k in layer.params:
                layer.params[k] = saved[k].copy()

    def param_count(self) -> int:
        return sum(v.size for l in self.layers for v in l.params.values())

    def freeze_all(self, frozen: bool = True) -> None:
        for l in self.layers:
            if l.params:
                l.frozen = frozen

    def frozen_param_layers(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.params and l.frozen]

    def trainable_param_layers(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.params and not l.frozen]

    # -- forward / backward ---------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != self.input_hw:
            raise ValueError(
                f"expected input (N, 1, {self.input_hw[0]}, {self.input_hw[1]}), got {x.shape}"
            )
        return x

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardState]:
        x = self._check_input(x)
        outs, caches = [], []
        for layer in self.layers:
            x, cache = layer.forward(x)
            outs.append(x)
            caches.append(cache)
        return x, ForwardState(outs, caches)

    def forward_inference(self, x: np.ndarray, upto: Optional[int] = None) -> np.ndarray:
        """Forward without retaining intermediates (several times faster);
        optionally stop after layers[upto]."""
        x = self._check_input(x)
        last = len(self.layers) - 1 if upto is None else upto
        for layer in self.layers[: last + 1]:
            x, _ = layer.forward(x)
        return x

    def backward(
        self,
        state: ForwardState,
        dlogits: np.ndarray,
        capture_index: Optional[int] = None,
    ) -> tuple[list[dict], np.ndarray, Optional[np.ndarray]]:
        """Backpropagate dlogits; optionally capture the gradient arriving at
        the output of layers[capture_index]."""
        if len(state.caches) != len(self.layers):
            raise ValueError("forward state does not match this model")
        grads: list[dict] = [{} for _ in self.layers]
        captured = None
        d = dlogits
        for i in reversed(range(len(self.layers))):
            if i == capture_index:
                captured = d.copy()
            d, g = self.layers[i].backward(d, state.caches[i])
            grads[i] = g
        return grads, d, captured

    # -- anchored penalty -----------------------------------------------------

    def l2sp_penalty(self, lam: float) -> float:
        total = 0.0
        for layer, anchor in zip(self.layers, self.anchor):
            for k, p in layer.params.items():
                diff = p - anchor[k]
                total += float((diff * diff).sum())
        return lam * total

    def l2sp_penalty_grads(self, lam: float) -> list[dict]:
        return [
            {k: 2.0 * lam * (layer.params[k] - anchor[k]) for k in layer.params}
            for layer, anchor in zip(self.layers, self.anchor)
        ]


def build_mini_cnn(
    input_hw: tuple[int, int] = (64, 64),
    conv_channels: tuple[int, int] = (8, 16),
    embed_dim: int = 32,
    n_classes: int = 3,
    residual: bool = True,
    seed: int = 0,
) -> CnnModel:
    """Conv(8)/ReLU/Pool -> Conv(16)/ReLU/Pool -> [residual] -> GAP ->
    Dense(embed)/ReLU -> Dense(classes)."""
    rng = np.random.default_rng([seed, 7])
    c1, c2 = conv_channels
    layers: list[Layer] = [
        Conv3x3(1, c1, rng),
        ReLU(),
        MaxPool2(),
        Conv3x3(c1, c2, rng),
        ReLU(),
        MaxPool2(),
    ]
    if residual:
        layers.append(ResidualBlock(c2, rng))
    layers += [
        GlobalAvgPool(),
        Dense(c2, embed_dim, rng),
        ReLU(),
        Dense(embed_dim, n_classes, rng),
    ]
    model = CnnModel(layers, input_hw, n_classes)
    model.arch = {
        "input_hw": list(input_hw),
        "conv_channels": list(conv_channels),
        "embed_dim": embed_dim,
        "n_classes": n_classes,
        "residual": residual,
    }
    return model


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean CE over the batch and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=int)
    n = len(labels)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), labels].mean())
    dlogits = softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def loss_ce_l2sp(
    logits: np.ndarray,
    labels: np.ndarray,
    model: CnnModel,
    lam: float,
) -> tuple[float, np.ndarray, list[dict]]:
    """Cross-entropy plus the anchored penalty lam*||theta - theta0||^2.

    Returns (loss, dLoss/dlogits, per-layer penalty gradients 2*lam*(theta-theta0)).
    """
    ce, dlogits = cross_entropy(logits, labels)
    return ce + model.l2sp_penalty(lam), dlogits, model.l2sp_penalty_grads(lam)


def replace_head(model: CnnModel, n_classes: int = 3, seed: int = 0) -> CnnModel:
    """Reinitialize the classifier head, snapshot the anchor, freeze the rest."""
    old = model.layers[model.head_index]
    rng = np.random.default_rng([seed, 11])
    new_head = Dense(old.in_features, n_classes, rng)
    model.layers[model.head_index] = new_head
    model.n_classes = n_classes
    if hasattr(model, "arch"):
        model.arch = {**model.arch, "n_classes": n_classes}
    model.anchor = model.theta_copy()
    model.freeze_all(True)
    new_head.frozen = False
    return model


def predict_logits(model: CnnModel, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Forward in chunks; no caches kept."""
    x = np.asarray(x, dtype=np.float64)
    outs = []
    for start in range(0, len(x), batch_size):
        outs.append(model.forward_inference(x[start : start + batch_size]))
    return np.concatenate(outs, axis=0)


def embed_batch(model: CnnModel, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Penultimate activations for a batch, shape (N, embed_dim)."""
    x = np.asarray(x, dtype=np.float64)
    outs = []
    for start in range(0, len(x), batch_size):
        outs.append(model.forward_inference(x[start : start + batch_size], upto=model.penultimate_index))
    return np.concatenate(outs, axis=0)


def extract_embedding(model: CnnModel, image) -> FeatureVector:
    """Embedding of one image (GrayImage or 2-D array) as a FeatureVector."""
    px = image.pixels if hasattr(image, "pixels") else np.asarray(image, dtype=np.float64)
    emb = embed_batch(model, px[None, None])[0]
    pad = len(str(len(emb) - 1))
    return FeatureVector([f"deep_{i:0{pad}d}" for i in range(len(emb))], emb)
