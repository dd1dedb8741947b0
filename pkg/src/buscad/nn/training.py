"""Training loop: bias-corrected Adam with freeze masks, early stopping on
validation loss, and progressive unfreezing on plateaus."""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..data import UNIT, GrayImage
from ..preprocess import AugmentPolicy, augment
from .model import CnnModel, cross_entropy, loss_ce_l2sp, predict_logits, softmax

IMPROVE_EPS = 1e-6


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    l2sp_lambda: float = 1e-4
    max_epochs: int = 50
    patience: int = 5
    plateau_epochs: int = 3
    batch_size: int = 16
    seed: int = 0
    augmentation: Optional[AugmentPolicy] = None

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning_rate, max_epochs and batch_size must be positive")
        if self.patience <= 0 or self.plateau_epochs <= 0:
            raise ValueError("patience and plateau_epochs must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.l2sp_lambda < 0:
            raise ValueError("l2sp_lambda must be nonnegative")


@dataclass
class AdamState:
    m: list[dict[str, np.ndarray]]
    v: list[dict[str, np.ndarray]]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: CnnModel) -> "AdamState":
        zeros = lambda: [
            {k: np.zeros_like(v) for k, v in l.params.items()} for l in model.layers
        ]
        return cls(m=zeros(), v=zeros())


def adam_step(model: CnnModel, grads: list[dict], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update in place; frozen layers are untouched."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for layer, g, m, v in zip(model.layers, grads, state.m, state.v):
        if not layer.params or layer.frozen:
            continue
        for name, p in layer.params.items():
            gi = g[name]
            m[name] = state.beta1 * m[name] + (1.0 - state.beta1) * gi
            v[name] = state.beta2 * v[name] + (1.0 - state.beta2) * gi * gi
            p -= lr * (m[name] / bc1) / (np.sqrt(v[name] / bc2) + state.eps)


def _merge_grads(grads: list[dict], extra: list[dict]) -> None:
    for g, e in zip(grads, extra):
        for k in e:
            g[k] = g[k] + e[k]


def evaluate(model: CnnModel, x: np.ndarray, y: np.ndarray, lam: float) -> tuple[float, float]:
    """(objective loss incl. penalty, accuracy) without touching parameters."""
    logits = predict_logits(model, x)
    ce, _ = cross_entropy(logits, y)
    acc = float(np.mean(logits.argmax(axis=1) == y))
    return ce + model.l2sp_penalty(lam), acc


def _augment_batch(x: np.ndarray, policy: AugmentPolicy, epoch: int, indices: np.ndarray, n: int) -> np.ndarray:
    out = np.empty_like(x)
    for row, i in enumerate(indices):
        img = augment(GrayImage(x[row, 0], UNIT), policy, epoch * n + int(i))
        out[row, 0] = img.pixels
    return out


def train(
    model: CnnModel,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    eval_set: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> tuple[CnnModel, dict]:
    """Adam + early stopping + progressive unfreezing; restores the weights
    of the best-validation-loss epoch before returning.

    Unfreezing on plateau releases the deepest frozen parameter layer, and
    only activates when the model is in a mixed frozen/trainable state; a
    fully frozen model just records metrics and keeps theta bit-identical.
    An optional eval_set is scored each epoch for diagnostics only.
    """
    train_x, train_y = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1], dtype=int)
    val_x, val_y = np.asarray(val_set[0], dtype=np.float64), np.asarray(val_set[1], dtype=int)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("empty split: train and val sets must be nonempty")

    n = len(train_x)
    adam = AdamState.for_model(model)
    history: dict = {"train_loss": [], "val_loss": [], "val_accuracy": [], "unfroze": []}
    if eval_set is not None:
        history["eval_accuracy"] = []

    best_loss = math.inf
    best_theta = None
    best_epoch = -1
    stall = 0
    for epoch in range(config.max_epochs):
        order = np.random.default_rng([config.seed, epoch, 3]).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            xb = train_x[batch]
            if config.augmentation is not None:
                xb = _augment_batch(xb, config.augmentation, epoch, batch, n)
            logits, state = model.forward(xb)
            loss, dlogits, pen_grads = loss_ce_l2sp(logits, train_y[batch], model, config.l2sp_lambda)
            grads, _, _ = model.backward(state, dlogits)
            _merge_grads(grads, pen_grads)
            adam_step(model, grads, adam, config.learning_rate)
            total += loss * len(batch)
        history["train_loss"].append(total / n)

        val_loss, val_acc = evaluate(model, val_x, val_y, config.l2sp_lambda)
        history["val_loss"].append(val_loss)
        history["val_accuracy"].append(val_acc)
        if eval_set is not None:
            _, eval_acc = evaluate(model, eval_set[0], np.asarray(eval_set[1], dtype=int), 0.0)
            history["eval_accuracy"].append(eval_acc)

        if val_loss < best_loss - IMPROVE_EPS:
            best_loss = val_loss
            best_theta = model.theta_copy()
            best_epoch = epoch
            stall = 0
            continue
        stall += 1
        frozen = model.frozen_param_layers()
        trainable = model.trainable_param_layers()
        if stall >= config.plateau_epochs and frozen and trainable:
            idx = frozen[-1]  # deepest frozen block, closest to the head
            model.layers[idx].frozen = False
            history["unfroze"].append({"epoch": epoch, "layer": idx})
            stall = 0
        elif stall >= config.patience:
            break

    if best_theta is not None:
        model.theta_load(best_theta)
    history["best_epoch"] = best_epoch
    history["best_val_loss"] = best_loss
    return model, history
