"""Grad-CAM: class-discriminative heatmaps from the last conv layer, with
bilinear upsampling and grayscale overlay blending."""

from dataclasses import dataclass

import numpy as np

from .data import UNIT, GrayImage
from .nn.model import CnnModel
from .preprocess import resize_bilinear_array


@dataclass
class Heatmap:
    values: np.ndarray  # (h, w), nonnegative
    class_index: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or not np.all(np.isfinite(v)) or v.min() < 0:
            raise ValueError("heatmap must be a finite nonnegative 2-D grid")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def grad_cam_components(model: CnnModel, image, class_index: int):
    """(activations A, dS_c/dA, weights alpha, pre-ReLU map) at the last conv layer.

    The class score s_c is the pre-softmax logit; alpha_k is its gradient
    spatially averaged over the k-th activation map.
    """
    if not (0 <= class_index < model.n_classes):
        raise ValueError(f"class index {class_index} outside [0, {model.n_classes})")
    px = image.pixels if hasattr(image, "pixels") else np.asarray(image, dtype=np.float64)
    logits, state = model.forward(px[None, None])
    dlogits = np.zeros_like(logits)
    dlogits[0, class_index] = 1.0
    _, _, d_act = model.backward(state, dlogits, capture_index=model.gradcam_index)
    acts = state.outs[model.gradcam_index][0]  # (K, h, w)
    grads = d_act[0]
    alpha = grads.mean(axis=(1, 2))
    pre = np.tensordot(alpha, acts, axes=1)
    return acts, grads, alpha, pre


def grad_cam(model: CnnModel, image, class_index: int) -> Heatmap:
    """ReLU of the alpha-weighted sum of last-conv activation maps."""
    _, _, _, pre = grad_cam_components(model, image, class_index)
    return Heatmap(np.maximum(pre, 0.0), class_index)


def upsample_overlay(hm: Heatmap, img: GrayImage, alpha: float = 0.4) -> tuple[GrayImage, np.ndarray]:
    """Blend the max-normalized, bilinearly upsampled heatmap onto the image.

    Returns (blended image, upsampled normalized heat raster). An all-zero
    heatmap stays zero rather than being renormalized.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if img.domain != UNIT:
        raise ValueError("overlay expects a unit-interval image")
    peak = hm.values.max()
    normed = hm.values / peak if peak > 0 else np.zeros_like(hm.values)
    heat = resize_bilinear_array(normed, img.height, img.width)
    blend = (1.0 - alpha) * img.pixels + alpha * heat
    return GrayImage(np.clip(blend, 0.0, 1.0), UNIT), heat


def heatmap_peak(heat: np.ndarray) -> tuple[int, int]:
    """(row, col) of the maximum heat value; first occurrence wins."""
    flat = int(np.argmax(heat))
    return flat // heat.shape[1], flat % heat.shape[1]
