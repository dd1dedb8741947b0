"""Handcrafted descriptors: mask shape statistics, GLCM texture, intensity
histograms, and min-max feature scaling."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import UNIT, BinaryMask, GrayImage

GLCM_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))

SHAPE_FEATURE_NAMES = ["compactness", "elongation", "aspect_ratio"]
GLCM_FEATURE_NAMES = ["glcm_contrast", "glcm_entropy", "glcm_correlation"]


@dataclass
class FeatureVector:
    names: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.names) != len(self.values):
            raise ValueError(
                f"feature names ({len(self.names)}) and values ({self.values.shape}) disagree"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    def __len__(self) -> int:
        return len(self.values)


def shape_features(mask: BinaryMask) -> FeatureVector:
    """Compactness, elongation and aspect ratio of the mask foreground.

    Perimeter counts foreground pixels with at least one background or
    out-of-bounds 4-neighbor, so compactness is a digital approximation
    and can exceed 1 for very small regions.
    """
    bits = mask.bits
    if not bits.any():
        raise ValueError("empty ROI: cannot compute shape features of an empty mask")
    area = int(bits.sum())
    padded = np.pad(bits, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    perimeter = int((bits & ~interior).sum())
    compactness = 4.0 * math.pi * area / perimeter**2

    ys, xs = np.nonzero(bits)
    h = int(ys.max() - ys.min() + 1)
    w = int(xs.max() - xs.min() + 1)
    long_side, short_side = max(w, h), min(w, h)
    aspect_ratio = long_side / short_side
    elongation = 1.0 - short_side / long_side
    return FeatureVector(SHAPE_FEATURE_NAMES, [compactness, elongation, aspect_ratio])


def quantize_levels(img: GrayImage, levels: int) -> np.ndarray:
    """Map unit-interval pixels to integer levels 0..levels-1."""
    if img.domain != UNIT:
        raise ValueError("quantization expects a unit-interval image")
    return np.minimum((img.pixels * levels).astype(np.int64), levels - 1)


def glcm_matrix(img: GrayImage, levels: int = 8, offsets: Sequence[tuple[int, int]] = GLCM_OFFSETS) -> np.ndarray:
    """Symmetric co-occurrence probabilities pooled over the given offsets."""
    if img.height < 2 or img.width < 2:
        raise ValueError("GLCM requires an image of at least 2x2 pixels")
    q = quantize_levels(img, levels)
    h, w = q.shape
    counts = np.zeros(levels * levels, dtype=np.int64)
    for dr, dc in offsets:
        r_lo, r_hi = max(0, -dr), min(h, h - dr)
        c_lo, c_hi = max(0, -dc), min(w, w - dc)
        a = q[r_lo:r_hi, c_lo:c_hi].ravel()
        b = q[r_lo + dr : r_hi + dr, c_lo + dc : c_hi + dc].ravel()
        counts += np.bincount(a * levels + b, minlength=levels * levels)
        counts += np.bincount(b * levels + a, minlength=levels * levels)
    total = counts.sum()
    if total == 0:
        raise ValueError("no pixel pairs for the given offsets")
    return (counts / total).reshape(levels, levels)


def glcm_features(img: GrayImage, levels: int = 8, offsets: Sequence[tuple[int, int]] = GLCM_OFFSETS) -> FeatureVector:
    """GLCM contrast, entropy (bits) and correlation (0 when variance is 0)."""
    p = glcm_matrix(img, levels, offsets)
    idx = np.arange(levels, dtype=np.float64)
    diff2 = (idx[:, None] - idx[None, :]) ** 2
    contrast = float((diff2 * p).sum())

    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum())

    p_i = p.sum(axis=1)
    p_j = p.sum(axis=0)
    mu_i = float((idx * p_i).sum())
    mu_j = float((idx * p_j).sum())
    var_i = float(((idx - mu_i) ** 2 * p_i).sum())
    var_j = float(((idx - mu_j) ** 2 * p_j).sum())
    denom = math.sqrt(var_i) * math.sqrt(var_j)
    if denom == 0.0:
        correlation = 0.0
    else:
        cov = float(((idx[:, None] - mu_i) * (idx[None, :] - mu_j) * p).sum())
        correlation = cov / denom
    return FeatureVector(GLCM_FEATURE_NAMES, [contrast, entropy, correlation])


def intensity_histogram(img: GrayImage, bins: int = 32) -> FeatureVector:
    """Normalized intensity histogram; value 1.0 falls in the last bin."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if img.domain != UNIT:
        raise ValueError("intensity_histogram expects a unit-interval image")
    idx = np.minimum((img.pixels * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
    pad = len(str(bins - 1))
    names = [f"hist_{i:0{pad}d}" for i in range(bins)]
    return FeatureVector(names, counts / counts.sum())


def handcrafted_vector(
    img: GrayImage,
    mask: Optional[BinaryMask],
    levels: int = 8,
    bins: int = 32,
) -> FeatureVector:
    """Full handcrafted descriptor with fixed arity across datasets.

    Samples without a usable mask get zeroed shape features plus a
    mask-presence flag of 0, keeping the vector length constant.
    """
    if mask is not None and not mask.is_empty():
        flag = 1.0
        shape = shape_features(mask).values
    else:
        flag = 0.0
        shape = np.zeros(len(SHAPE_FEATURE_NAMES))
    glcm = glcm_features(img, levels)
    hist = intensity_histogram(img, bins)
    names = ["mask_present"] + SHAPE_FEATURE_NAMES + GLCM_FEATURE_NAMES + hist.names
    values = np.concatenate([[flag], shape, glcm.values, hist.values])
    return FeatureVector(names, values)


@dataclass
class MinMaxScaler:
    """Per-feature min/max learned from training rows; apply does not clip."""

    names: list[str]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if np.any(self.mins > self.maxs):
            raise ValueError("scaler min exceeds max")


def fit_scaler(rows: Sequence[FeatureVector]) -> MinMaxScaler:
    if len(rows) == 0:
        raise ValueError("fit_scaler requires at least one row")
    names = rows[0].names
    for r in rows[1:]:
        if r.names != names:
            raise ValueError("feature names differ across rows")
    mat = np.stack([r.values for r in rows])
    return MinMaxScaler(list(names), mat.min(axis=0), mat.max(axis=0))


def apply_scaler(scaler: MinMaxScaler, v: FeatureVector) -> FeatureVector:
    if v.names != scaler.names:
        raise ValueError("feature names do not match the fitted scaler")
    span = scaler.maxs - scaler.mins
    out = np.where(span > 0, (v.values - scaler.mins) / np.where(span > 0, span, 1.0), 0.0)
    return FeatureVector(list(scaler.names), out)
