"""Preprocessing ops: min-max normalization, median despeckling, bilinear
resize, ROI extraction, and seeded geometric augmentation."""

import math
from dataclasses import dataclass

import numpy as np

from .data import RAW8, UNIT, BinaryMask, GrayImage


def normalize_minmax(img: GrayImage) -> GrayImage:
    """Affine-map pixel range to [0, 1]; constant images map to all zeros."""
    x = img.pixels.astype(np.float64)
    lo = x.min()
    hi = x.max()
    if hi == lo:
        return GrayImage(np.zeros_like(x), UNIT)
    return GrayImage((x - lo) / (hi - lo), UNIT)


def median_filter_3x3(img: GrayImage) -> GrayImage:
    """3x3 median with edge-replication padding."""
    x = img.pixels
    h, w = x.shape
    xp = np.pad(x, 1, mode="edge")
    stack = np.empty((9, h, w), dtype=x.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            stack[k] = xp[di : di + h, dj : dj + w]
            k += 1
    return GrayImage(np.median(stack, axis=0), img.domain)


def _axis_coords(dst: int, src: int) -> np.ndarray:
    # align-corners: endpoints of both grids coincide
    if dst == 1:
        return np.zeros(1)
    return np.arange(dst, dtype=np.float64) * (src - 1) / (dst - 1)


def resize_bilinear_array(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners bilinear resize of a 2-D float array."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dimensions must be >= 1, got {out_w}x{out_h}")
    h, w = x.shape
    rows = _axis_coords(out_h, h)
    cols = _axis_coords(out_w, w)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    wr = (rows - r0)[:, None]
    wc = (cols - c0)[None, :]
    top = x[r0][:, c0] * (1 - wc) + x[r0][:, c1] * wc
    bot = x[r1][:, c0] * (1 - wc) + x[r1][:, c1] * wc
    return top * (1 - wr) + bot * wr


def resize_bilinear(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    if img.domain != UNIT:
        raise ValueError("resize_bilinear expects a unit-interval image")
    return GrayImage(resize_bilinear_array(img.pixels, out_h, out_w), UNIT)


def extract_roi(img: GrayImage, mask: BinaryMask) -> GrayImage:
    """Zero pixels outside the mask and crop to its bounding box +10% margin."""
    if (mask.height, mask.width) != (img.height, img.width):
        raise ValueError(
            f"mask dimensions {mask.width}x{mask.height} do not match "
            f"image {img.width}x{img.height}"
        )
    ys, xs = np.nonzero(mask.bits)
    if len(ys) == 0:
        raise ValueError("empty ROI: mask has no foreground pixels")
    r0, r1 = int(ys.min()), int(ys.max())
    c0, c1 = int(xs.min()), int(xs.max())
    mr = math.ceil(0.1 * (r1 - r0 + 1))
    mc = math.ceil(0.1 * (c1 - c0 + 1))
    r0 = max(0, r0 - mr)
    r1 = min(img.height - 1, r1 + mr)
    c0 = max(0, c0 - mc)
    c1 = min(img.width - 1, c1 + mc)
    masked = np.where(mask.bits, img.pixels, 0)
    return GrayImage(masked[r0 : r1 + 1, c0 : c1 + 1], img.domain)


@dataclass
class AugmentPolicy:
    """Flip/rotate/zoom augmentation; all draws keyed by (seed, draw_index)."""

    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    rot_deg_max: float = 10.0
    zoom_frac_max: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.hflip_prob <= 1.0 and 0.0 <= self.vflip_prob <= 1.0):
            raise ValueError("flip probabilities must lie in [0, 1]")
        if self.rot_deg_max < 0:
            raise ValueError("rot_deg_max must be >= 0")
        if not (0.0 <= self.zoom_frac_max < 0.5):
            raise ValueError("zoom_frac_max must lie in [0, 0.5)")


def _bilinear_sample(x: np.ndarray, src_r: np.ndarray, src_c: np.ndarray, fill: float) -> np.ndarray:
    h, w = x.shape
    valid = (src_r >= 0) & (src_r <= h - 1) & (src_c >= 0) & (src_c <= w - 1)
    rc = np.clip(src_r, 0, h - 1)
    cc = np.clip(src_c, 0, w - 1)
    r0 = np.floor(rc).astype(int)
    c0 = np.floor(cc).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    wr = rc - r0
    wc = cc - c0
    out = (
        x[r0, c0] * (1 - wr) * (1 - wc)
        + x[r0, c1] * (1 - wr) * wc
        + x[r1, c0] * wr * (1 - wc)
        + x[r1, c1] * wr * wc
    )
    out[~valid] = fill
    return out


def rotate_about_center(x: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate by inverse mapping with bilinear sampling and zero fill."""
    h, w = x.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    th = math.radians(angle_deg)
    cos_t, sin_t = math.cos(th), math.sin(th)
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dr = rr - cy
    dc = cc - cx
    src_r = cy + cos_t * dr + sin_t * dc
    src_c = cx - sin_t * dr + cos_t * dc
    return _bilinear_sample(x, src_r, src_c, fill=0.0)


def zoom_about_center(x: np.ndarray, scale: float) -> np.ndarray:
    """Scale about center keeping the frame: crop on zoom-in, zero-pad on zoom-out."""
    h, w = x.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    src_r = cy + (rr - cy) / scale
    src_c = cx + (cc - cx) / scale
    return _bilinear_sample(x, src_r, src_c, fill=0.0)


def augment(img: GrayImage, policy: AugmentPolicy, draw_index: int) -> GrayImage:
    """Apply one deterministic augmentation draw to a unit-interval image."""
    if img.domain != UNIT:
        raise ValueError("augment expects a unit-interval image")
    rng = np.random.default_rng([policy.seed, draw_index])
    hflip = rng.random() < policy.hflip_prob
    vflip = rng.random() < policy.vflip_prob
    angle = rng.uniform(-policy.rot_deg_max, policy.rot_deg_max)
    scale = rng.uniform(1.0 - policy.zoom_frac_max, 1.0 + policy.zoom_frac_max)

    x = img.pixels
    if hflip:
        x = x[:, ::-1]
    if vflip:
        x = x[::-1, :]
    if angle != 0.0:
        x = rotate_about_center(x, angle)
    if scale != 1.0:
        x = zoom_about_center(x, scale)
    return GrayImage(np.clip(x, 0.0, 1.0), UNIT)
