"""Deterministic synthetic ultrasound-like image generator: dark speckled
backgrounds, smooth bright ellipses (benign) and spiculated star polygons
with darker cores (malignant)."""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import (
    UNIT,
    BinaryMask,
    ClassLabel,
    GrayImage,
    to_raw8,
    write_manifest,
    write_mask,
    write_pgm,
)

Sample = tuple[GrayImage, Optional[BinaryMask], ClassLabel]


@dataclass
class SynthConfig:
    n_normal: int = 20
    n_benign: int = 20
    n_malignant: int = 20
    height: int = 64
    width: int = 64
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if min(self.n_normal, self.n_benign, self.n_malignant) < 0:
            raise ValueError("class counts must be nonnegative")
        if self.height < 8 or self.width < 8:
            raise ValueError("images must be at least 8x8")
        if not (0.0 <= self.noise_sigma <= 0.3):
            raise ValueError("noise_sigma must lie in [0, 0.3]")


def _background(rng, h: int, w: int) -> np.ndarray:
    # wide brightness range so global intensity alone cannot identify lesions
    base = rng.uniform(0.15, 0.45)
    slope = rng.uniform(-0.25, 0.25)
    ramp = 1.0 + slope * (np.arange(h)[:, None] / max(h - 1, 1) - 0.5)
    return base * np.broadcast_to(ramp, (h, w)).copy()


def _ellipse(rng, h: int, w: int, img: np.ndarray) -> BinaryMask:
    s = min(h, w)
    cy = rng.uniform(0.35, 0.65) * h
    cx = rng.uniform(0.35, 0.65) * w
    # benign masses are systematically larger and rounder than the
    # spiculated malignant stars (area/boundary statistics separate them)
    a = rng.uniform(0.14, 0.22) * s
    b = rng.uniform(0.70, 0.95) * a
    phi = rng.uniform(0.0, math.pi)
    yy, xx = np.mgrid[0:h, 0:w]
    dy = yy - cy
    dx = xx - cx
    u = dx * math.cos(phi) + dy * math.sin(phi)
    v = -dx * math.sin(phi) + dy * math.cos(phi)
    rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    # mildly wavy boundary: smooth, unlike malignant spiculation
    amp = rng.uniform(0.0, 0.12)
    lobes = int(rng.integers(3, 7))
    wave_phi = rng.uniform(0.0, 2.0 * math.pi)
    boundary = 1.0 + amp * np.sin(lobes * np.arctan2(v, u) + wave_phi)
    mask = rho <= boundary
    # faint contrast relative to the local background (comparable to the
    # illumination ramp, so lesion detection is a real learning problem),
    # dimmer toward the rim
    delta = rng.uniform(0.08, 0.14)
    img[mask] += delta * (1.0 - 0.4 * np.minimum(rho[mask], 1.0) ** 2)
    return BinaryMask(mask)


def _fill_polygon(vertices: np.ndarray, h: int, w: int) -> np.ndarray:
    """Even-odd scanline fill; vertices are (row, col) pairs."""
    mask = np.zeros((h, w), dtype=bool)
    n = len(vertices)
    for y in range(h):
        xs = []
        for i in range(n):
            y1, x1 = vertices[i]
            y2, x2 = vertices[(i + 1) % n]
            if (y1 <= y < y2) or (y2 <= y < y1):
                xs.append(x1 + (y - y1) * (x2 - x1) / (y2 - y1))
        xs.sort()
        for a, b in zip(xs[0::2], xs[1::2]):
            lo = max(0, math.ceil(a))
            hi = min(w - 1, math.floor(b))
            if hi >= lo:
                mask[y, lo : hi + 1] = True
    return mask


def _star(rng, h: int, w: int, img: np.ndarray) -> BinaryMask:
    s = min(h, w)
    cy = rng.uniform(0.40, 0.60) * h
    cx = rng.uniform(0.40, 0.60) * w
    n_v = int(rng.integers(8, 13))
    r_out = rng.uniform(0.15, 0.21) * s
    r_in = rng.uniform(0.05, 0.08) * s
    verts = []
    for i in range(n_v):
        theta = 2.0 * math.pi * (i + rng.uniform(-0.2, 0.2)) / n_v
        r = (r_out if i % 2 == 0 else r_in) * rng.uniform(0.8, 1.2)
        verts.append((cy + r * math.sin(theta), cx + r * math.cos(theta)))
    mask = _fill_polygon(np.array(verts), h, w)
    if not mask.any():  # degenerate polygon; fall back to a small diamond
        yy, xx = np.mgrid[0:h, 0:w]
        mask = (np.abs(yy - cy) + np.abs(xx - cx)) <= max(2.0, r_in)
    # faint spiculated rim around a strongly hypoechoic core: a ring-like
    # profile no solid-blob detector responds to, unlike the solid smooth
    # benign masses
    delta = rng.uniform(0.08, 0.14)
    img[mask] += delta
    yy, xx = np.mgrid[0:h, 0:w]
    core = mask & ((yy - cy) ** 2 + (xx - cx) ** 2 <= (1.2 * r_in) ** 2)
    img[core] *= rng.uniform(0.30, 0.45)
    return BinaryMask(mask)


def _make_sample(label: ClassLabel, cfg: SynthConfig, index: int) -> Sample:
    rng = np.random.default_rng([cfg.seed, index])
    h, w = cfg.height, cfg.width
    img = _background(rng, h, w)
    mask: Optional[BinaryMask] = None
    if label == ClassLabel.BENIGN:
        mask = _ellipse(rng, h, w, img)
    elif label == ClassLabel.MALIGNANT:
        mask = _star(rng, h, w, img)
    if cfg.noise_sigma > 0:
        img = img * (1.0 + cfg.noise_sigma * rng.uniform(-1.0, 1.0, size=img.shape))
    return GrayImage(np.clip(img, 0.0, 1.0), UNIT), mask, label


def generate(cfg: SynthConfig) -> list[Sample]:
    """Deterministic per (seed, sample index); class blocks in label order."""
    samples = []
    index = 0
    for label, count in (
        (ClassLabel.NORMAL, cfg.n_normal),
        (ClassLabel.BENIGN, cfg.n_benign),
        (ClassLabel.MALIGNANT, cfg.n_malignant),
    ):
        for _ in range(count):
            samples.append(_make_sample(label, cfg, index))
            index += 1
    return samples


def write_dataset(cfg: SynthConfig, outdir) -> Path:
    """Materialize the dataset as PGMs plus a manifest; returns manifest path."""
    outdir = Path(outdir)
    (outdir / "images").mkdir(parents=True, exist_ok=True)
    (outdir / "masks").mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (img, mask, label) in enumerate(generate(cfg)):
        img_rel = f"images/sample_{i:04d}.pgm"
        write_pgm(to_raw8(img), outdir / img_rel)
        mask_rel = ""
        if mask is not None:
            mask_rel = f"masks/sample_{i:04d}_mask.pgm"
            write_mask(mask, outdir / mask_rel)
        rows.append((img_rel, label.name.lower(), mask_rel, "synth"))
    manifest = outdir / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest
