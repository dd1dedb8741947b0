"""Dataset plumbing: PGM/PNG image I/O, manifest parsing, stratified splits."""

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

RAW8 = "raw8"
UNIT = "unit"


class ClassLabel(IntEnum):
    NORMAL = 0
    BENIGN = 1
    MALIGNANT = 2


_LABEL_TOKENS = {
    "normal": ClassLabel.NORMAL,
    "benign": ClassLabel.BENIGN,
    "malignant": ClassLabel.MALIGNANT,
    "0": ClassLabel.NORMAL,
    "1": ClassLabel.BENIGN,
    "2": ClassLabel.MALIGNANT,
}


def parse_label(token: str) -> ClassLabel:
    label = _LABEL_TOKENS.get(token.strip().lower())
    if label is None:
        raise ValueError(f"unknown label: {token!r}")
    return label


@dataclass
class GrayImage:
    """2-D grayscale raster, either raw 8-bit ints or unit-interval floats."""

    pixels: np.ndarray
    domain: str = RAW8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"pixels must be a non-empty 2-D grid, got shape {px.shape}")
        if self.domain == RAW8:
            if not np.issubdtype(px.dtype, np.integer):
                if not np.all(px == np.floor(px)):
                    raise ValueError("raw8 image requires integer pixel values")
            if px.min() < 0 or px.max() > 255:
                raise ValueError("raw8 pixel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        elif self.domain == UNIT:
            px = px.astype(np.float64)
            if px.min() < 0.0 or px.max() > 1.0:
                raise ValueError("unit-interval pixel values must lie in [0, 1]")
        else:
            raise ValueError(f"unknown pixel domain {self.domain!r}")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class BinaryMask:
    """Boolean lesion mask paired with an image of the same dimensions."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {bits.shape}")
        self.bits = bits.astype(bool)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def is_empty(self) -> bool:
        return not self.bits.any()


@dataclass
class LabeledSample:
    image_path: str
    mask_path: Optional[str]
    label: ClassLabel
    source: str = ""

    def __post_init__(self):
        if not self.image_path:
            raise ValueError("image_path must be non-empty")
        self.label = ClassLabel(self.label)


# ---------------------------------------------------------------------------
# PGM / PNG I/O
# ---------------------------------------------------------------------------

def _pgm_header_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if pos == start:
            raise ValueError("malformed PGM header: unexpected end of data")
        tokens.append(data[start:pos])
    return tokens, pos


def load_pgm(path) -> GrayImage:
    """Decode a P2 (ASCII) or P5 (binary) PGM file with maxval <= 255."""
    data = Path(path).read_bytes()
    try:
        (magic,), pos = _pgm_header_tokens(data, 1, 0)
    except ValueError:
        raise ValueError(f"malformed PGM header in {path}")
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"not a P2/P5 PGM file: {path}")
    tokens, pos = _pgm_header_tokens(data, 3, pos)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ValueError(f"malformed PGM header in {path}")
    if width < 1 or height < 1:
        raise ValueError(f"malformed PGM header: bad dimensions {width}x{height}")
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"unsupported PGM maxval {maxval} (must be 1..255)")

    n_px = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        raster = data[pos : pos + n_px]
        if len(raster) < n_px:
            raise ValueError(f"unexpected end of data in {path}")
        px = np.frombuffer(raster, dtype=np.uint8, count=n_px)
    else:
        fields = data[pos:].split()
        if len(fields) < n_px:
            raise ValueError(f"unexpected end of data in {path}")
        try:
            px = np.array([int(f) for f in fields[:n_px]], dtype=np.int64)
        except ValueError:
            raise ValueError(f"malformed P2 pixel data in {path}")
    if px.max(initial=0) > maxval:
        raise ValueError(f"pixel value exceeds maxval in {path}")
    return GrayImage(px.reshape(height, width).astype(np.uint8), RAW8)


def write_pgm(img: GrayImage, path, binary: bool = True) -> None:
    """Write a raw-8bit image as P5 (default) or P2 with maxval 255."""
    if img.domain != RAW8:
        raise ValueError("write_pgm expects a raw8 image; convert with to_raw8 first")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if binary:
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + img.pixels.tobytes())
    else:
        lines = "\n".join(" ".join(str(v) for v in row) for row in img.pixels)
        path.write_text(f"P2\n{img.width} {img.height}\n255\n{lines}\n", encoding="ascii")


def to_raw8(img: GrayImage) -> GrayImage:
    """Quantize a unit-interval image to raw 8-bit (round to nearest level)."""
    if img.domain == RAW8:
        return img
    return GrayImage(np.rint(img.pixels * 255.0).astype(np.uint8), RAW8)


def load_png_gray8(path) -> GrayImage:
    """Adapter for 8-bit grayscale PNGs (mode L); anything else is rejected."""
    from PIL import Image

    with Image.open(path) as im:
        if im.format != "PNG":
            raise ValueError(f"not a PNG file: {path}")
        if im.mode != "L":
            raise ValueError(f"non-grayscale PNG (mode {im.mode}): {path}")
        return GrayImage(np.asarray(im, dtype=np.uint8), RAW8)


def load_grayscale_image(path) -> GrayImage:
    """Load a PGM (P2/P5) or 8-bit grayscale PNG image as raw8."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"image file not found: {path}")
    if p.suffix.lower() == ".png":
        return load_png_gray8(p)
    return load_pgm(p)


def load_mask(path) -> BinaryMask:
    """Load a mask image; any nonzero pixel counts as foreground."""
    img = load_grayscale_image(path)
    return BinaryMask(img.pixels > 0)


def write_mask(mask: BinaryMask, path) -> None:
    write_pgm(GrayImage(mask.bits.astype(np.uint8) * 255, RAW8), path)


# ---------------------------------------------------------------------------
# Manifest CSV
# ---------------------------------------------------------------------------

MANIFEST_COLUMNS = ("image_path", "label", "mask_path", "source")


def load_manifest(path) -> list[LabeledSample]:
    """Parse a manifest CSV into samples, resolving relative paths.

    Required columns: image_path, label, mask_path, source (mask_path and
    source may be empty). Extra columns such as `split` are tolerated.
    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.parent
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty manifest: {path}")
        header = [h.strip() for h in header]
        col = {name: i for i, name in enumerate(header)}
        for required in MANIFEST_COLUMNS:
            if required not in col:
                raise ValueError(f"missing required column {required!r} in {path}")
        samples = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)} "
                    "(paths containing commas are not supported)"
                )
            if any("," in field for field in row):
                raise ValueError(
                    f"{path}:{line_no}: quoted fields containing commas are not supported"
                )
            image_path = row[col["image_path"]].strip()
            mask_path = row[col["mask_path"]].strip()
            samples.append(
                LabeledSample(
                    image_path=str(_resolve(base, image_path)),
                    mask_path=str(_resolve(base, mask_path)) if mask_path else None,
                    label=parse_label(row[col["label"]]),
                    source=row[col["source"]].strip(),
                )
            )
    if not samples:
        raise ValueError(f"empty manifest: {path}")
    return samples


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def write_manifest(path, rows: Sequence[tuple[str, str, str, str]]) -> None:
    """Write manifest rows (image_path, label, mask_path, source)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(MANIFEST_COLUMNS)]
    for row in rows:
        for value in row:
            if "," in value:
                raise ValueError(f"manifest fields must not contain commas: {value!r}")
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def manifest_from_directory(root) -> list[tuple[str, str, str, str]]:
    """Synthesize manifest rows from class-named subfolders (BUSI style).

    Expects `root/<normal|benign|malignant>/*.pgm|png`; a sibling file named
    `<stem>_mask.<ext>` is picked up as the lesion mask when present.
    """
    root = Path(root)
    rows = []
    for cls in ("normal", "benign", "malignant"):
        d = root / cls
        if not d.is_dir():
            continue
        for img in sorted(d.iterdir()):
            if img.suffix.lower() not in (".pgm", ".png") or img.stem.endswith("_mask"):
                continue
            mask = ""
            for ext in (".pgm", ".png"):
                candidate = img.with_name(img.stem + "_mask" + ext)
                if candidate.exists():
                    mask = str(candidate.relative_to(root))
                    break
            rows.append((str(img.relative_to(root)), cls, mask, root.name))
    if not rows:
        raise ValueError(f"no images found under {root}")
    return rows


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

@dataclass
class SplitSpec:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int = 0

    def all_indices(self) -> list[int]:
        return sorted(self.train + self.val + self.test)


def _check_ratios(ratios) -> tuple[float, ...]:
    ratios = tuple(float(r) for r in ratios)
    if any(r < 0 for r in ratios):
        raise ValueError(f"split ratios must be nonnegative: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)}")
    return ratios


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment: each count within 1 of ratio*n."""
    exact = [r * n for r in ratios]
    counts = [math.floor(e) for e in exact]
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def stratified_split_indices(labels: Sequence[int], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitSpec:
    """Per-class seeded shuffle + largest-remainder allocation into 3 splits.

    Each class uses its own PRNG stream keyed by (seed, class), so adding
    samples of one class never perturbs another class's assignment.
    """
    ratios = _check_ratios(ratios)
    if len(ratios) != 3:
        raise ValueError("expected exactly 3 ratios (train, val, test)")
    labels = np.asarray(labels, dtype=int)
    train, val, test = [], [], []
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        rng = np.random.default_rng([seed, int(cls)])
        idx = idx[rng.permutation(len(idx))]
        n_tr, n_va, n_te = _allocate(len(idx), ratios)
        train.extend(int(i) for i in idx[:n_tr])
        val.extend(int(i) for i in idx[n_tr : n_tr + n_va])
        test.extend(int(i) for i in idx[n_tr + n_va :])
    return SplitSpec(sorted(train), sorted(val), sorted(test), seed)


def stratified_split(samples: Sequence[LabeledSample], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitSpec:
    """Stratified 80/10/10-style split over the full 3-class label set."""
    labels = [int(s.label) for s in samples]
    counts = {cls: labels.count(int(cls)) for cls in ClassLabel}
    for cls, n in counts.items():
        if n == 0:
            raise ValueError(f"class missing: no {cls.name.lower()} samples")
    return stratified_split_indices(labels, ratios, seed)


def stratified_kfold_indices(labels: Sequence[int], k: int = 5, seed: int = 0) -> list[tuple[list[int], list[int]]]:
    """k stratified folds: validation sets partition the index set."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    labels = np.asarray(labels, dtype=int)
    fold_val: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if len(idx) < k:
            raise ValueError(f"class {int(cls)} has {len(idx)} samples, fewer than k={k}")
        rng = np.random.default_rng([seed, int(cls), 1])
        idx = idx[rng.permutation(len(idx))]
        for pos, i in enumerate(idx):
            fold_val[pos % k].append(int(i))
    folds = []
    for f in range(k):
        val = sorted(fold_val[f])
        val_set = set(val)
        train = [i for i in range(len(labels)) if i not in val_set]
        folds.append((train, val))
    return folds


def stratified_kfold(samples: Sequence[LabeledSample], k: int = 5, seed: int = 0) -> list[tuple[list[int], list[int]]]:
    labels = [int(s.label) for s in samples]
    for cls in ClassLabel:
        if labels.count(int(cls)) < k:
            raise ValueError(f"class missing or too small for k={k}: {cls.name.lower()}")
    return stratified_kfold_indices(labels, k, seed)


def official_split(manifest_path) -> SplitSpec:
    """Build a SplitSpec from a manifest's optional `split` column."""
    path = Path(manifest_path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = [h.strip() for h in next(reader)]
        if "split" not in header:
            raise ValueError(f"manifest has no split column: {path}")
        col = header.index("split")
        buckets = {"train": [], "val": [], "test": []}
        for i, row in enumerate(reader):
            token = row[col].strip().lower()
            if token not in buckets:
                raise ValueError(f"unknown split token {token!r} at row {i + 2}")
            buckets[token].append(i)
    if not any(buckets.values()):
        raise ValueError(f"empty manifest: {path}")
    return SplitSpec(buckets["train"], buckets["val"], buckets["test"], seed=0)
