"""Synthetic datasets, IDX ingestion, and sample-image serialization.

Every dataset carries samples as a row-major float64 matrix scaled into
[-1, 1]. Generators are pure functions of their spec (seed included).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray | None = None
    tag: str = "data"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D matrix")
        if self.samples.size and (self.samples.min() < -1.0 or self.samples.max() > 1.0):
            raise ValueError("sample values must lie in [-1, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.samples):
                raise ValueError(
                    f"label count {len(self.labels)} != sample count {len(self.samples)}"
                )

    def __len__(self):
        return len(self.samples)

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def n_classes(self):
        return 0 if self.labels is None else int(self.labels.max()) + 1


@dataclass(frozen=True)
class RingMixtureSpec:
    """Equal-weight gaussian modes evenly spaced on a circle.

    The default std keeps the low-energy valley around the ring connected;
    much tighter modes leave isolated pits that starve the generator of
    gradient between them.
    """

    modes: int = 8
    radius: float = 1.0
    std: float = 0.12
    count: int = 8192
    seed: int = 0

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("modes must be >= 1")
        if self.std <= 0:
            raise ValueError("std must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def ring_centers(spec):
    """Mode centers in the rescaled [-1, 1]^2 coordinates."""
    angles = 2.0 * np.pi * np.arange(spec.modes) / spec.modes
    raw = spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return raw / (spec.radius + 4.0 * spec.std)


def gen_ring_mixture(spec):
    rng = np.random.default_rng(spec.seed)
    angles = 2.0 * np.pi * np.arange(spec.modes) / spec.modes
    centers = spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    assignment = rng.integers(spec.modes, size=spec.count)
    points = centers[assignment] + spec.std * rng.standard_normal((spec.count, 2))
    # Nominal support (centers +- 4 std) maps inside the unit box; the clip
    # only touches the astronomically rare tail beyond that.
    points /= spec.radius + 4.0 * spec.std
    np.clip(points, -1.0, 1.0, out=points)
    return Dataset(points, labels=assignment, tag="ring")


# 8x8 digit glyphs; '#' is ink. Kept a pixel inside the frame so the +-1
# pixel shift augmentation rarely clips strokes.
_GLYPHS = [
    (
        "........",
        ".####...",
        "#....#..",
        "#....#..",
        "#....#..",
        "#....#..",
        ".####...",
        "........",
    ),
    (
        "...#....",
        "..##....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        ".#####..",
        "........",
    ),
    (
        ".####...",
        "#....#..",
        ".....#..",
        "....#...",
        "..##....",
        ".#......",
        "######..",
        "........",
    ),
    (
        ".####...",
        ".....#..",
        ".....#..",
        "..###...",
        ".....#..",
        ".....#..",
        ".####...",
        "........",
    ),
    (
        "....#...",
        "...##...",
        "..#.#...",
        ".#..#...",
        "######..",
        "....#...",
        "....#...",
        "........",
    ),
    (
        "######..",
        "#.......",
        "#####...",
        ".....#..",
        ".....#..",
        "#....#..",
        ".####...",
        "........",
    ),
    (
        "..###...",
        ".#......",
        "#.......",
        "#####...",
        "#....#..",
        "#....#..",
        ".####...",
        "........",
    ),
    (
        "######..",
        ".....#..",
        "....#...",
        "...#....",
        "..#.....",
        "..#.....",
        "..#.....",
        "........",
    ),
    (
        ".####...",
        "#....#..",
        "#....#..",
        ".####...",
        "#....#..",
        "#....#..",
        ".####...",
        "........",
    ),
    (
        ".####...",
        "#....#..",
        "#....#..",
        ".#####..",
        ".....#..",
        "....#...",
        ".###....",
        "........",
    ),
]

DIGIT_SIDE = 8


def digit_templates():
    """The ten clean glyphs as a (10, 8, 8) array of {0, 1} floats."""
    out = np.zeros((10, DIGIT_SIDE, DIGIT_SIDE))
    for digit, rows in enumerate(_GLYPHS):
        for r, row in enumerate(rows):
            for c, ch in enumerate(row):
                if ch == "#":
                    out[digit, r, c] = 1.0
    return out


@dataclass(frozen=True)
class DigitSpec:
    """Procedurally rendered 8x8 digit glyphs with shift and noise jitter."""

    count: int = 4000
    seed: int = 7
    noise_std: float = 0.12
    max_shift: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not 0 <= self.max_shift < DIGIT_SIDE:
            raise ValueError("max_shift must be in [0, 7]")


def _shift_glyph(glyph, dy, dx):
    out = np.zeros_like(glyph)
    src_r = slice(max(0, -dy), DIGIT_SIDE - max(0, dy))
    dst_r = slice(max(0, dy), DIGIT_SIDE - max(0, -dy))
    src_c = slice(max(0, -dx), DIGIT_SIDE - max(0, dx))
    dst_c = slice(max(0, dx), DIGIT_SIDE - max(0, -dx))
    out[dst_r, dst_c] = glyph[src_r, src_c]
    return out


def gen_synth_digits(spec):
    rng = np.random.default_rng(spec.seed)
    templates = digit_templates()
    labels = rng.integers(10, size=spec.count)
    shifts = rng.integers(-spec.max_shift, spec.max_shift + 1, size=(spec.count, 2))
    noise = spec.noise_std * rng.standard_normal((spec.count, DIGIT_SIDE, DIGIT_SIDE))
    images = np.empty((spec.count, DIGIT_SIDE, DIGIT_SIDE))
    for i in range(spec.count):
        images[i] = _shift_glyph(templates[labels[i]], shifts[i, 0], shifts[i, 1])
    images = 2.0 * images - 1.0 + noise
    np.clip(images, -1.0, 1.0, out=images)
    return Dataset(images.reshape(spec.count, -1), labels=labels, tag="digits")


# ---------------------------------------------------------------------------
# IDX ingestion

class IdxFormatError(ValueError):
    """The file is not a well-formed IDX image/label container."""


def _read_exact(handle, n, what, path):
    data = handle.read(n)
    if len(data) != n:
        raise IdxFormatError(f"{path}: truncated {what} (wanted {n} bytes, got {len(data)})")
    return data


def _read_u32(handle, what, path):
    return struct.unpack(">I", _read_exact(handle, 4, what, path))[0]


def load_idx(images_path, labels_path):
    """Load a big-endian IDX image/label pair into a labeled Dataset.

    Image payload: magic 0x00000803, count, rows, cols, then unsigned bytes in
    row-major order. Label payload: magic 0x00000801, count, then one byte per
    label. Pixels map linearly from [0, 255] to [-1, 1].
    """
    with open(images_path, "rb") as handle:
        magic = _read_u32(handle, "image header", images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        count = _read_u32(handle, "image header", images_path)
        rows = _read_u32(handle, "image header", images_path)
        cols = _read_u32(handle, "image header", images_path)
        payload = _read_exact(handle, count * rows * cols, "image payload", images_path)
        if handle.read(1):
            raise IdxFormatError(f"{images_path}: trailing bytes after image payload")
    with open(labels_path, "rb") as handle:
        magic = _read_u32(handle, "label header", labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        label_count = _read_u32(handle, "label header", labels_path)
        label_payload = _read_exact(handle, label_count, "label payload", labels_path)
        if handle.read(1):
            raise IdxFormatError(f"{labels_path}: trailing bytes after label payload")
    if label_count != count:
        raise IdxFormatError(
            f"image count {count} != label count {label_count}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    samples = (pixels / 255.0) * 2.0 - 1.0
    labels = np.frombuffer(label_payload, dtype=np.uint8).astype(np.int64)
    return Dataset(samples.reshape(count, rows * cols), labels=labels, tag="idx")


# ---------------------------------------------------------------------------
# dataset files and resolution

def save_dataset(dataset, path):
    arrays = {"samples": dataset.samples, "tag": np.array([dataset.tag])}
    if dataset.labels is not None:
        arrays["labels"] = dataset.labels
    np.savez(path, **arrays)


def load_dataset(path):
    with np.load(path, allow_pickle=False) as bundle:
        samples = bundle["samples"]
        labels = bundle["labels"] if "labels" in bundle.files else None
        tag = str(bundle["tag"][0])
    return Dataset(samples, labels=labels, tag=tag)


def resolve_dataset(tag):
    """Turn a config ``dataset`` value into a Dataset.

    Accepted forms: ``ring``, ``digits`` (built-in default specs),
    ``idx:<images>,<labels>``, or a path to an .npz written by save_dataset.
    """
    if tag == "ring":
        return gen_ring_mixture(RingMixtureSpec())
    if tag == "digits":
        return gen_synth_digits(DigitSpec())
    if tag.startswith("idx:"):
        parts = tag[4:].split(",")
        if len(parts) != 2:
            raise ValueError(f"dataset {tag!r}: expected idx:<images>,<labels>")
        return load_idx(parts[0], parts[1])
    if tag.endswith(".npz"):
        return load_dataset(tag)
    raise ValueError(f"unknown dataset {tag!r}")


# ---------------------------------------------------------------------------
# PGM serialization

def write_pgm(image, path):
    """Write a 2-D uint8 array as binary PGM (P5)."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("write_pgm expects a 2-D uint8 array")
    height, width = image.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        handle.write(image.tobytes())


def read_pgm(path):
    """Read a binary PGM written by write_pgm back into a uint8 array."""
    with open(path, "rb") as handle:
        blob = handle.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5" or fields[3] != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    width, height = int(fields[1]), int(fields[2])
    pixels = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width).copy()


def to_pixel_values(samples):
    """Linear [-1, 1] -> [0, 255] quantization."""
    return np.clip(np.rint((np.asarray(samples) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def from_pixel_values(pixels):
    return pixels.astype(np.float64) / 127.5 - 1.0


def write_sample_grid(samples, rows, cols, path):
    """Tile square samples into one grayscale PGM of rows*h by cols*w pixels."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError("samples must be a 2-D matrix")
    if len(samples) < rows * cols:
        raise ValueError(f"need {rows * cols} samples to fill the grid, got {len(samples)}")
    side = int(round(samples.shape[1] ** 0.5))
    if side * side != samples.shape[1]:
        raise ValueError(f"sample dimension {samples.shape[1]} is not a perfect square")
    tiles = to_pixel_values(samples[: rows * cols]).reshape(rows, cols, side, side)
    sheet = tiles.transpose(0, 2, 1, 3).reshape(rows * side, cols * side)
    write_pgm(sheet, path)


def render_scatter_pgm(points, path, *, cells=64, lo=-1.0, hi=1.0):
    """Render 2-D points as an occupancy heatmap PGM (white = dense)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("render_scatter_pgm expects (n, 2) points")
    counts, _, _ = np.histogram2d(
        points[:, 1], points[:, 0], bins=cells, range=[[lo, hi], [lo, hi]]
    )
    peak = counts.max()
    image = np.zeros((cells, cells), dtype=np.uint8)
    if peak > 0:
        image = np.rint(255.0 * counts / peak).astype(np.uint8)
    write_pgm(image[::-1], path)
