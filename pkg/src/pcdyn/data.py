"""CIFAR-10 binary ingestion and a synthetic stand-in corpus.

The binary batch format: each record is 3073 bytes, one label byte (0..9)
followed by 3072 pixel bytes laid out channel-planar (1024 red, 1024 green,
1024 blue, each row-major 32x32). Pixels map to [0, 1] floats by /255.

When no real data directory is given (argument or PCDYN_CIFAR10_DIR), a
deterministic synthetic corpus stands in: 10 classes defined by grating
orientation and channel color, with per-image phase/amplitude jitter,
low-frequency background blobs, and pixel noise. It is byte-compatible with
the batch format via write_batch_files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RECORD_BYTES",
    "IMAGE_BYTES",
    "IMAGE_SHAPE",
    "NUM_CLASSES",
    "Dataset",
    "read_batch_file",
    "write_batch_files",
    "ingest_cifar10",
    "synthesize_corpus",
    "load_dataset",
    "DATA_DIR_ENV",
]

IMAGE_SHAPE = (3, 32, 32)
IMAGE_BYTES = 3 * 32 * 32
RECORD_BYTES = 1 + IMAGE_BYTES
NUM_CLASSES = 10
DATA_DIR_ENV = "PCDYN_CIFAR10_DIR"


@dataclass
class Dataset:
    """Images (N, 3, 32, 32) float32 in [0, 1] and integer labels (N,)."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1:] != IMAGE_SHAPE:
            raise ValueError(f"images must be (N, 3, 32, 32), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match {self.images.shape[0]} images"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    def take(self, n: int) -> "Dataset":
        if n > len(self):
            raise ValueError(f"asked for {n} images, dataset has {len(self)}")
        return Dataset(self.images[:n], self.labels[:n])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx])


def read_batch_file(path: str) -> Dataset:
    """Parse one binary batch file; errors name the offending byte offset."""
    with open(path, "rb") as f:
        blob = f.read()
    extra = len(blob) % RECORD_BYTES
    if extra:
        raise ValueError(
            f"{path}: truncated record at byte offset {len(blob) - extra} "
            f"(file size {len(blob)} is not a multiple of {RECORD_BYTES})"
        )
    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.nonzero(labels >= NUM_CLASSES)[0]
    if bad.size:
        off = int(bad[0]) * RECORD_BYTES
        raise ValueError(
            f"{path}: label byte {labels[bad[0]]} at byte offset {off} is not in 0..9"
        )
    images = records[:, 1:].reshape(-1, *IMAGE_SHAPE).astype(np.float32) / np.float32(255)
    return Dataset(images, labels)


def write_batch_files(dir_path: str, images_u8: np.ndarray, labels: np.ndarray,
                      records_per_file: int = 10000, prefix: str = "data_batch") -> list:
    """Write uint8 images/labels as standard binary batches; returns the paths."""
    if images_u8.dtype != np.uint8:
        raise TypeError(f"images must be uint8, got {images_u8.dtype}")
    if images_u8.shape[1:] != IMAGE_SHAPE:
        raise ValueError(f"images must be (N, 3, 32, 32), got {images_u8.shape}")
    n = images_u8.shape[0]
    os.makedirs(dir_path, exist_ok=True)
    paths = []
    for start in range(0, n, records_per_file):
        stop = min(start + records_per_file, n)
        rows = np.empty((stop - start, RECORD_BYTES), dtype=np.uint8)
        rows[:, 0] = labels[start:stop]
        rows[:, 1:] = images_u8[start:stop].reshape(stop - start, IMAGE_BYTES)
        path = os.path.join(dir_path, f"{prefix}_{start // records_per_file + 1}.bin")
        with open(path, "wb") as f:
            f.write(rows.tobytes())
        paths.append(path)
    return paths


def ingest_cifar10(path: str) -> Dataset:
    """Read one batch file, or every *.bin in a directory in name order."""
    if os.path.isdir(path):
        names = sorted(f for f in os.listdir(path) if f.endswith(".bin"))
        if not names:
            raise FileNotFoundError(f"{path}: no .bin batch files found")
        parts = [read_batch_file(os.path.join(path, name)) for name in names]
        return Dataset(np.concatenate([p.images for p in parts]),
                       np.concatenate([p.labels for p in parts]))
    return read_batch_file(path)


# ------------------------------------------------------------ synthetic corpus

# Class identity is the grating orientation (c * 18 degrees) of a localized
# Gabor patch; everything else (patch position, color, contrast, phase, a
# distractor patch, background blobs) is a per-image nuisance. Localizing
# the cue keeps accuracy off the ceiling at small training sizes and makes
# pixel corruption genuinely destructive instead of averaging out.
_CLASS_ANGLES = np.arange(NUM_CLASSES) * np.pi / NUM_CLASSES


def _gabor(theta, freq, phase, cy, cx, width, xx, yy) -> np.ndarray:
    dy = yy[None] - cy[:, None, None]
    dx = xx[None] - cx[:, None, None]
    proj = np.cos(theta)[:, None, None] * dx + np.sin(theta)[:, None, None] * dy
    carrier = np.sin(2 * np.pi * freq[:, None, None] * proj + phase[:, None, None])
    envelope = np.exp(-(dx ** 2 + dy ** 2) / (2 * width[:, None, None] ** 2))
    return carrier * envelope


def synthesize_corpus(n: int, seed: int = 0) -> tuple:
    """Deterministic 10-class synthetic images: (uint8 (n,3,32,32), labels (n,))."""
    ss = np.random.SeedSequence(seed, spawn_key=(0x5EED,))
    rng = np.random.Generator(np.random.Philox(ss))
    labels = rng.integers(0, NUM_CLASSES, size=n)

    coords = (np.arange(32) - 15.5) / 32.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    theta = _CLASS_ANGLES[labels] + rng.uniform(-0.1, 0.1, n)
    freq = rng.uniform(3.0, 4.5, n)
    phase = rng.uniform(0, 2 * np.pi, n)
    amp = rng.uniform(0.34, 0.58, n)
    cy = rng.uniform(-0.2, 0.2, n)
    cx = rng.uniform(-0.2, 0.2, n)
    width = rng.uniform(0.16, 0.24, n)
    color = rng.uniform(0.35, 1.0, (n, 3))  # nuisance, not tied to the label
    patch = _gabor(theta, freq, phase, cy, cx, width, xx, yy)
    signal = (color * amp[:, None])[:, :, None, None] * patch[:, None, :, :]

    # distractor patch at an unrelated orientation, position, and color
    d_theta = rng.uniform(0, np.pi, n)
    d_freq = rng.uniform(1.8, 4.2, n)
    d_phase = rng.uniform(0, 2 * np.pi, n)
    d_amp = amp * rng.uniform(0.25, 0.55, n)
    d_cy = rng.uniform(-0.28, 0.28, n)
    d_cx = rng.uniform(-0.28, 0.28, n)
    d_width = rng.uniform(0.1, 0.18, n)
    d_color = rng.uniform(0.35, 1.0, (n, 3))
    distract = _gabor(d_theta, d_freq, d_phase, d_cy, d_cx, d_width, xx, yy)
    signal += (d_color * d_amp[:, None])[:, :, None, None] * distract[:, None, :, :]

    # two low-frequency background blobs per image, random channel mix
    blobs = np.zeros((n, 3, 32, 32))
    for _ in range(2):
        cy = rng.uniform(-0.4, 0.4, n)[:, None, None]
        cx = rng.uniform(-0.4, 0.4, n)[:, None, None]
        width = rng.uniform(0.12, 0.3, n)[:, None, None]
        bump = np.exp(-(((yy[None] - cy) ** 2 + (xx[None] - cx) ** 2) / (2 * width ** 2)))
        mix = rng.uniform(-0.15, 0.15, (n, 3))
        blobs += mix[:, :, None, None] * bump[:, None, :, :]

    img = 0.5 + signal + blobs + rng.uniform(-0.04, 0.04, (n, 3, 32, 32))
    return np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8), labels


def _from_u8(images_u8: np.ndarray, labels: np.ndarray) -> Dataset:
    return Dataset(images_u8.astype(np.float32) / np.float32(255), labels.astype(np.int64))


def load_dataset(n_train: int, n_val: int, seed: int = 0, data_dir: str | None = None) -> tuple:
    """(train, val) Datasets from real batches if available, else synthetic.

    Real data: data_dir argument, falling back to the PCDYN_CIFAR10_DIR
    environment variable. Train images come from data_batch_*.bin and
    validation from test_batch.bin when present (otherwise one pool is
    split). Synthetic data is deterministic in (n_train, n_val, seed).
    """
    root = data_dir or os.environ.get(DATA_DIR_ENV)
    if root:
        names = sorted(f for f in os.listdir(root) if f.endswith(".bin"))
        train_names = [f for f in names if f.startswith("data_batch")]
        test_names = [f for f in names if f.startswith("test_batch")]
        if train_names and test_names:
            pool = [read_batch_file(os.path.join(root, f)) for f in train_names]
            train_pool = Dataset(np.concatenate([p.images for p in pool]),
                                 np.concatenate([p.labels for p in pool]))
            val_pool = read_batch_file(os.path.join(root, test_names[0]))
            return train_pool.take(n_train), val_pool.take(n_val)
        pool = ingest_cifar10(root)
        if n_train + n_val > len(pool):
            raise ValueError(
                f"{root}: need {n_train + n_val} images, found {len(pool)}"
            )
        return pool.take(n_train), pool.subset(slice(n_train, n_train + n_val))
    images_u8, labels = synthesize_corpus(n_train + n_val, seed)
    return (_from_u8(images_u8[:n_train], labels[:n_train]),
            _from_u8(images_u8[n_train:], labels[n_train:]))
