"""Noise stimuli: additive Gaussian and salt-and-pepper corruption.

Determinism contract: all randomness comes from numpy's Philox bit generator
(a 64-bit counter-based PRNG), keyed per image by the child SeedSequence
``SeedSequence(spec.seed, spawn_key=(image_index,))``. Corrupting a batch is
therefore identical to corrupting its images one at a time, results are
platform-stable, and work can be fanned out across images safely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, tensor

__all__ = ["NoiseSpec", "corrupt", "noise_grid", "KINDS", "LEVEL_PARAMS"]

KINDS = ("gaussian", "salt_pepper", "clean")

# level index -> parameter (sigma for gaussian, pixel fraction for salt_pepper)
LEVEL_PARAMS = {
    "gaussian": (0.0, 0.2, 0.4, 0.8),
    "salt_pepper": (0.0, 0.02, 0.04, 0.08),
    "clean": (0.0,),
}


@dataclass(frozen=True)
class NoiseSpec:
    """One corruption condition: kind, severity level (0 = clean), seed."""

    kind: str
    level: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        levels = LEVEL_PARAMS[self.kind]
        if not isinstance(self.level, int) or not 0 <= self.level < len(levels):
            raise ValueError(
                f"invalid level {self.level!r} for kind {self.kind!r} "
                f"(valid: 0..{len(levels) - 1})"
            )
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")

    @property
    def param(self) -> float:
        """The level's fixed parameter value (0.0 at level 0)."""
        return LEVEL_PARAMS[self.kind][self.level]

    @property
    def is_clean(self) -> bool:
        return self.kind == "clean" or self.level == 0


def noise_grid(kind: str, seed: int = 0) -> list:
    """All levels of one kind, clean first."""
    if kind not in ("gaussian", "salt_pepper"):
        raise ValueError(f"noise_grid expects gaussian or salt_pepper, got {kind!r}")
    return [NoiseSpec(kind, level, seed) for level in range(4)]


def _image_rng(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def corrupt(images, spec: NoiseSpec, index_offset: int = 0):
    """Apply one noise condition to a batch of [0,1] images.

    images: Tensor or ndarray, (N, C, H, W). The return type matches the
    input type; a clean spec returns the input object unchanged. Image i
    draws from the generator keyed by index_offset + i, so slicing a batch
    and corrupting the slice (with the matching offset) reproduces the
    corresponding rows of the full-batch result.

    gaussian: add i.i.d. N(0, sigma^2) per element, then clamp to [0, 1].
    salt_pepper: per image, pick round(p * H * W) pixel positions uniformly
    without replacement, shared across channels; the first ceil(n/2) drawn
    become white (1.0) and the rest black (0.0).
    """
    arr = images.data if isinstance(images, Tensor) else np.asarray(images)
    if arr.ndim != 4:
        raise ValueError(f"corrupt expects (N, C, H, W) images, got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(
            f"corrupt expects images in [0, 1], got range "
            f"[{arr.min():.4g}, {arr.max():.4g}]"
        )
    if spec.is_clean:
        return images

    n, c, h, w = arr.shape
    out = arr.astype(np.float64, copy=True)
    if spec.kind == "gaussian":
        sigma = spec.param
        for i in range(n):
            rng = _image_rng(spec.seed, index_offset + i)
            out[i] += sigma * rng.standard_normal((c, h, w))
        np.clip(out, 0.0, 1.0, out=out)
    else:  # salt_pepper
        count = int(np.rint(spec.param * h * w))
        n_salt = (count + 1) // 2
        for i in range(n):
            rng = _image_rng(spec.seed, index_offset + i)
            pos = rng.choice(h * w, size=count, replace=False)
            flat = out[i].reshape(c, h * w)
            flat[:, pos[:n_salt]] = 1.0
            flat[:, pos[n_salt:]] = 0.0

    out = out.astype(arr.dtype, copy=False)
    return tensor(out, dtype=arr.dtype) if isinstance(images, Tensor) else out
