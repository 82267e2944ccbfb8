"""Targeted L-infinity attacks (BIM, RPGD) and the median-perturbation metric.

Attacks differentiate the targeted cross-entropy of the FINAL time-step's
logits through the whole unrolled graph, take signed-gradient descent steps,
and project every iterate into the epsilon-ball intersected with [0, 1].
Success means argmax of the final-step logits equals the target class on the
returned (final) iterate.

RPGD's random start is keyed by the image's content hash (plus the config
seed), so duplicated or reordered datasets produce identical per-image
results and the aggregate median is a pure function of the image set.
"""

from __future__ import annotations

import hashlib
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .network import PCNet, unroll
from .tensor import NumericalError, Tape, Tensor

__all__ = [
    "AttackConfig",
    "AttackOutcome",
    "AttackResult",
    "DEFAULT_EPSILONS",
    "bim_attack",
    "rpgd_attack",
    "median_min_perturbation",
]

# geometric grid, 1/255 doubling up to 64/255
DEFAULT_EPSILONS = tuple(k / 255.0 for k in (1, 2, 4, 8, 16, 32, 64))

_METHODS = ("bim", "rpgd")
_TARGET_RULES = ("least_likely", "fixed_offset")


@dataclass(frozen=True)
class AttackConfig:
    method: str = "bim"
    epsilons: tuple = DEFAULT_EPSILONS
    steps: int = 40
    step_scale: float = 2.5  # step size = step_scale * eps / steps
    target_rule: str = "least_likely"
    target_offset: int = 1
    timesteps: int = 10
    seed: int = 0
    min_images: int = 50
    max_images: int | None = None
    batch_size: int = 64

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown attack method {self.method!r}; expected one of {_METHODS}")
        if self.target_rule not in _TARGET_RULES:
            raise ValueError(f"unknown target rule {self.target_rule!r}")
        eps = tuple(self.epsilons)
        if not eps or any(e <= 0 for e in eps) or any(
                eps[i] >= eps[i + 1] for i in range(len(eps) - 1)):
            raise ValueError(f"epsilon grid must be strictly ascending and positive, got {eps}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_scale <= 0:
            raise ValueError(f"step_scale must be positive, got {self.step_scale}")
        if self.timesteps < 0:
            raise ValueError(f"timesteps must be non-negative, got {self.timesteps}")
        if self.batch_size < 1 or self.min_images < 1:
            raise ValueError("batch_size and min_images must be >= 1")
        if self.max_images is not None and self.max_images < self.min_images:
            raise ValueError(
                f"max_images {self.max_images} is below min_images {self.min_images}")


@dataclass
class AttackOutcome:
    """One (image, epsilon) attack: final iterate and whether it fooled."""

    success: bool
    image: np.ndarray
    predicted: int
    error: str | None = None


@dataclass
class AttackResult:
    """Ascending-sweep summary over a dataset."""

    method: str
    epsilons: list
    per_image: list  # (dataset index, minimal successful epsilon or inf)
    median: float
    success_rate: list  # per grid epsilon, fraction with min eps <= it
    n_eligible: int
    n_skipped: int  # misclassified images excluded from the metric


@contextmanager
def _weights_detached(net: PCNet):
    """Temporarily stop weight-gradient work; attacks only need image grads."""
    params = net.parameters()
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag


def _content_rng(seed: int, image: np.ndarray) -> np.random.Generator:
    digest = hashlib.blake2b(np.ascontiguousarray(image).tobytes(), digest_size=8).digest()
    words = np.frombuffer(digest, dtype=np.uint32)
    ss = np.random.SeedSequence(seed, spawn_key=(int(words[0]), int(words[1])))
    return np.random.Generator(np.random.Philox(ss))


def _as_batch(image) -> np.ndarray:
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValueError(f"expected a (C, H, W) or (N, C, H, W) image, got {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("images must lie in [0, 1]; the epsilon ball is clipped to it")
    return arr.astype(np.float32, copy=True)


def _final_logits_and_grad(net, x_np, hps, targets, T):
    """Targeted cross-entropy at the final step; returns (logits, d loss / d x).

    Batch-mean cross-entropy is fine here: images never mix inside the graph,
    so each image's slice of the gradient is its own (scaled) gradient, and
    sign() erases the scale.
    """
    x = tt.tensor(x_np, requires_grad=True)
    with Tape() as tape:
        logits = unroll(net, x, hps, T).logits[-1]
        loss = tt.cross_entropy(logits, targets)
    tape.backward(loss)
    return logits.data, x.grad.astype(np.float32)


def _final_logits(net, x_np, hps, T) -> np.ndarray:
    return unroll(net, tt.tensor(x_np), hps, T).logits[-1].data


def _attack_batch(net, x0, targets, eps, hps, cfg) -> tuple:
    """Run cfg.steps signed-gradient steps on a batch; returns (adv, success)."""
    lo = np.maximum(0.0, x0 - eps).astype(np.float32)
    hi = np.minimum(1.0, x0 + eps).astype(np.float32)
    if cfg.method == "rpgd":
        starts = [
            _content_rng(cfg.seed, x0[i]).uniform(-eps, eps, size=x0.shape[1:])
            for i in range(x0.shape[0])
        ]
        x = np.clip(x0 + np.asarray(starts, dtype=np.float32), lo, hi)
    else:
        x = x0.copy()
    step = np.float32(cfg.step_scale * eps / cfg.steps)
    for _ in range(cfg.steps):
        _, grad = _final_logits_and_grad(net, x, hps, targets, cfg.timesteps)
        x = np.clip(x - step * np.sign(grad), lo, hi)
    preds = _final_logits(net, x, hps, cfg.timesteps).argmax(axis=1)
    return x, preds == targets, preds


def _single_attack(net, hps, image, label, target, eps, cfg) -> AttackOutcome:
    x0 = _as_batch(image)
    if x0.shape[0] != 1:
        raise ValueError(f"single-image attack got a batch of {x0.shape[0]}")
    targets = np.asarray([target], dtype=np.int64)
    with _weights_detached(net):
        if eps < 0:
            raise ValueError(f"epsilon must be non-negative, got {eps}")
        if eps == 0.0:
            preds = _final_logits(net, x0, hps, cfg.timesteps).argmax(axis=1)
            return AttackOutcome(bool(preds[0] == target), x0[0], int(preds[0]))
        try:
            adv, ok, preds = _attack_batch(net, x0, targets, float(eps), hps, cfg)
        except NumericalError as err:
            return AttackOutcome(False, x0[0], int(label),
                                 error=f"non-finite attack gradient: {err}")
    return AttackOutcome(bool(ok[0]), adv[0], int(preds[0]))


def bim_attack(net, hps, image, label, target, eps, cfg: AttackConfig) -> AttackOutcome:
    """Basic iterative method from the clean image."""
    if cfg.method != "bim":
        raise ValueError(f"bim_attack got config for {cfg.method!r}")
    return _single_attack(net, hps, image, label, target, eps, cfg)


def rpgd_attack(net, hps, image, label, target, eps, cfg: AttackConfig) -> AttackOutcome:
    """Projected signed-gradient descent from a random point in the ball."""
    if cfg.method != "rpgd":
        raise ValueError(f"rpgd_attack got config for {cfg.method!r}")
    return _single_attack(net, hps, image, label, target, eps, cfg)


def _pick_targets(clean_logits: np.ndarray, labels: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.target_rule == "least_likely":
        return clean_logits.argmin(axis=1).astype(np.int64)
    k = clean_logits.shape[1]
    return ((labels + cfg.target_offset) % k).astype(np.int64)


def median_min_perturbation(net, hps, dataset, cfg: AttackConfig) -> AttackResult:
    """Ascending epsilon sweep per image; aggregates the median minimal budget.

    Misclassified images are skipped (fooling is undefined for them); at
    least cfg.min_images eligible images are required. Images already
    classified as their target count as minimal epsilon 0. Images never
    fooled inside the grid carry infinity, which np.median ranks above every
    finite entry.
    """
    images, labels = dataset.images, dataset.labels
    if images.min() < 0.0 or images.max() > 1.0:
        raise ValueError("images must lie in [0, 1]; the epsilon ball is clipped to it")

    with _weights_detached(net):
        # scan until enough correctly-classified images are collected;
        # n_skipped counts only misclassified ones, not truncation leftovers
        eligible, kept_logits = [], []
        n_seen, n_hit = 0, 0
        for s in range(0, images.shape[0], cfg.batch_size):
            logits = _final_logits(net, images[s:s + cfg.batch_size], hps, cfg.timesteps)
            hit = np.nonzero(logits.argmax(axis=1) == labels[s:s + cfg.batch_size])[0]
            eligible.extend(int(s + i) for i in hit)
            kept_logits.append(logits[hit])
            n_seen += logits.shape[0]
            n_hit += hit.size
            if cfg.max_images is not None and len(eligible) >= cfg.max_images:
                break
        if cfg.max_images is not None:
            eligible = eligible[:cfg.max_images]
        eligible = np.asarray(eligible, dtype=np.int64)
        clean_logits = np.concatenate(kept_logits)[:eligible.size] if eligible.size else \
            np.zeros((0, 1), dtype=np.float32)
        n_skipped = n_seen - n_hit
        if eligible.size == 0:
            raise ValueError("no eligible images: every input is misclassified")
        if eligible.size < cfg.min_images:
            raise ValueError(
                f"only {eligible.size} correctly-classified images; "
                f"need at least {cfg.min_images}"
            )

        targets = _pick_targets(clean_logits, labels[eligible], cfg)
        min_eps = np.full(eligible.size, np.inf)
        already = clean_logits.argmax(axis=1) == targets
        min_eps[already] = 0.0

        for eps in cfg.epsilons:
            todo = np.nonzero(~np.isfinite(min_eps))[0]
            if todo.size == 0:
                break
            for s in range(0, todo.size, cfg.batch_size):
                chunk = todo[s:s + cfg.batch_size]
                x0 = images[eligible[chunk]].astype(np.float32)
                try:
                    _, ok, _ = _attack_batch(net, x0, targets[chunk], float(eps), hps, cfg)
                except NumericalError:
                    continue  # diverged attack counts as failure at this budget
                min_eps[chunk[ok]] = eps

    grid = list(cfg.epsilons)
    return AttackResult(
        method=cfg.method,
        epsilons=grid,
        per_image=[(int(eligible[i]), float(min_eps[i])) for i in range(eligible.size)],
        median=float(np.median(min_eps)),
        success_rate=[float(np.mean(min_eps <= e)) for e in grid],
        n_eligible=int(eligible.size),
        n_skipped=int(n_skipped),
    )
