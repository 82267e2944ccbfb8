"""Parameter-training regimes, hyper-parameter optimization, and ablations.

Four regimes:
  ff_supervised    cross-entropy on the plain forward pass; SGD 0.01/0.9;
                   decoder weights untouched (verified bitwise).
  fb_unsupervised  decoder reconstruction of the layer below from the
                   feed-forward states on clean images; encoder weights must
                   already be frozen; SGD 0.01/0.9.
  fb_supervised    joint training of encoders and decoders by cross-entropy
                   under unrolling with mixing pinned to (1/3, 1/3, 1/3) and
                   alpha = 0.01; SGD 0.005/0.9.
  hp_only          every network weight frozen (verified by hashing); only
                   the auxiliary hyper-parameters move, Adam 0.001 with
                   weight decay 5e-4 at batch 128, loss = mean cross-entropy
                   over time-steps t = 1..T, several random restarts.

Losses are reported per epoch as (epoch, split, metric, value) rows; the CSV
emitted by the harness uses exactly these columns.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as tt
from .corruption import NoiseSpec, corrupt
from .hyperparams import HPMask, HyperParams, TrainableHyperParams, init_uniform
from .network import PCNet, unroll
from .optim import SGD, Adam
from .tensor import NumericalError, Tape, Tensor

__all__ = [
    "TrainConfig",
    "TrainReport",
    "RestartResult",
    "TrainingDiverged",
    "PINNED_FB_HP",
    "train_feedforward",
    "train_feedback_unsupervised",
    "train_feedback_supervised",
    "train_hyperparams",
    "ablation_suite",
    "evaluate_unrolled",
    "freeze",
    "unfreeze",
    "params_digest",
]

REGIMES = ("ff_supervised", "fb_unsupervised", "fb_supervised", "hp_only")

# fb_supervised trains the weights under fixed, symmetric mixing
PINNED_FB_HP = HyperParams(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.01)

_DEFAULT_LR = {
    "ff_supervised": 0.01,
    "fb_unsupervised": 0.01,
    "fb_supervised": 0.005,
    "hp_only": 0.001,
}


class TrainingDiverged(RuntimeError):
    """Raised when a loss stops being finite; carries epoch/batch context."""


@dataclass(frozen=True)
class TrainConfig:
    """One training run description; lr=None picks the regime's default."""

    regime: str
    epochs: int
    batch_size: int
    timesteps: int = 10
    lr: float | None = None
    momentum: float = 0.9
    weight_decay: float = 5e-4
    alpha_lr: float | None = None  # hp_only: separate rate for the alpha group
    noise: NoiseSpec | None = None
    mask: HPMask = field(default_factory=HPMask)
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.timesteps < 1:
            raise ValueError(f"timesteps must be >= 1, got {self.timesteps}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.regime == "hp_only" and self.noise is None:
            raise ValueError("hp_only requires cfg.noise (use NoiseSpec('clean', 0) for clean)")
        if self.regime in ("ff_supervised", "fb_unsupervised", "fb_supervised"):
            if self.noise is not None and not self.noise.is_clean:
                raise ValueError(f"{self.regime} trains on clean images; got noise {self.noise}")

    @property
    def effective_lr(self) -> float:
        return self.lr if self.lr is not None else _DEFAULT_LR[self.regime]


@dataclass
class RestartResult:
    """One hp_only restart: learned values and their validation score."""

    restart: int
    hyperparams: list  # one HyperParams per PCoder (duplicated when shared)
    val_accuracy: float  # at the final time-step
    loss_curve: list


@dataclass
class TrainReport:
    regime: str
    curves: list  # rows (epoch, split, metric, value)
    final_train_accuracy: float | None = None
    final_val_accuracy: float | None = None
    per_pcoder_recon: list | None = None  # final epoch, one value per PCoder
    restarts: list | None = None  # hp_only: RestartResult per restart
    best_restart: int | None = None
    hyperparams: list | None = None  # the best restart's HyperParams per PCoder

    def curve(self, split: str, metric: str) -> list:
        return [row[3] for row in self.curves if row[1] == split and row[2] == metric]


# ------------------------------------------------------------------- utilities


def freeze(params) -> None:
    for p in params:
        p.requires_grad = False


def unfreeze(params) -> None:
    for p in params:
        p.requires_grad = True


def params_digest(params) -> str:
    """SHA-256 over the raw bytes of the parameter buffers, in order."""
    h = hashlib.sha256()
    for p in params:
        arr = p.data if isinstance(p, Tensor) else np.asarray(p)
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _require_frozen_digest(params, label: str) -> str:
    for p in params:
        if p.requires_grad:
            raise ValueError(
                f"{label} must be frozen before this regime (call training.freeze)"
            )
    return params_digest(params)


def _verify_unchanged(params, digest: str, label: str) -> None:
    if params_digest(params) != digest:
        raise RuntimeError(f"freezing contract violated: {label} changed during training")


def _epoch_order(n: int, seed: int, restart: int, epoch: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(restart, epoch))
    return np.random.Generator(np.random.Philox(ss)).permutation(n)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _wrap_divergence(epoch: int, batch: int):
    def decorate(err: NumericalError) -> TrainingDiverged:
        return TrainingDiverged(f"non-finite value at epoch {epoch}, batch {batch}: {err}")
    return decorate


def _mean_unrolled_ce(net: PCNet, x: Tensor, labels: np.ndarray, hps, T: int,
                      detach_error_gradient: bool = False) -> Tensor:
    """Mean over t = 1..T of the cross-entropy at each unrolled step."""
    out = unroll(net, x, hps, T, detach_error_gradient=detach_error_gradient)
    total = tt.cross_entropy(out.logits[1], labels)
    for lg in out.logits[2:]:
        total = tt.add(total, tt.cross_entropy(lg, labels))
    return tt.mul(total, 1.0 / T)


def evaluate_unrolled(net: PCNet, images: np.ndarray, labels: np.ndarray, hps,
                      T: int, batch_size: int = 128) -> dict:
    """Accuracy and mean per-PCoder prediction error at every time-step.

    Returns {"accuracy": [T+1 floats], "epsilons": [T+1][n_pcoders floats]}.
    """
    n = images.shape[0]
    if n == 0:
        raise ValueError("evaluate_unrolled: empty dataset")
    correct = np.zeros(T + 1)
    eps_sum = None
    for start in range(0, n, batch_size):
        x = tt.tensor(images[start:start + batch_size])
        y = labels[start:start + batch_size]
        out = unroll(net, x, hps, T, record_epsilons=True)
        for t, lg in enumerate(out.logits):
            correct[t] += (lg.data.argmax(axis=1) == y).sum()
        eps = np.asarray(out.epsilons) * x.shape[0]
        eps_sum = eps if eps_sum is None else eps_sum + eps
    return {
        "accuracy": (correct / n).tolist(),
        "epsilons": (eps_sum / n).tolist(),
    }


def _forward_accuracy(net, images: np.ndarray, labels: np.ndarray,
                      batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, images.shape[0], batch_size):
        logits = net.forward_logits(tt.tensor(images[start:start + batch_size]))
        hits += (logits.data.argmax(axis=1) == labels[start:start + batch_size]).sum()
    return float(hits / images.shape[0])


# -------------------------------------------------------------------- regimes


def train_feedforward(net: PCNet, train, val, cfg: TrainConfig) -> TrainReport:
    """Supervised training of the encoders and head on the plain forward pass."""
    if cfg.regime != "ff_supervised":
        raise ValueError(f"train_feedforward got regime {cfg.regime!r}")
    fb_digest = params_digest(net.fb_parameters())
    opt = SGD(net.ff_parameters(), lr=cfg.effective_lr, momentum=cfg.momentum)

    curves = []
    for epoch in range(cfg.epochs):
        order = _epoch_order(len(train), cfg.seed, 0, epoch)
        losses = []
        for b, idx in enumerate(_batches(len(train), cfg.batch_size, order)):
            x = tt.tensor(train.images[idx])
            y = train.labels[idx]
            try:
                with Tape() as tape:
                    loss = tt.cross_entropy(net.forward_logits(x), y)
                tape.backward(loss)
            except NumericalError as err:
                raise _wrap_divergence(epoch, b)(err) from err
            opt.step()
            opt.zero_grad()
            losses.append(loss.item())
        curves.append((epoch, "train", "cross_entropy", float(np.mean(losses))))
        curves.append((epoch, "val", "accuracy", _forward_accuracy(net, val.images, val.labels)))

    _verify_unchanged(net.fb_parameters(), fb_digest, "feedback weights")
    return TrainReport(
        regime=cfg.regime,
        curves=curves,
        final_train_accuracy=_forward_accuracy(net, train.images, train.labels),
        final_val_accuracy=curves[-1][3],
    )


def _recon_losses(net: PCNet, x: Tensor) -> list:
    """Per-PCoder mse(B_i(m_i), m_{i-1}) from the feed-forward states."""
    losses = []
    target = x
    for pc in net.pcoders:
        state = pc.ff(target)
        losses.append(tt.mse(pc.fb(state), target))
        target = state
    return losses


def train_feedback_unsupervised(net: PCNet, train, val, cfg: TrainConfig) -> TrainReport:
    """Reconstruction training of the decoders; encoders stay bitwise fixed."""
    if cfg.regime != "fb_unsupervised":
        raise ValueError(f"train_feedback_unsupervised got regime {cfg.regime!r}")
    ff_digest = _require_frozen_digest(net.ff_parameters(), "encoder weights and head")
    opt = SGD(net.fb_parameters(), lr=cfg.effective_lr, momentum=cfg.momentum)

    curves = []
    n_pc = len(net.pcoders)
    last_per_pc = None
    for epoch in range(cfg.epochs):
        order = _epoch_order(len(train), cfg.seed, 0, epoch)
        sums = np.zeros(n_pc)
        batches = 0
        for b, idx in enumerate(_batches(len(train), cfg.batch_size, order)):
            x = tt.tensor(train.images[idx])
            try:
                with Tape() as tape:
                    losses = _recon_losses(net, x)
                    total = losses[0]
                    for term in losses[1:]:
                        total = tt.add(total, term)
                tape.backward(total)
            except NumericalError as err:
                raise _wrap_divergence(epoch, b)(err) from err
            opt.step()
            opt.zero_grad()
            sums += [l.item() for l in losses]
            batches += 1
        last_per_pc = (sums / batches).tolist()
        curves.append((epoch, "train", "recon_total", float(sum(last_per_pc))))
        for i, v in enumerate(last_per_pc, start=1):
            curves.append((epoch, "train", f"recon_pcoder{i}", float(v)))

    _verify_unchanged(net.ff_parameters(), ff_digest, "encoder weights and head")
    return TrainReport(
        regime=cfg.regime,
        curves=curves,
        final_val_accuracy=_forward_accuracy(net, val.images, val.labels),
        per_pcoder_recon=last_per_pc,
    )


def train_feedback_supervised(net: PCNet, train, val, cfg: TrainConfig) -> TrainReport:
    """Joint encoder+decoder training by unrolled cross-entropy, mixing pinned."""
    if cfg.regime != "fb_supervised":
        raise ValueError(f"train_feedback_supervised got regime {cfg.regime!r}")
    opt = SGD(net.parameters(), lr=cfg.effective_lr, momentum=cfg.momentum)

    curves = []
    for epoch in range(cfg.epochs):
        order = _epoch_order(len(train), cfg.seed, 0, epoch)
        losses = []
        for b, idx in enumerate(_batches(len(train), cfg.batch_size, order)):
            x = tt.tensor(train.images[idx])
            y = train.labels[idx]
            try:
                with Tape() as tape:
                    # first-order treatment: the error gradient enters the
                    # update as a value, not a differentiated subgraph
                    loss = _mean_unrolled_ce(net, x, y, PINNED_FB_HP, cfg.timesteps,
                                             detach_error_gradient=True)
                tape.backward(loss)
            except NumericalError as err:
                raise _wrap_divergence(epoch, b)(err) from err
            opt.step()
            opt.zero_grad()
            losses.append(loss.item())
        curves.append((epoch, "train", "cross_entropy_mean_t", float(np.mean(losses))))
        val_stats = evaluate_unrolled(net, val.images, val.labels, PINNED_FB_HP, cfg.timesteps)
        curves.append((epoch, "val", "accuracy", val_stats["accuracy"][-1]))
        curves.append((epoch, "val", "accuracy_t0", val_stats["accuracy"][0]))

    train_stats = evaluate_unrolled(net, train.images, train.labels, PINNED_FB_HP, cfg.timesteps)
    return TrainReport(
        regime=cfg.regime,
        curves=curves,
        final_train_accuracy=train_stats["accuracy"][-1],
        final_val_accuracy=curves[-2][3],
        hyperparams=[PINNED_FB_HP] * len(net.pcoders),
    )


def _hp_groups(thps: list, cfg: TrainConfig) -> list:
    coeff, alpha = [], []
    for thp in thps:
        coeff += thp.coefficient_parameters()
        alpha += thp.alpha_parameters()
    groups = [{"params": coeff}]
    if alpha:
        groups.append({"params": alpha,
                       "lr": cfg.alpha_lr if cfg.alpha_lr is not None else cfg.effective_lr})
    return groups


def train_hyperparams(net: PCNet, train, val, cfg: TrainConfig,
                      step_callback=None) -> TrainReport:
    """Optimize only the mixing hyper-parameters on one noise condition.

    Every network weight must be frozen (error otherwise; verified bitwise
    after the run). Each restart draws fresh auxiliary values from its own
    generator, so restart k is reproducible in isolation. step_callback, if
    given, is invoked after every optimizer step with the list of constrained
    per-set HyperParams; use it to monitor the simplex and alpha constraints.
    """
    if cfg.regime != "hp_only":
        raise ValueError(f"train_hyperparams got regime {cfg.regime!r}")
    theta_digest = _require_frozen_digest(net.parameters(), "all network weights")

    # noise is fixed per dataset index: one corruption up front
    train_images = corrupt(train.images, cfg.noise)
    val_images = corrupt(val.images, cfg.noise)
    n_sets = len(net.pcoders) if net.mode == "separate" else 1

    restart_results = []
    for restart in range(cfg.restarts):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(cfg.seed, spawn_key=(0xA0, restart))))
        thps = [TrainableHyperParams(init_uniform(rng)) for _ in range(n_sets)]
        opt = Adam(_hp_groups(thps, cfg), lr=cfg.effective_lr,
                   weight_decay=cfg.weight_decay)

        curve = []
        for epoch in range(cfg.epochs):
            order = _epoch_order(len(train), cfg.seed, restart, epoch)
            losses = []
            for b, idx in enumerate(_batches(len(train), cfg.batch_size, order)):
                x = tt.tensor(train_images[idx])
                y = train.labels[idx]
                try:
                    with Tape() as tape:
                        hp_nodes = [thp.effective(cfg.mask) for thp in thps]
                        hps = hp_nodes[0] if n_sets == 1 else hp_nodes
                        loss = _mean_unrolled_ce(net, x, y, hps, cfg.timesteps)
                    tape.backward(loss)
                except NumericalError as err:
                    raise _wrap_divergence(epoch, b)(err) from err
                opt.step()
                opt.zero_grad()
                for thp in thps:
                    thp.project()
                if step_callback is not None:
                    step_callback([thp.snapshot(cfg.mask) for thp in thps])
                losses.append(loss.item())
            curve.append((epoch, "train", "cross_entropy_mean_t", float(np.mean(losses))))

        learned = [thp.snapshot(cfg.mask) for thp in thps]
        per_pc = learned * len(net.pcoders) if n_sets == 1 else learned
        stats = evaluate_unrolled(net, val_images, val.labels,
                                  per_pc if n_sets > 1 else per_pc[0], cfg.timesteps)
        restart_results.append(RestartResult(
            restart=restart,
            hyperparams=per_pc,
            val_accuracy=stats["accuracy"][-1],
            loss_curve=curve,
        ))

    _verify_unchanged(net.parameters(), theta_digest, "network weights")
    best = max(range(len(restart_results)),
               key=lambda i: (restart_results[i].val_accuracy, -i))
    curves = []
    for rr in restart_results:
        for epoch, split, metric, value in rr.loss_curve:
            curves.append((epoch, f"restart{rr.restart}", metric, value))
        curves.append((cfg.epochs - 1, f"restart{rr.restart}", "val_accuracy",
                       rr.val_accuracy))
    return TrainReport(
        regime=cfg.regime,
        curves=curves,
        final_val_accuracy=restart_results[best].val_accuracy,
        restarts=restart_results,
        best_restart=best,
        hyperparams=restart_results[best].hyperparams,
    )


def ablation_suite(net: PCNet, train, val, noise_specs, cfg: TrainConfig) -> dict:
    """train_hyperparams under zero_beta and zero_alpha masks on each condition.

    Returns {(mask_name, kind, level): TrainReport}; the default 2-kind,
    4-level grid yields 16 cells.
    """
    reports = {}
    for mask_name, mask in (("zero_beta", HPMask(zero_beta=True)),
                            ("zero_alpha", HPMask(zero_alpha=True))):
        for spec in noise_specs:
            cell_cfg = replace(cfg, mask=mask, noise=spec)
            reports[(mask_name, spec.kind, spec.level)] = train_hyperparams(
                net, train, val, cell_cfg)
    return reports
