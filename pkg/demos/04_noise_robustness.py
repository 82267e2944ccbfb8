"""Noise corruptions and how the feedback dynamics respond to them.

Two corruption families, four levels each (level 0 is clean): additive
Gaussian pixel noise and salt-and-pepper pixel flips. Corruption is keyed by
image index, so the same image always receives the same noise; that makes
training and evaluation on a fixed condition deterministic.

The second half trains a small pipeline, then walks accuracy over the
recurrence timestep on a noisy validation set: with coefficients tuned for
that condition, iterating the dynamics should not hurt, and at useful noise
levels it helps.
"""

import numpy as np

from pcdyn.corruption import LEVEL_PARAMS, NoiseSpec, corrupt, noise_grid
from pcdyn.data import load_dataset
from pcdyn.network import build_shallow
from pcdyn.training import (
    TrainConfig,
    evaluate_unrolled,
    freeze,
    train_feedback_unsupervised,
    train_feedforward,
    train_hyperparams,
)

train, val = load_dataset(768, 256, seed=3)

print("corruption grid (parameter per level):")
for kind in ("gaussian", "salt_pepper"):
    params = "  ".join(f"{p:g}" for p in LEVEL_PARAMS[kind])
    print(f"  {kind:<12} {params}")

spec = NoiseSpec("gaussian", 2, seed=5)
once = corrupt(val.images, spec)
again = corrupt(val.images, spec)
print(f"same spec, same pixels: {np.array_equal(once, again)}")
print(f"grid for one kind: {[s.level for s in noise_grid('salt_pepper')]}")

net = build_shallow(np.random.default_rng(3))
rep = train_feedforward(
    net, train, val, TrainConfig("ff_supervised", epochs=12, batch_size=32, seed=3))
print(f"\nclean val accuracy after forward training: {rep.final_val_accuracy:.3f}")
freeze(net.ff_parameters())
train_feedback_unsupervised(
    net, train, val, TrainConfig("fb_unsupervised", epochs=6, batch_size=32, seed=3))
freeze(net.parameters())

noise = NoiseSpec("gaussian", 1, seed=5)
hp = train_hyperparams(net, train, val, TrainConfig(
    "hp_only", epochs=3, batch_size=64, timesteps=3, restarts=2,
    lr=0.02, alpha_lr=0.01, noise=noise, seed=3))

noisy_val = corrupt(val.images, noise)
stats = evaluate_unrolled(net, noisy_val, val.labels, hp.hyperparams, T=6)
print(f"\naccuracy over timesteps on {noise.kind} level {noise.level}:")
for t, acc in enumerate(stats["accuracy"]):
    bar = "#" * int(round(acc * 40))
    print(f"  t={t}  {acc:.3f}  {bar}")
print("epsilon (prediction error) per PCoder at t=0 and final t:")
print(f"  t0    {['%.4f' % e for e in stats['epsilons'][0]]}")
print(f"  t{len(stats['epsilons']) - 1}    "
      f"{['%.4f' % e for e in stats['epsilons'][-1]]}")
