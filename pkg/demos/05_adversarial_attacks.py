"""Minimum-perturbation attacks against the unrolled dynamics.

The attacker wants the final-step prediction to become a chosen target class
while staying inside an L-infinity ball around the clean image (and inside
pixel range). Gradients flow through the whole unrolled recurrence, so the
dynamics coefficients change what the attacker is up against.

The sweep walks an ascending budget grid per image and records the smallest
budget that works; the summary statistic is the median over images, counting
never-successful images as infinity.
"""

import numpy as np

from pcdyn import tensor as tt
from pcdyn.attacks import AttackConfig, bim_attack, median_min_perturbation
from pcdyn.data import load_dataset
from pcdyn.hyperparams import HyperParams
from pcdyn.network import build_shallow, unroll
from pcdyn.training import TrainConfig, freeze, train_feedforward

train, val = load_dataset(768, 128, seed=11)
net = build_shallow(np.random.default_rng(11))
rep = train_feedforward(
    net, train, val, TrainConfig("ff_supervised", epochs=12, batch_size=32, seed=11))
print(f"clean val accuracy: {rep.final_val_accuracy:.3f}")
freeze(net.parameters())  # attacks perturb pixels, never weights

feedforward = HyperParams(mu=0.0, gamma=1.0, beta=0.0, alpha=0.0)
cfg = AttackConfig(method="bim", epsilons=(2 / 255, 16 / 255, 64 / 255),
                   steps=12, timesteps=1, seed=11, min_images=1, max_images=16)

# single image: which budget first flips it to its least-likely class?
image, label = val.images[0], int(val.labels[0])
logits = unroll(net, tt.tensor(image[None]), feedforward, T=0).logits[-1]
target = int(logits.data[0].argmin())
print(f"label={label}  least-likely target={target}")
for eps in cfg.epsilons:
    out = bim_attack(net, feedforward, image, label, target, eps, cfg)
    print(f"eps={eps * 255:5.1f}/255  success={out.success}  "
          f"predicted={out.predicted}")

summary = median_min_perturbation(net, feedforward, val, cfg)
print(f"\nsweep over {summary.n_eligible} correctly-classified images "
      f"({summary.n_skipped} skipped):")
print(f"  median min-perturbation: {summary.median * 255:.1f}/255")
for eps, rate in zip(summary.epsilons, summary.success_rate):
    print(f"  eps={eps * 255:5.1f}/255  success rate {rate:.2f}")

# the same budget means less when recurrence terms dilute the gradient path
mixed = HyperParams(mu=0.2, gamma=0.5, beta=0.3, alpha=0.0)
cfg_t = AttackConfig(method="bim", epsilons=cfg.epsilons, steps=12,
                     timesteps=4, seed=11, min_images=1, max_images=16)
m_ff = median_min_perturbation(net, feedforward, val, cfg_t)
m_pc = median_min_perturbation(net, mixed, val, cfg_t)
print(f"\nmedian budget, feedforward dynamics: {m_ff.median * 255:.1f}/255")
print(f"median budget, mixed dynamics:       {m_pc.median * 255:.1f}/255")
