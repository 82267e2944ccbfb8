"""The three-stage pipeline at toy scale: encoders, decoders, coefficients.

Stage 1 trains the forward path as an ordinary supervised classifier.
Stage 2 freezes it and trains each feedback decoder to reconstruct the layer
below from the layer above (purely unsupervised).
Stage 3 freezes all weights and searches only the four dynamics coefficients
with Adam under the simplex constraint, restarting from random points and
keeping the restart with the best validation accuracy at the final step.
"""

import numpy as np

from pcdyn.corruption import NoiseSpec
from pcdyn.data import load_dataset
from pcdyn.network import build_shallow
from pcdyn.training import (
    TrainConfig,
    freeze,
    train_feedback_unsupervised,
    train_feedforward,
    train_hyperparams,
)

train, val = load_dataset(768, 256, seed=7)
net = build_shallow(np.random.default_rng(7))

ff = train_feedforward(
    net, train, val, TrainConfig("ff_supervised", epochs=12, batch_size=32, seed=7))
print(f"stage 1  forward:   val accuracy {ff.final_val_accuracy:.3f}")

freeze(net.ff_parameters())  # stage 2 must not touch the encoders
fb = train_feedback_unsupervised(
    net, train, val, TrainConfig("fb_unsupervised", epochs=4, batch_size=32, seed=7))
recon = "  ".join(f"{r:.4f}" for r in fb.per_pcoder_recon)
print(f"stage 2  feedback:  reconstruction errors per PCoder  {recon}")

freeze(net.parameters())  # stage 3 moves coefficients only
hp = train_hyperparams(net, train, val, TrainConfig(
    "hp_only", epochs=2, batch_size=64, timesteps=3, restarts=3,
    lr=0.01, noise=NoiseSpec("gaussian", 2, seed=11), seed=7))
best = hp.hyperparams[0]
print(f"stage 3  dynamics:  best of {len(hp.restarts)} restarts (#{hp.best_restart})")
print(f"         mu={best.mu:.3f} gamma={best.gamma:.3f} beta={best.beta:.3f} "
      f"alpha={best.alpha:.4f}")
print(f"         simplex check: mu+gamma+beta = {best.mu + best.gamma + best.beta:.9f}")
print(f"         noisy val accuracy at final step: {hp.final_val_accuracy:.3f}")
for r in hp.restarts:
    print(f"         restart {r.restart}: val {r.val_accuracy:.3f}")
