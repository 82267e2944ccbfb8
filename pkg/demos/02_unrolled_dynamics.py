"""Watching the feedback dynamics run: states, predictions, errors over time.

Each PCoder keeps a state for its layer. After a plain feed-forward
initialization, every time-step blends four terms per state: memory (mu),
the fresh bottom-up drive (gamma), the top-down prediction from the layer
above (beta), and a descent step on the prediction error (alpha). The
coefficients live on a simplex: mu + gamma + beta = 1, alpha >= 0.
"""

import numpy as np

from pcdyn import tensor as tt
from pcdyn.data import load_dataset
from pcdyn.hyperparams import HyperParams
from pcdyn.network import build_shallow, unroll

train, _ = load_dataset(64, 8, seed=1)
net = build_shallow(np.random.default_rng(1))
images = tt.tensor(train.images[:16])

# gamma = 1 collapses the dynamics onto the plain forward pass: every step
# recomputes the bottom-up activation and nothing else contributes.
ff_only = HyperParams(mu=0.0, gamma=1.0, beta=0.0, alpha=0.0)
out = unroll(net, images, ff_only, T=4, record_epsilons=True)
ref = net.forward_logits(images)
drift = max(float(np.abs(lg.data - ref.data).max()) for lg in out.logits)
print(f"gamma=1 vs forward pass, max |diff| over t=0..4: {drift:.2e}")

# A mixed setting actually uses the feedback loop. The per-PCoder prediction
# errors are recorded at every step; with an untrained decoder they mostly
# wander, with alpha > 0 the states are nudged downhill on those errors.
mixed = HyperParams(mu=0.3, gamma=0.4, beta=0.3, alpha=0.02)
out = unroll(net, images, mixed, T=6, record_epsilons=True)
print("\nper-step prediction errors (one column per PCoder):")
for t, eps in enumerate(out.epsilons):
    print(f"  t={t}: " + "  ".join(f"{e:9.5f}" for e in eps))

# Hyper-parameters can differ per PCoder: pass a list, one entry per block.
per_block = [
    HyperParams(0.2, 0.5, 0.3, 0.01),
    HyperParams(0.4, 0.4, 0.2, 0.00),
    HyperParams(0.1, 0.9, 0.0, 0.05),  # topmost: beta is dropped anyway
]
out = unroll(net, images, per_block, T=3)
print("\nfinal-step logits shape with per-PCoder HPs:", out.logits[-1].shape)
