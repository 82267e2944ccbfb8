"""A tour of the tensor library: taped reverse-mode gradients from scratch.

Everything downstream (training, hyper-parameter search, attacks) rides on
this one mechanism: build float32 tensors, record operations on a tape, and
walk the tape backwards. No framework, just numpy under the hood.
"""

import numpy as np

from pcdyn import tensor as tt
from pcdyn.gradcheck import numerical_gradient
from pcdyn.tensor import Tape

rng = np.random.default_rng(0)

# Leaf tensors opt into gradients; everything they touch is recorded.
x = tt.tensor(rng.normal(size=(4, 3)).astype(np.float32), requires_grad=True)
w = tt.tensor(rng.normal(size=(3, 2)).astype(np.float32), requires_grad=True)
b = tt.tensor(np.zeros(2, dtype=np.float32), requires_grad=True)

with Tape() as tape:
    h = tt.relu(tt.dense(x, w, b))
    loss = tt.mse(h, tt.tensor(np.ones_like(h.data)))
tape.backward(loss)

print("loss:", loss.item())
print("dL/dw:\n", w.grad)

# The same derivative, measured the slow way: central finite differences.
target = tt.tensor(np.ones((4, 2), dtype=np.float32))

def loss_tensor():
    return tt.mse(tt.relu(tt.dense(x, w, b)), target)

fd = numerical_gradient(loss_tensor, w)  # perturbs w in place, one entry at a time
print("max |analytic - numerical|:", np.max(np.abs(w.grad.ravel() - fd)))

# Convolution and its exact adjoint share one weight array: the transposed
# convolution IS the gradient of conv2d with respect to its input.
img = tt.tensor(rng.normal(size=(1, 2, 8, 8)).astype(np.float32), requires_grad=True)
kern = tt.tensor(rng.normal(size=(3, 2, 3, 3)).astype(np.float32))
with Tape() as tape:
    y = tt.conv2d(img, kern, None, stride=1, padding=1)
    s = tt.mse(y, tt.tensor(np.zeros_like(y.data)))
tape.backward(s)
print("conv2d input-gradient shape:", img.grad.shape)

# Non-finite values fail loudly instead of propagating.
big = tt.tensor(np.full((2, 2), 1e30, dtype=np.float32))
try:
    with Tape():
        tt.dense(big, tt.tensor(np.full((2, 2), 1e30, dtype=np.float32)), None)
except tt.NumericalError as err:
    print("overflow raises:", type(err).__name__)
