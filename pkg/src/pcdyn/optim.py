"""Gradient-descent optimizers over lists of Tensors.

Both optimizers read ``Tensor.grad`` and update ``Tensor.data`` in place.
Parameters whose ``grad`` is None are skipped, so frozen tensors can stay in
the parameter list.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["SGD", "Adam"]


def _as_groups(params, defaults: dict) -> list:
    params = list(params)
    if params and isinstance(params[0], dict):
        groups = []
        for raw in params:
            g = dict(defaults)
            g.update(raw)
            g["params"] = list(raw["params"])
            groups.append(g)
        return groups
    return [dict(defaults, params=params)]


class SGD:
    """Stochastic gradient descent with classic momentum.

    v <- momentum * v + (grad + weight_decay * param)
    param <- param - lr * v
    """

    def __init__(self, params, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"SGD: lr must be positive, got {lr}")
        if momentum < 0:
            raise ValueError(f"SGD: momentum must be non-negative, got {momentum}")
        self.groups = _as_groups(params, {"lr": lr, "momentum": momentum, "weight_decay": weight_decay})
        self._velocity: dict = {}

    def zero_grad(self) -> None:
        for group in self.groups:
            for p in group["params"]:
                p.grad = None

    def step(self) -> None:
        for gi, group in enumerate(self.groups):
            lr, mom, wd = group["lr"], group["momentum"], group["weight_decay"]
            for pi, p in enumerate(group["params"]):
                if p.grad is None:
                    continue
                g = p.grad
                if wd:
                    g = g + wd * p.data
                if mom:
                    v = self._velocity.get((gi, pi))
                    if v is None:
                        v = np.zeros_like(p.data)
                        self._velocity[(gi, pi)] = v
                    v *= mom
                    v += g
                    g = v
                p.data -= lr * g


class Adam:
    """Adam with bias correction; weight decay is added to the gradient (L2 style).

    Accepts either a flat list of Tensors or parameter groups, each a dict
    with a ``params`` list and optional per-group overrides of lr,
    weight_decay, betas, or eps.
    """

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"Adam: lr must be positive, got {lr}")
        b1, b2 = betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"Adam: betas must lie in [0, 1), got {betas}")
        self.groups = _as_groups(
            params, {"lr": lr, "betas": (b1, b2), "eps": eps, "weight_decay": weight_decay}
        )
        self._state: dict = {}

    def zero_grad(self) -> None:
        for group in self.groups:
            for p in group["params"]:
                p.grad = None

    def step(self) -> None:
        for gi, group in enumerate(self.groups):
            lr, (b1, b2), eps, wd = group["lr"], group["betas"], group["eps"], group["weight_decay"]
            for pi, p in enumerate(group["params"]):
                if p.grad is None:
                    continue
                g = p.grad
                if wd:
                    g = g + wd * p.data
                st = self._state.get((gi, pi))
                if st is None:
                    st = {"t": 0, "m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
                    self._state[(gi, pi)] = st
                st["t"] += 1
                t, m, v = st["t"], st["m"], st["v"]
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * (g * g)
                m_hat = m / (1 - b1 ** t)
                v_hat = v / (1 - b2 ** t)
                p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
