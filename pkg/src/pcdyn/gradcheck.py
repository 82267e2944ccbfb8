"""Finite-difference verification of reverse-mode gradients.

``f`` is a zero-argument callable that rebuilds its computation from the
supplied parameter Tensors and returns a scalar Tensor. The analytic pass runs
``f`` under a fresh Tape; the numerical pass re-evaluates ``f`` with single
elements of each parameter nudged by ``h`` (central differences).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor

__all__ = ["numerical_gradient", "max_relative_error"]


def _default_h(dtype) -> float:
    return 1e-6 if dtype == np.float64 else 1e-2


def numerical_gradient(f, param: Tensor, h: float | None = None, indices=None) -> np.ndarray:
    """Central-difference d f / d param at the given flat indices (default: all)."""
    if h is None:
        h = _default_h(param.dtype)
    indices = list(range(param.size)) if indices is None else list(indices)
    out = np.empty(len(indices), dtype=np.float64)
    for k, i in enumerate(indices):
        # Index through unravel_index so writes land in param.data even when
        # its memory is not contiguous.
        mi = np.unravel_index(i, param.shape) if param.shape else ()
        keep = param.data[mi]
        param.data[mi] = keep + h
        up = f().item()
        param.data[mi] = keep - h
        down = f().item()
        param.data[mi] = keep
        out[k] = (up - down) / (2.0 * h)
    return out


def max_relative_error(f, params, h: float | None = None, samples: int | None = None,
                       seed: int = 0, floor: float | None = None) -> float:
    """Largest relative disagreement between taped and finite-difference gradients.

    Checks every element of every parameter, or ``samples`` random elements
    per parameter when given. The relative error of a pair (a, n) is
    |a - n| / max(|a|, |n|, floor). When ``floor`` is not given it is set per
    parameter to a small fraction of the largest analytic gradient magnitude:
    central differences carry absolute noise around eps * |f| / (2h), so
    elements far below the parameter's gradient scale cannot be certified in
    relative terms and are held to an absolute bar at that scale instead.
    """
    params = list(params)
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        if floor is None:
            base = 1e-9 if p.dtype == np.float64 else 1e-4
            fl = max(base, 5e-3 * float(np.abs(a).max()) if a.size else base)
        else:
            fl = floor
        size = p.data.size
        if samples is not None and samples < size:
            idx = rng.choice(size, size=samples, replace=False)
        else:
            idx = np.arange(size)
        num = numerical_gradient(f, p, h=h, indices=idx.tolist())
        af = a.reshape(-1)[idx].astype(np.float64)
        denom = np.maximum(np.maximum(np.abs(af), np.abs(num)), fl)
        err = float((np.abs(af - num) / denom).max()) if len(idx) else 0.0
        worst = max(worst, err)
    return worst
