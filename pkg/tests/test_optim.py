"""Optimizer update rules against hand recurrences and a straight-line oracle."""

import numpy as np
import pytest

from pcdyn.optim import SGD, Adam
from pcdyn.tensor import tensor


def param(value, dtype=np.float64):
    return tensor(np.asarray(value, dtype=dtype))


def test_sgd_vanilla_step():
    p = param(0.0)
    opt = SGD([p], lr=0.1)
    p.grad = np.asarray(1.0)
    opt.step()
    assert abs(float(p.data) - (-0.1)) < 1e-12


def test_sgd_momentum_two_steps():
    # v <- 0.9 v + g with g = 1: steps are -0.1 then -0.19, total -0.29
    p = param(0.0)
    opt = SGD([p], lr=0.1, momentum=0.9)
    for _ in range(2):
        p.grad = np.asarray(1.0)
        opt.step()
    assert abs(float(p.data) - (-0.29)) < 1e-12


def test_sgd_weight_decay_matches_hand_update():
    p = param(2.0)
    opt = SGD([p], lr=0.1, weight_decay=0.5)
    p.grad = np.asarray(1.0)
    opt.step()
    # effective grad = 1 + 0.5 * 2 = 2
    assert abs(float(p.data) - (2.0 - 0.1 * 2.0)) < 1e-12


def test_sgd_skips_frozen_params():
    p, q = param(1.0), param(1.0)
    opt = SGD([p, q], lr=0.1)
    p.grad = np.asarray(1.0)
    opt.step()
    assert float(q.data) == 1.0
    assert float(p.data) != 1.0


def test_sgd_rejects_bad_settings():
    with pytest.raises(ValueError):
        SGD([param(0.0)], lr=0.0)
    with pytest.raises(ValueError):
        SGD([param(0.0)], lr=0.1, momentum=-0.1)


def straight_line_adam(p0, grads, lr, b1, b2, eps, wd):
    p = np.array(p0, dtype=np.float64)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        g = g + wd * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        p = p - lr * mh / (np.sqrt(vh) + eps)
    return p


def test_adam_matches_straight_line_oracle():
    rng = np.random.default_rng(0)
    p0 = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(4)]
    p = param(p0.copy())
    opt = Adam([p], lr=0.02, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.1)
    for g in grads:
        p.grad = g.copy()
        opt.step()
    expect = straight_line_adam(p0, grads, lr=0.02, b1=0.9, b2=0.999, eps=1e-8, wd=0.1)
    assert np.allclose(p.data, expect, atol=1e-12)


def test_adam_first_step_is_signed_lr():
    p = param(np.array([0.0, 0.0]))
    opt = Adam([p], lr=0.01)
    p.grad = np.array([5.0, -0.3])
    opt.step()
    assert np.allclose(p.data, [-0.01, 0.01], atol=1e-5)


def test_adam_param_groups_override_lr():
    a, b = param(0.0), param(0.0)
    opt = Adam([{"params": [a], "lr": 0.1}, {"params": [b]}], lr=0.001)
    a.grad = np.asarray(1.0)
    b.grad = np.asarray(1.0)
    opt.step()
    assert abs(float(a.data) + 0.1) < 1e-6
    assert abs(float(b.data) + 0.001) < 1e-6


def test_adam_rejects_bad_settings():
    with pytest.raises(ValueError):
        Adam([param(0.0)], lr=-1.0)
    with pytest.raises(ValueError):
        Adam([param(0.0)], betas=(0.9, 1.0))


def test_zero_grad_clears_all_groups():
    a, b = param(0.0), param(0.0)
    opt = SGD([{"params": [a]}, {"params": [b]}], lr=0.1)
    a.grad = np.asarray(1.0)
    b.grad = np.asarray(1.0)
    opt.zero_grad()
    assert a.grad is None and b.grad is None
