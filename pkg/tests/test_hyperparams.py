"""Constraint map, uniform initialization, ablation masks, and the tracked variant."""

import math

import numpy as np
import pytest

from pcdyn.gradcheck import max_relative_error
from pcdyn.hyperparams import (
    AuxParams,
    HPMask,
    HyperParams,
    TrainableHyperParams,
    apply_mask,
    constrain,
    init_uniform,
)
from pcdyn.tensor import Tape, add, mul


def test_constrain_symmetric_auxes_give_thirds():
    hp = constrain(AuxParams(0.0, 0.0, 0.0, 0.5))
    assert abs(hp.mu - 1 / 3) < 1e-12
    assert abs(hp.gamma - 1 / 3) < 1e-12
    assert abs(hp.beta - 1 / 3) < 1e-12
    assert hp.alpha == 0.5


def test_constrain_matches_direct_formula():
    # independent evaluation of the sigmoid-normalized map
    s = lambda x: 1.0 / (1.0 + math.exp(-x))
    hp = constrain(AuxParams(10.0, -10.0, -10.0, 0.0))
    expect_mu = s(10) / (s(10) + 2 * s(-10))
    assert abs(hp.mu - expect_mu) < 1e-12
    assert abs(hp.mu - 0.99991) < 1e-4


def test_constrain_sum_is_one_for_random_auxes():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = AuxParams(*rng.normal(0, 4, size=3), float(rng.uniform()))
        hp = constrain(a)
        assert abs(hp.mu + hp.gamma + hp.beta - 1.0) < 1e-12
        assert 0 <= hp.mu <= 1 and 0 <= hp.gamma <= 1 and 0 <= hp.beta <= 1


def test_constrain_clamps_negative_alpha():
    assert constrain(AuxParams(0, 0, 0, -2.0)).alpha == 0.0


def test_each_output_increasing_in_own_aux():
    rng = np.random.default_rng(1)
    for _ in range(50):
        base = rng.normal(0, 2, size=3)
        hp0 = constrain(AuxParams(*base, 0.0))
        bumped = constrain(AuxParams(base[0] + 0.1, base[1], base[2], 0.0))
        assert bumped.mu > hp0.mu
        bumped = constrain(AuxParams(base[0], base[1] + 0.1, base[2], 0.0))
        assert bumped.gamma > hp0.gamma


def test_init_uniform_reproducible_per_seed():
    a = init_uniform(np.random.default_rng(99))
    b = init_uniform(np.random.default_rng(99))
    assert a == b


def test_init_uniform_alpha_mean_monte_carlo():
    rng = np.random.default_rng(7)
    alphas = [init_uniform(rng).alpha_raw for _ in range(10_000)]
    assert 0.48 <= float(np.mean(alphas)) <= 0.52


def test_init_uniform_pre_normalization_draws_are_uniform():
    # sigmoid(aux) should reproduce the underlying uniform draws
    rng = np.random.default_rng(11)
    s = lambda x: 1.0 / (1.0 + math.exp(-x))
    vals = [s(init_uniform(rng).mu_aux) for _ in range(10_000)]
    assert 0.48 <= float(np.mean(vals)) <= 0.52
    assert 0.0 <= min(vals) and max(vals) <= 1.0


def test_init_uniform_constrained_triple_sums_to_one():
    rng = np.random.default_rng(13)
    for _ in range(100):
        hp = constrain(init_uniform(rng))
        assert abs(hp.mu + hp.gamma + hp.beta - 1.0) < 1e-12


def test_apply_mask_zero_beta_renormalizes():
    hp = apply_mask(HyperParams(1 / 3, 1 / 3, 1 / 3, 0.7), HPMask(zero_beta=True))
    assert abs(hp.mu - 0.5) < 1e-12
    assert abs(hp.gamma - 0.5) < 1e-12
    assert hp.beta == 0.0
    assert hp.alpha == 0.7


def test_apply_mask_zero_alpha():
    hp = apply_mask(HyperParams(0.2, 0.3, 0.5, 0.9), HPMask(zero_alpha=True))
    assert hp.alpha == 0.0
    assert (hp.mu, hp.gamma, hp.beta) == (0.2, 0.3, 0.5)


def test_apply_mask_empty_is_identity():
    hp0 = HyperParams(0.2, 0.3, 0.5, 0.9)
    assert apply_mask(hp0, HPMask()) == hp0


def test_apply_mask_beta_only_model_splits_evenly():
    hp = apply_mask(HyperParams(0.0, 0.0, 1.0, 0.1), HPMask(zero_beta=True))
    assert (hp.mu, hp.gamma, hp.beta) == (0.5, 0.5, 0.0)


def test_invalid_hyperparams_rejected():
    with pytest.raises(ValueError):
        HyperParams(0.5, 0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        HyperParams(1 / 3, 1 / 3, 1 / 3, -0.1)
    with pytest.raises(ValueError):
        HyperParams(1.5, -0.5, 0.0, 0.0)


def test_trainable_effective_matches_float_constrain():
    aux = AuxParams(0.3, -0.8, 1.2, 0.4)
    thp = TrainableHyperParams(aux, dtype=np.float64)
    mu, gamma, beta, alpha = thp.effective()
    hp = constrain(aux)
    assert abs(mu.item() - hp.mu) < 1e-12
    assert abs(gamma.item() - hp.gamma) < 1e-12
    assert abs(beta.item() - hp.beta) < 1e-12
    assert abs(alpha.item() - hp.alpha) < 1e-12
    assert abs(mu.item() + gamma.item() + beta.item() - 1.0) < 1e-12


def test_trainable_effective_gradients_match_fd():
    thp = TrainableHyperParams(AuxParams(0.2, -0.4, 0.9, 0.6), dtype=np.float64)

    def f():
        mu, gamma, beta, alpha = thp.effective()
        out = add(add(mul(mu, 1.0), mul(gamma, 2.0)), add(mul(beta, 3.0), mul(alpha, 0.5)))
        return out

    err = max_relative_error(f, thp.parameters(), h=1e-6)
    assert err < 1e-6


def test_masked_aux_receives_no_gradient():
    thp = TrainableHyperParams(AuxParams(0.2, -0.4, 0.9, 0.6), dtype=np.float64)
    with Tape() as tape:
        mu, gamma, beta, alpha = thp.effective(HPMask(zero_beta=True, zero_alpha=True))
        loss = add(add(mu, gamma), add(beta, alpha))
    tape.backward(loss)
    assert thp.beta_aux.grad is None
    assert thp.alpha_raw.grad is None
    assert thp.mu_aux.grad is not None
    assert beta.item() == 0.0
    assert alpha.item() == 0.0


def test_masked_effective_renormalizes_pair():
    thp = TrainableHyperParams(AuxParams(0.0, 0.0, 5.0, 0.6), dtype=np.float64)
    mu, gamma, beta, _ = thp.effective(HPMask(zero_beta=True))
    assert abs(mu.item() - 0.5) < 1e-12
    assert abs(gamma.item() - 0.5) < 1e-12
    assert beta.item() == 0.0


def test_project_clamps_alpha():
    thp = TrainableHyperParams(AuxParams(0.0, 0.0, 0.0, 0.5))
    thp.alpha_raw.data = np.asarray(-0.25, dtype=thp.alpha_raw.dtype)
    thp.project()
    assert float(thp.alpha_raw.data) == 0.0


def test_snapshot_reflects_mask():
    thp = TrainableHyperParams(AuxParams(0.0, 0.0, 0.0, 0.5))
    hp = thp.snapshot(HPMask(zero_beta=True))
    assert hp.beta == 0.0
    assert abs(hp.mu - 0.5) < 1e-6
