"""Network assembly, unrolled dynamics against a straight-line oracle, PCW1 files."""

import numpy as np
import pytest

from oracles import naive_conv2d, naive_conv_transpose2d, naive_mse, naive_upsample2x, straight_line_unroll
from pcdyn import tensor as T
from pcdyn.hyperparams import HyperParams
from pcdyn.network import (
    BASELINE_VARIANTS,
    Head,
    PCNet,
    build_baseline,
    build_shallow,
    decoder_receptive_field,
    load_weights,
    load_weights_into,
    save_weights,
    unroll,
)
from pcdyn.pcoder import ConvReluPool, Decoder, PCoder


# ------------------------------------------------------------------ toy network


def make_toy_net(seed: int):
    """2 PCoders on (2, 8, 8) inputs, float32, plus float64 specs for the oracle."""
    rng = np.random.default_rng(seed)

    def conv_w(cout, cin, k):
        return (rng.standard_normal((cout, cin, k, k)) * 0.4).astype(np.float32)

    specs = []
    pcoders = []
    chans = (2, 3, 4)
    spatial = (8, 4, 2)
    for i in range(2):
        wff = conv_w(chans[i + 1], chans[i], 3)
        bff = (rng.standard_normal(chans[i + 1]) * 0.1).astype(np.float32)
        wfb = conv_w(chans[i + 1], chans[i], 3)
        bfb = (rng.standard_normal(chans[i]) * 0.1).astype(np.float32)
        K = chans[i] * spatial[i] * spatial[i]
        C = decoder_receptive_field(3, chans[i])
        pcoders.append(PCoder(
            ConvReluPool(T.tensor(wff, requires_grad=True), T.tensor(bff, requires_grad=True),
                         padding=1, pool=True),
            Decoder(T.tensor(wfb, requires_grad=True), T.tensor(bfb, requires_grad=True)),
            K=K, C=C,
        ))
        specs.append({"wff": wff.astype(np.float64), "bff": bff.astype(np.float64),
                      "pad": 1, "pool": True,
                      "wfb": wfb.astype(np.float64), "bfb": bfb.astype(np.float64), "C": C})

    flat = chans[2] * spatial[2] * spatial[2]
    w1 = (rng.standard_normal((flat, 8)) * 0.3).astype(np.float32)
    b1 = (rng.standard_normal(8) * 0.05).astype(np.float32)
    w2 = (rng.standard_normal((8, 5)) * 0.3).astype(np.float32)
    b2 = (rng.standard_normal(5) * 0.05).astype(np.float32)
    head = Head(*(T.tensor(a, requires_grad=True) for a in (w1, b1, w2, b2)))
    net = PCNet(pcoders, head, input_shape=(2, 8, 8))
    head_f64 = tuple(a.astype(np.float64) for a in (w1, b1, w2, b2))
    return net, specs, head_f64


# ----------------------------------------------------------------- param counts


def test_forward_param_count_matches_arithmetic():
    net = build_shallow(np.random.default_rng(0))
    convs = 12 * 3 * 25 + 12 + 18 * 12 * 25 + 18 + 24 * 18 * 25 + 24
    head = 384 * 120 + 120 + 120 * 10 + 10
    assert net.forward_param_count() == convs + head == 64564
    decoders = 3 * 12 * 9 + 3 + 12 * 18 * 9 + 12 + 18 * 24 * 9 + 18
    assert sum(p.size for p in net.parameters()) == 64564 + decoders == 70753


def test_baseline_param_counts_each_exceed_forward_path():
    expected = {
        "same": 64564,
        "kernel": (12 * 3 * 49 + 12) + (18 * 12 * 49 + 18) + (24 * 18 * 49 + 24) + 47410,
        "feat": (16 * 3 * 25 + 16) + (24 * 16 * 25 + 24) + (32 * 24 * 25 + 32)
                + (512 * 120 + 120 + 1210),
        "deep": 64564 + 24 * 24 * 25 + 24,
    }
    assert expected["kernel"] == 80980
    assert expected["feat"] == 92842
    assert expected["deep"] == 78988
    for variant in BASELINE_VARIANTS:
        net = build_baseline(variant, np.random.default_rng(0))
        assert net.forward_param_count() == expected[variant]
        if variant != "same":
            assert net.forward_param_count() > 64564


def test_unknown_baseline_variant_rejected():
    with pytest.raises(ValueError):
        build_baseline("wider", np.random.default_rng(0))


def test_unknown_hp_mode_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        build_shallow(rng, mode="global")


# ----------------------------------------------------------- build determinism


def test_same_seed_builds_identical_weights():
    a = build_shallow(np.random.default_rng(99))
    b = build_shallow(np.random.default_rng(99))
    for name, pa in a.named_parameters().items():
        assert np.array_equal(pa.data, b.named_parameters()[name].data), name
    c = build_shallow(np.random.default_rng(100))
    assert not np.array_equal(a.pcoders[0].ff.weight.data, c.pcoders[0].ff.weight.data)


def test_build_weights_are_float32_with_zero_biases():
    net = build_shallow(np.random.default_rng(3))
    for name, p in net.named_parameters().items():
        assert p.data.dtype == np.float32, name
        if name.endswith(".bias"):
            assert not p.data.any(), name


# ------------------------------------------------------- construction validation


def test_mismatched_decoder_channels_rejected():
    rng = np.random.default_rng(1)
    wff = T.tensor(rng.standard_normal((3, 2, 3, 3)).astype(np.float32), requires_grad=True)
    # decoder predicts 3 channels but the target below has 2
    wfb = T.tensor(rng.standard_normal((3, 3, 3, 3)).astype(np.float32), requires_grad=True)
    pc = PCoder(
        ConvReluPool(wff, T.tensor(np.zeros(3, dtype=np.float32)), padding=1, pool=True),
        Decoder(wfb, T.tensor(np.zeros(3, dtype=np.float32))),
        K=128, C=108,
    )
    head = Head(T.tensor(np.zeros((48, 4), dtype=np.float32)), T.tensor(np.zeros(4, dtype=np.float32)),
                T.tensor(np.zeros((4, 2), dtype=np.float32)), T.tensor(np.zeros(2, dtype=np.float32)))
    with pytest.raises(T.ShapeError):
        PCNet([pc], head, input_shape=(2, 8, 8))


def test_wrong_k_rejected():
    rng = np.random.default_rng(2)
    wff = T.tensor(rng.standard_normal((3, 2, 3, 3)).astype(np.float32), requires_grad=True)
    wfb = T.tensor(rng.standard_normal((3, 2, 3, 3)).astype(np.float32), requires_grad=True)
    pc = PCoder(
        ConvReluPool(wff, T.tensor(np.zeros(3, dtype=np.float32)), padding=1, pool=True),
        Decoder(wfb, T.tensor(np.zeros(2, dtype=np.float32))),
        K=64, C=72,  # target (2, 8, 8) has 128 elements
    )
    head = Head(T.tensor(np.zeros((48, 4), dtype=np.float32)), T.tensor(np.zeros(4, dtype=np.float32)),
                T.tensor(np.zeros((4, 2), dtype=np.float32)), T.tensor(np.zeros(2, dtype=np.float32)))
    with pytest.raises(ValueError):
        PCNet([pc], head, input_shape=(2, 8, 8))


# ------------------------------------------------------------------- unrolling


def toy_images(seed: int, n: int = 2):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n, 2, 8, 8)).astype(np.float32)


def test_unroll_t0_is_the_feedforward_pass():
    net, _, _ = make_toy_net(0)
    x = T.tensor(toy_images(10))
    out = unroll(net, x, HyperParams(0.3, 0.4, 0.3, 0.1), T=0)
    assert len(out.logits) == 1
    assert np.array_equal(out.logits[0].data, net.forward_logits(x).data)


def test_unroll_feedforward_only_hp_is_stationary():
    # gamma = 1 reduces every sweep to the plain forward pass
    net = build_shallow(np.random.default_rng(7))
    rng = np.random.default_rng(8)
    x = T.tensor(rng.uniform(0, 1, size=(2, 3, 32, 32)).astype(np.float32))
    out = unroll(net, x, HyperParams(0.0, 1.0, 0.0, 0.0), T=4)
    for t in range(1, 5):
        assert np.array_equal(out.logits[t].data, out.logits[0].data), t


def test_unroll_matches_straight_line_oracle():
    for seed in range(10):
        net, specs, head64 = make_toy_net(seed)
        x = toy_images(100 + seed)
        rng = np.random.default_rng(200 + seed)
        hps = []
        for _ in range(2):
            triple = rng.uniform(0.05, 1.0, 3)
            triple /= triple.sum()
            hps.append((float(triple[0]), float(triple[1]), float(triple[2]),
                        float(rng.uniform(0.0, 0.5))))
        expect = straight_line_unroll(specs, head64, x.astype(np.float64), hps, T=3)
        got = unroll(net, T.tensor(x), [HyperParams(*h) for h in hps], T=3)
        assert len(got.logits) == 4
        for t in range(4):
            assert np.allclose(got.logits[t].data, expect[t], atol=1e-5), (seed, t)


def test_unroll_is_deterministic():
    net, _, _ = make_toy_net(4)
    x = T.tensor(toy_images(11))
    hp = HyperParams(0.3, 0.4, 0.3, 0.2)
    a = unroll(net, x, hp, T=3)
    b = unroll(net, x, hp, T=3)
    for la, lb in zip(a.logits, b.logits):
        assert np.array_equal(la.data, lb.data)


def test_unroll_records_consistent_epsilons_and_states():
    net, specs, _ = make_toy_net(5)
    x = toy_images(12)
    out = unroll(net, T.tensor(x), HyperParams(0.25, 0.35, 0.4, 0.3), T=3,
                 record_epsilons=True, record_states=True)
    assert len(out.epsilons) == 4 and len(out.states) == 4
    for t in range(4):
        for i, spec in enumerate(specs):
            state = out.states[t][i].astype(np.float64)
            pred = naive_conv_transpose2d(naive_upsample2x(state), spec["wfb"], spec["bfb"],
                                          stride=1, padding=1)
            target = x.astype(np.float64) if i == 0 else out.states[t][i - 1].astype(np.float64)
            assert abs(out.epsilons[t][i] - naive_mse(pred, target)) < 1e-5, (t, i)


def test_unroll_epsilon_shrinks_with_error_correction():
    # a small alpha with pure memory descends the bottom prediction error
    # (too large a step diverges, as for any quadratic)
    net, _, _ = make_toy_net(6)
    x = T.tensor(toy_images(13))
    out = unroll(net, x, HyperParams(1.0, 0.0, 0.0, 0.05), T=5, record_epsilons=True)
    assert out.epsilons[5][0] < out.epsilons[0][0]


def test_unroll_hp_argument_forms():
    net, _, _ = make_toy_net(7)
    x = T.tensor(toy_images(14))
    shared = unroll(net, x, HyperParams(0.3, 0.4, 0.3, 0.1), T=2)
    as_list = unroll(net, x, [HyperParams(0.3, 0.4, 0.3, 0.1)] * 2, T=2)
    as_tuple = unroll(net, x, (0.3, 0.4, 0.3, 0.1), T=2)
    for a, b, c in zip(shared.logits, as_list.logits, as_tuple.logits):
        assert np.array_equal(a.data, b.data)
        assert np.array_equal(a.data, c.data)
    with pytest.raises(ValueError):
        unroll(net, x, [HyperParams(0.3, 0.4, 0.3, 0.1)] * 3, T=1)
    with pytest.raises(ValueError):
        unroll(net, x, (0.3, 0.4, 0.3), T=1)
    with pytest.raises(ValueError):
        unroll(net, x, HyperParams(0.3, 0.4, 0.3, 0.1), T=-1)


def test_unroll_gradients_flow_to_feedback_weights():
    net, _, _ = make_toy_net(8)
    x = T.tensor(toy_images(15))
    with T.Tape() as tape:
        out = unroll(net, x, HyperParams(0.3, 0.3, 0.4, 0.2), T=2)
        loss = T.mean_all(out.logits[-1])
    tape.backward(loss)
    for p in net.fb_parameters():
        if p.shape:  # decoder weights feed both beta and alpha terms
            assert p.grad is not None


def test_unroll_detached_error_gradient_still_runs():
    net, _, _ = make_toy_net(9)
    x = T.tensor(toy_images(16))
    out = unroll(net, x, HyperParams(0.3, 0.3, 0.4, 0.2), T=2, detach_error_gradient=True)
    assert len(out.logits) == 3
    assert np.isfinite(out.logits[-1].data).all()


# ------------------------------------------------------------------ PCW1 files


def test_pcw1_round_trip_is_bitwise(tmp_path):
    net = build_shallow(np.random.default_rng(20))
    path = str(tmp_path / "net.pcw")
    save_weights(path, net)
    loaded = load_weights(path)
    named = net.named_parameters()
    assert set(loaded) == set(named)
    for name, arr in loaded.items():
        assert arr.tobytes() == named[name].data.tobytes(), name


def test_pcw1_save_is_byte_deterministic(tmp_path):
    net = build_shallow(np.random.default_rng(21))
    p1, p2 = str(tmp_path / "a.pcw"), str(tmp_path / "b.pcw")
    save_weights(p1, net)
    save_weights(p2, net)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_pcw1_load_into_restores_weights(tmp_path):
    net = build_shallow(np.random.default_rng(22))
    path = str(tmp_path / "net.pcw")
    save_weights(path, net)
    original = {k: v.data.copy() for k, v in net.named_parameters().items()}
    for p in net.parameters():
        p.data = p.data + 1.0
    load_weights_into(net, path)
    for name, p in net.named_parameters().items():
        assert np.array_equal(p.data, original[name]), name


def test_pcw1_rejects_bad_magic(tmp_path):
    path = str(tmp_path / "bad.pcw")
    with open(path, "wb") as f:
        f.write(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        load_weights(path)


def test_pcw1_rejects_trailing_bytes(tmp_path):
    net = build_shallow(np.random.default_rng(23))
    path = str(tmp_path / "net.pcw")
    save_weights(path, net)
    with open(path, "ab") as f:
        f.write(b"\x00")
    with pytest.raises(ValueError):
        load_weights(path)


def test_pcw1_rejects_name_mismatch(tmp_path):
    net = build_shallow(np.random.default_rng(24))
    path = str(tmp_path / "weird.pcw")
    named = dict(net.named_parameters())
    named["extra.weight"] = named.pop("head.fc2.bias")
    save_weights(path, named)
    with pytest.raises(ValueError) as err:
        load_weights_into(net, path)
    assert "head.fc2.bias" in str(err.value)
    assert "extra.weight" in str(err.value)


def test_pcw1_rejects_shape_mismatch(tmp_path):
    net = build_shallow(np.random.default_rng(25))
    path = str(tmp_path / "reshaped.pcw")
    named = {k: v for k, v in net.named_parameters().items()}
    named["head.fc2.bias"] = T.tensor(np.zeros(11, dtype=np.float32))
    save_weights(path, named)
    with pytest.raises(T.ShapeError):
        load_weights_into(net, path)


def test_pcw1_rejects_float64(tmp_path):
    path = str(tmp_path / "f64.pcw")
    with pytest.raises(TypeError):
        save_weights(path, {"w": T.tensor(np.zeros(3, dtype=np.float64))})


def test_pcw1_baseline_round_trip(tmp_path):
    net = build_baseline("deep", np.random.default_rng(26))
    path = str(tmp_path / "deep.pcw")
    save_weights(path, net)
    loaded = load_weights(path)
    assert set(loaded) == set(net.named_parameters())
