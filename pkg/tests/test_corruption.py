"""Noise generation: fixed level maps, determinism, and distribution checks."""

import numpy as np
import pytest

from pcdyn import tensor as T
from pcdyn.corruption import LEVEL_PARAMS, NoiseSpec, corrupt, noise_grid


def images(seed, n=4, c=3, h=8, w=8):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n, c, h, w)).astype(np.float32)


# ---------------------------------------------------------------------- specs


def test_level_param_map_is_frozen():
    assert LEVEL_PARAMS["gaussian"] == (0.0, 0.2, 0.4, 0.8)
    assert LEVEL_PARAMS["salt_pepper"] == (0.0, 0.02, 0.04, 0.08)
    assert NoiseSpec("gaussian", 2).param == 0.4
    assert NoiseSpec("salt_pepper", 3).param == 0.08
    assert NoiseSpec("gaussian", 0).param == 0.0
    assert NoiseSpec("clean", 0).param == 0.0


def test_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("speckle", 1)
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", 4)
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", -1)
    with pytest.raises(ValueError):
        NoiseSpec("clean", 1)
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", 1, seed=-3)


def test_noise_grid_has_clean_first():
    grid = noise_grid("gaussian", seed=5)
    assert [s.level for s in grid] == [0, 1, 2, 3]
    assert grid[0].is_clean and not grid[1].is_clean
    assert all(s.seed == 5 for s in grid)
    with pytest.raises(ValueError):
        noise_grid("clean")


# ------------------------------------------------------------------- identity


def test_clean_is_identity_object():
    x = images(0)
    assert corrupt(x, NoiseSpec("clean", 0)) is x
    assert corrupt(x, NoiseSpec("gaussian", 0)) is x
    assert corrupt(x, NoiseSpec("salt_pepper", 0)) is x


def test_tensor_in_tensor_out():
    x = T.tensor(images(1))
    out = corrupt(x, NoiseSpec("gaussian", 1, seed=7))
    assert isinstance(out, T.Tensor)
    assert out.data.dtype == np.float32
    arr_out = corrupt(images(1), NoiseSpec("gaussian", 1, seed=7))
    assert isinstance(arr_out, np.ndarray)
    assert np.array_equal(out.data, arr_out)


def test_rejects_out_of_range_and_bad_shape():
    x = images(2) + 0.5  # exceeds 1
    with pytest.raises(ValueError):
        corrupt(x, NoiseSpec("gaussian", 1))
    with pytest.raises(ValueError):
        corrupt(np.zeros((3, 8, 8), dtype=np.float32), NoiseSpec("gaussian", 1))


# ------------------------------------------------------------------- gaussian


def test_gaussian_stays_in_range_and_changes_pixels():
    x = images(3)
    out = corrupt(x, NoiseSpec("gaussian", 3, seed=1))
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert not np.array_equal(out, x)
    assert out.shape == x.shape


def test_gaussian_determinism_and_seed_sensitivity():
    x = images(4)
    a = corrupt(x, NoiseSpec("gaussian", 2, seed=11))
    b = corrupt(x, NoiseSpec("gaussian", 2, seed=11))
    c = corrupt(x, NoiseSpec("gaussian", 2, seed=12))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_corruption_is_per_image_and_offset_aware():
    x = images(5, n=3)
    full = corrupt(x, NoiseSpec("gaussian", 2, seed=9))
    for i in range(3):
        single = corrupt(x[i:i + 1], NoiseSpec("gaussian", 2, seed=9), index_offset=i)
        assert np.array_equal(full[i], single[0]), i
    tail = corrupt(x[1:], NoiseSpec("gaussian", 2, seed=9), index_offset=1)
    assert np.array_equal(full[1:], tail)


def test_gaussian_clamped_std_monte_carlo():
    # sigma = 0.4 on a 0.5-constant image: clamping winsorizes the noise at
    # +-1.25 sigma, so the per-element std falls well below 0.4. Analytic
    # value: 0.4 * sqrt(E[clip(Z, -c, c)^2]) with c = 1.25, which is
    # (2 Phi(c) - 1) - 2 c phi(c) + 2 c^2 (1 - Phi(c)) inside the sqrt,
    # = 0.32551.
    n = 340  # 340 * 3 * 32 * 32 > 1e6 elements
    x = np.full((n, 3, 32, 32), 0.5, dtype=np.float32)
    out = corrupt(x, NoiseSpec("gaussian", 2, seed=0))
    std = out.astype(np.float64).std()
    assert 0.320 <= std <= 0.331, std
    assert std < 0.40  # clamping shrinks it below the nominal sigma
    # clamp boundaries are actually hit at this sigma
    assert (out == 0.0).any() and (out == 1.0).any()


# ---------------------------------------------------------------- salt_pepper


def test_salt_pepper_alters_exact_pixel_count_shared_across_channels():
    x = np.full((2, 3, 32, 32), 0.5, dtype=np.float32)
    for level, p in ((1, 0.02), (2, 0.04), (3, 0.08)):
        out = corrupt(x, NoiseSpec("salt_pepper", level, seed=3))
        expect_n = int(np.rint(p * 32 * 32))
        for i in range(2):
            changed = out[i] != 0.5
            # same pixel set in every channel
            assert np.array_equal(changed[0], changed[1])
            assert np.array_equal(changed[0], changed[2])
            assert changed[0].sum() == expect_n
            vals = out[i][:, changed[0]]
            assert set(np.unique(vals)) <= {0.0, 1.0}
            n_white = int((vals[0] == 1.0).sum())
            assert n_white == (expect_n + 1) // 2


def test_salt_pepper_determinism_and_range():
    x = images(6, h=32, w=32)
    a = corrupt(x, NoiseSpec("salt_pepper", 3, seed=21))
    b = corrupt(x, NoiseSpec("salt_pepper", 3, seed=21))
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    full = corrupt(x, NoiseSpec("salt_pepper", 2, seed=4))
    one = corrupt(x[2:3], NoiseSpec("salt_pepper", 2, seed=4), index_offset=2)
    assert np.array_equal(full[2], one[0])


def test_salt_pepper_positions_differ_across_images():
    x = np.full((2, 3, 32, 32), 0.5, dtype=np.float32)
    out = corrupt(x, NoiseSpec("salt_pepper", 3, seed=8))
    assert not np.array_equal(out[0] != 0.5, out[1] != 0.5)
