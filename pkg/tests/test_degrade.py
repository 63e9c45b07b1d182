import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlqegan.core import DatasetConfig, RunConfig, validate_config
from mlqegan.degrade import (
    SmokeParams,
    antialias_downsample,
    effective_stream_sizes,
    expand_to_effective_set,
    extract_patches,
    gaussian_blur,
    gaussian_kernel1d,
    make_pair_from_full,
    make_raw_pair,
    simulate_smoke,
    smoke_transmission,
    synth_texture_image,
    upsample_bicubic,
)
from mlqegan.metrics import rrmse

from conftest import random_pairs
from oracles import blur_loop, effective_counts_enumerate


def small_cfg(levels, base=4):
    return validate_config(RunConfig(levels=levels, dataset=DatasetConfig(base_h=base, base_w=base)))


def test_kernel_normalized_with_three_sigma_radius():
    k = gaussian_kernel1d(2.0)
    assert len(k) == 2 * 6 + 1
    assert k.sum() == pytest.approx(1.0, abs=1e-15)


def test_blur_matches_direct_convolution_oracle():
    rng = np.random.default_rng(3)
    img = rng.random((1, 12, 9))
    ours = gaussian_blur(img, 1.0)[0]
    ref = np.array(blur_loop(img[0].tolist(), 1.0))
    np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_impulse_brightness_conserved_before_subsampling():
    img = np.zeros((1, 16, 16))
    img[0, 7, 9] = 1.0
    blurred = np.array(blur_loop(img[0].tolist(), 1.0))
    assert abs(blurred.sum() - 1.0) < 1e-6
    assert abs(gaussian_blur(img, 1.0).sum() - 1.0) < 1e-6


@given(st.floats(0.0, 1.0), st.sampled_from([2, 4]), st.integers(1, 4))
def test_downsample_preserves_constants(value, factor, cells):
    img = np.full((3, factor * cells * 2, factor * cells), value)
    out = antialias_downsample(img, factor)
    assert out.shape == (3, cells * 2, cells)
    np.testing.assert_allclose(out, value, atol=1e-12)


def test_downsample_shapes_and_errors():
    assert antialias_downsample(np.zeros((3, 256, 256)), 4).shape == (3, 64, 64)
    with pytest.raises(ValueError):
        antialias_downsample(np.zeros((1, 10, 10)), 4)
    with pytest.raises(ValueError):
        antialias_downsample(np.zeros((1, 8, 8)), 1)


def test_pyramid_consistency_on_smooth_image():
    img = synth_texture_image(5, 128, 128)
    smooth = gaussian_blur(img, 2.0)
    direct = antialias_downsample(smooth, 4)
    twice = antialias_downsample(antialias_downsample(smooth, 2), 2)
    assert rrmse(twice, direct) < 0.02


def test_upsample_bicubic_shape_and_range():
    out = upsample_bicubic(np.random.default_rng(0).random((3, 8, 8)), 4)
    assert out.shape == (3, 32, 32)
    assert 0 <= out.min() and out.max() <= 1


def test_transmission_range():
    t = smoke_transmission(32, 32, SmokeParams(density_k=1.0, seed=7))
    assert np.all(t > 0) and np.all(t <= 1)


def test_smoke_on_gray_image_matches_closed_form():
    p = SmokeParams(airlight=1.0, density_k=1.0, seed=7)
    img = np.full((3, 32, 32), 0.5)
    out = simulate_smoke(img, p)
    t = smoke_transmission(32, 32, p)
    np.testing.assert_allclose(out, np.broadcast_to(t * 0.5 + (1 - t) * 1.0, out.shape), atol=1e-15)
    assert out.min() >= 0.5 and out.max() <= 1.0 and out.mean() > 0.5


def test_smoke_limits():
    img = np.random.default_rng(1).random((3, 16, 16))
    np.testing.assert_allclose(simulate_smoke(img, SmokeParams(density_k=1e-12)), img, atol=1e-10)
    np.testing.assert_allclose(simulate_smoke(img, SmokeParams(density_k=1e4, airlight=1.0)), 1.0, atol=1e-10)
    with pytest.raises(ValueError):
        simulate_smoke(img, SmokeParams(density_k=0.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 5.0))
def test_white_smoke_never_darkens(seed, k):
    img = np.random.default_rng(seed).random((3, 16, 16))
    out = simulate_smoke(img, SmokeParams(airlight=1.0, density_k=k, seed=seed))
    assert np.all(out >= img - 1e-15)


def test_smoke_is_deterministic():
    img = np.random.default_rng(1).random((3, 16, 16))
    p = SmokeParams(seed=11)
    assert np.array_equal(simulate_smoke(img, p), simulate_smoke(img, p))


def test_extract_patches_exhaustive_grid():
    img = np.arange(512 * 512, dtype=np.float64).reshape(1, 512, 512)
    patches = extract_patches(img, 128, 16, non_overlapping=True, seed=4)
    corners = sorted((int(p[0, 0, 0]) // 512, int(p[0, 0, 0]) % 512) for p in patches)
    assert corners == [(y, x) for y in range(0, 512, 128) for x in range(0, 512, 128)]
    with pytest.raises(ValueError):
        extract_patches(img, 128, 17, non_overlapping=True)
    with pytest.raises(ValueError):
        extract_patches(img, 600, 1)


def test_extract_patches_deterministic():
    img = np.random.default_rng(0).random((3, 64, 64))
    a = extract_patches(img, 16, 5, non_overlapping=False, seed=9)
    b = extract_patches(img, 16, 5, non_overlapping=False, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x.shape == (3, 16, 16) for x in a)


def test_make_raw_pair_shapes():
    cfg = validate_config(RunConfig(levels=2))
    assert make_raw_pair(np.zeros((3, 256, 256)), 3, cfg).low.shape == (3, 64, 64)
    assert make_raw_pair(np.zeros((3, 128, 128)), 2, cfg).low.shape == (3, 64, 64)
    const = make_raw_pair(np.full((3, 128, 128), 0.3), 2, cfg)
    np.testing.assert_allclose(const.low, 0.3, atol=1e-12)


def test_pair_from_full_shares_low_image_across_levels():
    cfg = validate_config(RunConfig(levels=2))
    full = synth_texture_image(2, 64, 64)
    a = make_pair_from_full(full, 2, cfg)
    b = make_pair_from_full(full, 3, cfg)
    assert np.array_equal(a.low, b.low)
    assert a.high.shape == (3, 32, 32) and b.high.shape == (3, 64, 64)


def test_expand_single_top_pair():
    cfg = small_cfg(2)
    [pair] = random_pairs(cfg, {3: 1})
    streams = expand_to_effective_set([pair], cfg)
    assert {m: len(v) for m, v in streams.items()} == {2: 1, 3: 1}
    low, t2 = streams[2][0]
    assert t2.shape[-1] == low.shape[-1] * 2
    assert streams[3][0][1] is pair.high


def test_expand_same_level_keeps_target_bitwise():
    cfg = small_cfg(2)
    [pair] = random_pairs(cfg, {2: 1})
    streams = expand_to_effective_set([pair], cfg)
    assert len(streams[3]) == 0
    assert np.array_equal(streams[2][0][1], pair.high)


def test_counting_example():
    assert effective_stream_sizes({2: 5000, 3: 50}, 2) == {2: 5050, 3: 50}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3).flatmap(lambda L: st.tuples(
    st.just(L), st.lists(st.integers(2, L + 1), max_size=8))))
def test_stream_sizes_match_enumeration(case):
    L, levels = case
    cfg = small_cfg(L, base=2)
    counts = {j: levels.count(j) for j in set(levels)}
    streams = expand_to_effective_set(random_pairs(cfg, counts), cfg)
    expected = effective_counts_enumerate(levels, L)
    assert {m: len(v) for m, v in streams.items()} == expected
    assert effective_stream_sizes(counts, L) == expected
    for m, items in streams.items():
        for low, target in items:
            assert target.shape[-2:] == tuple(d * cfg.resolution_scale(m) for d in low.shape[-2:])


def test_texture_deterministic_and_diverse():
    a = synth_texture_image(1, 64, 64)
    assert np.array_equal(a, synth_texture_image(1, 64, 64))
    assert rrmse(synth_texture_image(2, 64, 64), a) > 0.05
    assert a.shape == (3, 64, 64) and 0 <= a.min() and a.max() <= 1


def test_texture_has_fine_detail():
    img = synth_texture_image(3, 256, 256)
    round_trip = upsample_bicubic(antialias_downsample(img, 4), 4)
    assert rrmse(round_trip, img) > 0.02
