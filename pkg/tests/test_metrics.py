import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tmqi_oracle
from hdrenhance.metrics import discrete_entropy, histogram_equalize, tmqi
from hdrenhance.metrics.quality import equalization_map, gray_levels
from hdrenhance.metrics.tmqi import block_std_mean, combine, gaussian_window, statistical_naturalness


def gray_image(levels):
    levels = np.asarray(levels, np.uint8)
    return np.repeat(levels[..., None], 3, axis=-1)


def test_entropy_constant_is_zero():
    assert discrete_entropy(gray_image(np.full((9, 7), 77))) == 0.0


def test_entropy_two_levels_is_one_bit():
    assert discrete_entropy(gray_image([[0, 255], [255, 0]])) == 1.0


def test_entropy_uniform_histogram_is_eight_bits():
    assert discrete_entropy(gray_image(np.arange(512).reshape(16, 32) % 256)) == 8.0


def test_gray_levels_of_gray_image():
    img = gray_image(np.arange(256).reshape(16, 16))
    np.testing.assert_array_equal(gray_levels(img), np.arange(256).reshape(16, 16))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_entropy_bounds_and_permutation(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (12, 10, 3)).astype(np.uint8)
    h = discrete_entropy(img)
    assert 0 <= h <= 8
    shuffled = rng.permutation(img.reshape(-1, 3)).reshape(img.shape)
    assert discrete_entropy(shuffled) == pytest.approx(h, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 40))
def test_equalization_map_monotone(seed, spread):
    gray = np.random.default_rng(seed).integers(0, spread, (20, 20)).astype(np.uint8)
    lut = equalization_map(gray)
    assert np.all(np.diff(lut.astype(int)) >= 0)
    assert lut[gray.max()] == 255 or gray.min() == gray.max()


def test_equalize_constant_image_unchanged():
    img = gray_image(np.full((5, 5), 40))
    np.testing.assert_array_equal(histogram_equalize(img), img)


def test_equalize_stretches_dark_image(rng):
    img = gray_image(rng.integers(0, 30, (32, 32)))
    out = histogram_equalize(img)
    assert out.max() == 255
    assert discrete_entropy(out) == pytest.approx(discrete_entropy(img), abs=1e-9)


@pytest.mark.parametrize("seed", range(30))
def test_equalize_idempotent_on_gray(seed):
    rng = np.random.default_rng(seed)
    img = gray_image(np.minimum(rng.geometric(0.05, (24, 24)), 255))
    once = histogram_equalize(img)
    np.testing.assert_array_equal(histogram_equalize(once), once)


def test_equalize_darkest_level_maps_to_zero(rng):
    img = rng.integers(0, 256, (16, 16, 3)).astype(np.uint8)
    img[0, 0] = 0
    out = histogram_equalize(img)
    assert out.shape == img.shape and out.dtype == np.uint8
    assert out[0, 0].tolist() == [0, 0, 0]


def test_gaussian_window_normalized():
    w = gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(w, tmqi_oracle.fspecial_gaussian(), atol=1e-15)


def test_block_std_against_loops(rng):
    img = rng.random((30, 25)) * 255
    assert block_std_mean(img) == pytest.approx(tmqi_oracle.blkproc_std(img).mean(), rel=1e-12)


def test_flat_image_is_not_natural():
    # zero contrast sits at the edge of the beta model
    assert statistical_naturalness(np.full((22, 22), 115.94)) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_q_monotone_in_components(s, n, t):
    lo, hi = min(s, t), max(s, t)
    assert combine(lo, n) <= combine(hi, n)
    assert combine(n, lo) <= combine(n, hi)
    assert 0 <= combine(s, n) <= 1


@pytest.fixture(scope="module")
def sanity():
    return tmqi_oracle.sanity_set()


def test_tmqi_components_in_range(sanity):
    for hdr, ldr in sanity:
        q = tmqi(hdr, ldr)
        assert all(0 <= v <= 1 for v in q)


def test_tmqi_matches_literal_port(sanity):
    for hdr, ldr in sanity[:2]:
        ours = tmqi(hdr, ldr)
        ref = tmqi_oracle.tmqi(hdr, ldr)
        # local variances of ~4e9-scaled luminance lose digits to cancellation,
        # so fine scales of flat regions differ with summation order
        np.testing.assert_allclose(tuple(ours), ref, atol=5e-3)


def test_tmqi_prefers_well_exposed_over_clipped():
    hdr = tmqi_oracle.sanity_set()[0][0]
    L = np.maximum(tmqi_oracle.rgb_to_Y(hdr), 1e-6)
    key = 0.18 / np.exp(np.log(L).mean())
    good = np.floor(np.clip((hdr * key) / (1 + L * key)[..., None], 0, 1) * 255 + 0.5).astype(np.uint8)
    clipped = np.floor(np.clip(hdr * key * 16, 0, 1) * 255 + 0.5).astype(np.uint8)
    assert tmqi(hdr, good).Q > tmqi(hdr, clipped).Q


def test_tmqi_resizes_mismatched_test(sanity):
    hdr, ldr = sanity[0]
    small = ldr[::2, ::2]
    q = tmqi(hdr, small)
    assert 0 <= q.Q <= 1


def test_tmqi_tiny_images_skip_scales(rng):
    hdr = rng.lognormal(0, 1, (24, 24, 3)).astype(np.float32)
    ldr = rng.integers(0, 256, (24, 24, 3)).astype(np.uint8)
    assert 0 <= tmqi(hdr, ldr).Q <= 1
