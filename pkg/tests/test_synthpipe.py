import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdrenhance import synthpipe
from hdrenhance.errors import InputError
from hdrenhance.imageio import geometric_mean_luminance
from hdrenhance.synthpipe import (
    apply_exposure,
    camera_response,
    draw_patch,
    generate_pair,
    make_rng,
    make_target,
    replay,
    sample_exposure_params,
    sample_patch,
    shutter_speed,
    virtual_camera,
)

# 50-digit mpmath evaluation of (1 + 0.6) * 0.18**0.9 / (0.18**0.9 + 0.6)
CAMERA_AT_KEY = 0.42016172338285416255


class ScriptedRng:
    """Stands in for a Generator, replaying fixed uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


@pytest.fixture
def scene(rng):
    return rng.lognormal(0, 1.5, (60, 80, 3)).astype(np.float32)


def test_patch_side_from_fraction():
    draw = draw_patch((1000, 1200), ScriptedRng([0.0, 0.5, 0.5, 0.9, 0.9]))
    assert draw.crop[2] == 200
    assert not draw.flip_h and not draw.flip_v


def test_patch_corner_stays_inside():
    draw = draw_patch((100, 300), ScriptedRng([1.0 - 1e-12, 1.0 - 1e-12, 1.0 - 1e-12, 0.1, 0.1]))
    x, y, n = draw.crop
    assert n == 60 and x + n <= 300 and y + n <= 100
    assert draw.flip_h and draw.flip_v


def test_constant_scene_gives_constant_patch():
    E = np.full((50, 70, 3), 2.5, np.float32)
    patch = sample_patch(E, make_rng(3))
    assert patch.shape == (256, 256, 3)
    np.testing.assert_allclose(patch, 2.5, rtol=1e-6)


def test_patch_deterministic(scene):
    np.testing.assert_array_equal(sample_patch(scene, make_rng(9)), sample_patch(scene, make_rng(9)))


def test_patch_rejects_tiny_image():
    with pytest.raises(InputError):
        sample_patch(np.ones((4, 40, 3), np.float32), make_rng(0))


def test_shutter_speed_values():
    assert shutter_speed(0.0, 0.18) == pytest.approx(1.0, rel=1e-15)
    assert shutter_speed(-4.0, 0.18) == pytest.approx(1 / 16, rel=1e-15)


def test_gamma_clamped(monkeypatch):
    normals = iter([0.7, -0.05])
    monkeypatch.setattr(synthpipe, "box_muller", lambda rng, mean, std: next(normals))
    params = sample_exposure_params(0.18, ScriptedRng([1.0]))
    assert params.gamma == 0.1
    assert params.eta == 0.7
    assert params.v == 0.0 and params.delta_t == pytest.approx(1.0)


def test_eta_clamped(monkeypatch):
    normals = iter([-0.3, 0.9])
    monkeypatch.setattr(synthpipe, "box_muller", lambda rng, mean, std: next(normals))
    assert sample_exposure_params(1.0, ScriptedRng([0.5])).eta == 0.0


def test_exposure_params_reject_bad_G():
    with pytest.raises(InputError):
        sample_exposure_params(0.0, make_rng(0))


def test_exposure_params_invariants():
    rng = make_rng(1)
    for _ in range(500):
        G = float(rng.uniform(0.01, 10))
        p = sample_exposure_params(G, rng)
        assert -4 <= p.v <= 0 and p.eta >= 0 and p.gamma >= 0.1
        assert p.delta_t == 0.18 * 2.0**p.v / G


def test_normal_draws_have_requested_variance():
    rng = make_rng(5)
    z = np.array([synthpipe.box_muller(rng, 0.6, np.sqrt(0.1)) for _ in range(20000)])
    assert z.mean() == pytest.approx(0.6, abs=0.01)
    assert z.var() == pytest.approx(0.1, rel=0.05)


def test_apply_exposure(scene):
    np.testing.assert_array_equal(apply_exposure(scene, 1.0), scene)
    np.testing.assert_allclose(apply_exposure(scene, 2.0), 2 * scene, rtol=1e-6)


def test_exposure_hits_key_value(scene):
    G = geometric_mean_luminance(scene)
    for v in (-4.0, -2.5, 0.0):
        X = apply_exposure(scene, shutter_speed(v, G))
        assert geometric_mean_luminance(X) == pytest.approx(0.18 * 2**v, rel=1e-3)


def test_camera_scalar_cases():
    assert camera_response(1.0, 0.6, 0.9) == 1.0
    assert camera_response(0.0, 0.6, 0.9) == 0.0
    assert camera_response(0.0, 0.0, 0.9) == 0.0
    assert camera_response(0.18, 0.6, 0.9) == pytest.approx(CAMERA_AT_KEY, abs=1e-9)


def test_virtual_camera_codes():
    X = np.array([[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.18, 0.18, 0.18]]])
    out = virtual_camera(X, 0.6, 0.9)
    assert out[0, 0].tolist() == [255] * 3
    assert out[0, 1].tolist() == [0] * 3
    assert out[0, 2].tolist() == [107] * 3


def test_virtual_camera_keeps_ratios():
    X = np.array([[[0.02, 0.04, 0.08]]])
    out = virtual_camera(X, 0.6, 0.9).astype(float)[0, 0]
    assert out[1] / out[0] == pytest.approx(2.0, rel=0.05)
    assert out[2] / out[1] == pytest.approx(2.0, rel=0.05)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.1, 2.5))
def test_camera_curve_monotone_and_bounded(eta, gamma):
    L = np.concatenate([[0.0], np.logspace(-6, 3, 400)])
    f = camera_response(L, eta, gamma)
    assert np.all(np.diff(f) >= -1e-12)
    assert f.min() >= 0 and f.max() <= 1
    assert camera_response(1.0, eta, gamma) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 50.0), st.floats(0.0, 2.0), st.floats(0.1, 2.0))
def test_achromatic_stays_achromatic(level, eta, gamma):
    out = virtual_camera(np.full((1, 1, 3), level), eta, gamma)
    assert out[0, 0, 0] == out[0, 0, 1] == out[0, 0, 2]


def test_target_constant_patch():
    patch = np.full((32, 32, 3), 0.5, np.float32)
    y = make_target(patch, geometric_mean_luminance(patch))
    assert np.all(y == y[0, 0])


def test_target_deterministic_and_in_range(scene):
    G = geometric_mean_luminance(scene)
    a, b = make_target(scene, G), make_target(scene, G)
    np.testing.assert_array_equal(a, b)
    assert a.dtype == np.uint8 and a.shape == scene.shape


def test_generate_pair_sizes_and_determinism(scene):
    p1 = generate_pair(scene, seed=77, source="s.hdr")
    p2 = generate_pair(scene, seed=77, source="s.hdr")
    assert p1.input.shape == p1.target.shape == (256, 256, 3)
    np.testing.assert_array_equal(p1.input, p2.input)
    np.testing.assert_array_equal(p1.target, p2.target)
    assert p1.provenance == p2.provenance


def test_generate_pair_from_generator(scene):
    a = generate_pair(scene, rng=make_rng(4))
    b = generate_pair(scene, rng=make_rng(4))
    np.testing.assert_array_equal(a.input, b.input)


def test_provenance_replay(scene):
    pair = generate_pair(scene, seed=5, source="x.hdr")
    record = json.loads(json.dumps(pair.provenance))
    again = replay(scene, record)
    np.testing.assert_array_equal(again.input, pair.input)
    np.testing.assert_array_equal(again.target, pair.target)
    assert set(record) >= {"source", "crop", "flip_h", "flip_v", "v", "eta", "gamma", "G", "seed"}
