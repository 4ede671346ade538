"""Synthesis of (input, target) LDR training pairs from HDR radiance maps.

Every pair is driven by its own seeded stream. Draws happen in a fixed
order: patch fraction ``u``, corner x, corner y, horizontal flip, vertical
flip, exposure offset ``v``, ``eta``, ``gamma``. Uniforms come from numpy's
PCG64 ``Generator.random``; normals are built from uniforms with the
Box-Muller transform so the draw count per pair is fixed.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .fusion import exposure_fuse
from .imageio import geometric_mean_luminance, luminance, resize_bilinear
from .utils.validation import check_hdr_image, float_to_ldr

PATCH_SIZE = 256
PATCH_FRACTION = (0.2, 0.6)
EXPOSURE_RANGE = (-4.0, 0.0)
KEY_VALUE = 0.18
ETA_MEAN, GAMMA_MEAN = 0.6, 0.9
# The normals are specified by variance, hence the square root.
PARAM_STD = math.sqrt(0.1)
ETA_MIN, GAMMA_MIN = 0.0, 0.1
TARGET_EXPOSURES = (-2.0, 0.0, 2.0)


@dataclass(frozen=True)
class ExposureParams:
    v: float
    eta: float
    gamma: float
    delta_t: float


@dataclass(frozen=True)
class PatchDraw:
    crop: tuple  # (x, y, n): top-left corner and side length in source pixels
    flip_h: bool
    flip_v: bool


@dataclass
class SamplePair:
    input: np.ndarray
    target: np.ndarray
    provenance: dict = field(default_factory=dict)


def pair_seed(master_seed, index):
    """Seed of the independent stream used for sample ``index``."""
    entropy = [int(master_seed)] + [int(i) for i in np.atleast_1d(index)]
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def box_muller(rng, mean, std):
    """One normal draw from two uniforms; always consumes exactly two."""
    u1 = rng.random()
    u2 = rng.random()
    z = math.sqrt(-2.0 * math.log1p(-u1)) * math.cos(2.0 * math.pi * u2)
    return mean + std * z


def shutter_speed(v, G):
    """Exposure time mapping the log-average luminance ``G`` to ``0.18 * 2**v``."""
    return KEY_VALUE * 2.0**v / G


def draw_patch(shape, rng):
    h, w = shape[:2]
    short = min(h, w)
    u = PATCH_FRACTION[0] + (PATCH_FRACTION[1] - PATCH_FRACTION[0]) * rng.random()
    n = int(math.floor(u * short + 0.5))
    if n < 1:
        raise InputError(f"image of short side {short} is too small to crop")
    n = min(n, short)
    x = int(rng.random() * (w - n + 1))
    y = int(rng.random() * (h - n + 1))
    flip_h = rng.random() < 0.5
    flip_v = rng.random() < 0.5
    return PatchDraw((x, y, n), bool(flip_h), bool(flip_v))


def apply_patch(E, draw, size=PATCH_SIZE):
    x, y, n = draw.crop
    patch = resize_bilinear(E[y:y + n, x:x + n], size, size)
    if draw.flip_h:
        patch = patch[:, ::-1]
    if draw.flip_v:
        patch = patch[::-1]
    return np.ascontiguousarray(patch)


def sample_patch(E, rng, size=PATCH_SIZE, return_draw=False):
    """Random square crop, resized to ``size`` and randomly flipped."""
    E = check_hdr_image(E)
    if min(E.shape[:2]) < 5:
        raise InputError("HDR image must be at least 5 pixels on its short side")
    draw = draw_patch(E.shape, rng)
    patch = apply_patch(E, draw, size)
    return (patch, draw) if return_draw else patch


def sample_exposure_params(G, rng):
    if not G > 0:
        raise InputError(f"log-average luminance must be positive, got {G}")
    v = EXPOSURE_RANGE[0] + (EXPOSURE_RANGE[1] - EXPOSURE_RANGE[0]) * rng.random()
    eta = max(box_muller(rng, ETA_MEAN, PARAM_STD), ETA_MIN)
    gamma = max(box_muller(rng, GAMMA_MEAN, PARAM_STD), GAMMA_MIN)
    return ExposureParams(v=v, eta=eta, gamma=gamma, delta_t=shutter_speed(v, G))


def apply_exposure(E_patch, dt):
    if not dt > 0:
        raise InputError("shutter speed must be positive")
    return (np.asarray(E_patch, dtype=np.float64) * dt).astype(np.float32)


def camera_response(L, eta, gamma):
    """Virtual camera curve ``min((1 + eta) L^g / (L^g + eta), 1)`` with f(0) = 0."""
    L = np.asarray(L, dtype=np.float64)
    Lg = np.power(L, gamma)
    denom = Lg + eta
    with np.errstate(divide="ignore", invalid="ignore"):
        resp = np.where(denom > 0, (1.0 + eta) * Lg / np.where(denom > 0, denom, 1.0), 0.0)
    resp = np.minimum(resp, 1.0)
    resp = np.where(L > 0, resp, 0.0)
    return float(resp) if resp.ndim == 0 else resp


def virtual_camera(X, eta, gamma):
    """Render an exposure to 8 bits through the camera curve on luminance.

    RGB ratios of ``X`` are kept, so achromatic pixels stay achromatic.
    """
    if eta < 0 or gamma <= 0:
        raise InputError("virtual camera needs eta >= 0 and gamma > 0")
    X = np.asarray(X, dtype=np.float64)
    L = luminance(X)
    resp = camera_response(L, eta, gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(L > 0, resp / np.where(L > 0, L, 1.0), 0.0)
    return float_to_ldr(X * gain[..., None])


def make_target(E_patch, G):
    """Fuse three clamped exposures of ``E_patch`` into the 8-bit target."""
    if not G > 0:
        raise InputError("log-average luminance must be positive")
    E_patch = np.asarray(E_patch, dtype=np.float64)
    exposures = [np.clip(E_patch * shutter_speed(u, G), 0.0, 1.0) for u in TARGET_EXPOSURES]
    return float_to_ldr(exposure_fuse(exposures))


def synthesize(E, seed, size=PATCH_SIZE, with_target=True, source=None):
    """Run the whole draw sequence for one pair from a seed.

    Returns ``(x, y, provenance, patch)``; ``y`` is None when
    ``with_target`` is false (test inputs only need ``x`` and the patch).
    """
    E = check_hdr_image(E)
    if min(E.shape[:2]) < 5:
        raise InputError("HDR image must be at least 5 pixels on its short side")
    rng = make_rng(seed)
    draw = draw_patch(E.shape, rng)
    patch = apply_patch(E, draw, size)
    G = geometric_mean_luminance(patch)
    params = sample_exposure_params(G, rng)
    x = virtual_camera(apply_exposure(patch, params.delta_t), params.eta, params.gamma)
    y = make_target(patch, G) if with_target else None
    provenance = {
        "source": source,
        "crop": list(draw.crop),
        "flip_h": draw.flip_h,
        "flip_v": draw.flip_v,
        "v": params.v,
        "eta": params.eta,
        "gamma": params.gamma,
        "delta_t": params.delta_t,
        "G": G,
        "seed": seed,
        "size": size,
    }
    return x, y, provenance, patch


def generate_pair(E, rng=None, seed=None, source=None, size=PATCH_SIZE):
    """Generate one :class:`SamplePair`.

    Pass either ``seed`` (an int that fully determines the pair and is
    recorded in the provenance) or a Generator ``rng`` from which that seed
    is drawn.
    """
    if seed is None:
        if rng is None:
            raise InputError("generate_pair needs a seed or a generator")
        seed = int(rng.integers(0, 2**63))
    x, y, provenance, _ = synthesize(E, seed, size=size, source=source)
    return SamplePair(input=x, target=y, provenance=provenance)


def replay(E, provenance):
    """Regenerate a pair from its recorded provenance."""
    x, y, _, _ = synthesize(E, provenance["seed"], size=provenance.get("size", PATCH_SIZE),
                            source=provenance.get("source"))
    return SamplePair(input=x, target=y, provenance=dict(provenance))


def provenance_json(provenance):
    return json.dumps(provenance, indent=2, sort_keys=True)
