"""Procedural HDR scenes and loading of HDR corpora from disk.

``make_hdr_scene`` paints a random scene with a bright sky, a light source,
textured objects and deep shadows so the dynamic range spans several
orders of magnitude, like real outdoor radiance maps.
"""

import logging
import os

import numpy as np
from scipy import ndimage

from .errors import HdrEnhanceError
from .imageio import load_hdr, save_hdr
from .utils.validation import check_random_state

logger = logging.getLogger(__name__)


def _smooth_noise(rng, h, w, scale):
    noise = rng.standard_normal((h, w))
    noise = ndimage.gaussian_filter(noise, scale, mode="wrap")
    return noise / (noise.std() + 1e-12)


def _texture(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    kind = rng.integers(4)
    if kind == 0:
        period = rng.uniform(6, 40)
        angle = rng.uniform(0, np.pi)
        t = np.cos(angle) * xx + np.sin(angle) * yy
        return 0.5 + 0.5 * np.sin(2 * np.pi * t / period)
    if kind == 1:
        cell = int(rng.integers(6, 40))
        return ((xx // cell + yy // cell) % 2) * 0.8 + 0.2
    if kind == 2:
        return 1.0 / (1.0 + np.exp(-2.0 * _smooth_noise(rng, h, w, rng.uniform(1.5, 6))))
    return np.full((h, w), 1.0)


def make_hdr_scene(rng=None, height=384, width=512):
    """Random HDR radiance map of shape ``(height, width, 3)``, float32."""
    rng = check_random_state(rng)
    h, w = height, width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    horizon = rng.uniform(0.25, 0.6) * h
    sky_level = 10 ** rng.uniform(0.5, 2.0)
    sky_tint = rng.uniform(0.6, 1.0, 3) * np.array([0.8, 0.9, 1.1])
    ground_level = 10 ** rng.uniform(-2.0, -0.3)

    sky = sky_level * (0.4 + 0.6 * np.clip(1 - yy / max(horizon, 1), 0, 1))[..., None] * sky_tint
    albedo = rng.uniform(0.2, 0.9, 3)[None, None] * (0.6 + 0.4 * _texture(rng, h, w)[..., None])
    img = np.where((yy < horizon)[..., None], sky, ground_level * albedo)

    # shadowed and lit objects
    for _ in range(int(rng.integers(3, 8))):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.05, 0.3) * h, rng.uniform(0.05, 0.3) * w
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        light = 10 ** rng.uniform(-2.5, 1.0)
        color = rng.uniform(0.1, 1.0, 3)
        tex = _texture(rng, h, w)
        obj = light * color[None, None] * (0.3 + 0.7 * tex[..., None])
        img = np.where(mask[..., None], obj, img)

    # light source with a soft glow
    sy, sx = rng.uniform(0, max(horizon, 2)), rng.uniform(0, w)
    dist2 = (yy - sy) ** 2 + (xx - sx) ** 2
    radius = rng.uniform(0.01, 0.04) * min(h, w)
    peak = 10 ** rng.uniform(2.5, 4.0)
    glow = peak * np.exp(-dist2 / (2 * (4 * radius) ** 2)) * 0.05
    img = img + glow[..., None] + np.where(dist2 <= radius**2, peak, 0.0)[..., None]

    img *= np.exp(0.15 * _smooth_noise(rng, h, w, 8.0))[..., None]
    return np.maximum(img, 1e-6).astype(np.float32)


def make_hdr_corpus(n_images, random_state=0, height=384, width=512):
    """List of ``n_images`` independent scenes; scene ``i`` depends only on (seed, i)."""
    seq = np.random.SeedSequence(random_state)
    return [make_hdr_scene(np.random.Generator(np.random.PCG64(child)), height, width)
            for child in seq.spawn(n_images)]


def write_hdr_corpus(out_dir, n_images, random_state=0, height=384, width=512):
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, img in enumerate(make_hdr_corpus(n_images, random_state, height, width)):
        path = os.path.join(out_dir, f"scene_{i:04d}.hdr")
        save_hdr(path, img)
        paths.append(path)
    return paths


def list_hdr_files(directory):
    return sorted(os.path.join(directory, f) for f in os.listdir(directory)
                  if f.lower().endswith(".hdr") and os.path.isfile(os.path.join(directory, f)))


def load_hdr_dir(directory, min_side=5):
    """Load every readable ``.hdr`` file in ``directory`` in sorted order.

    Unreadable or too-small files are skipped with a warning. Returns
    ``(images, paths)``.
    """
    images, paths = [], []
    for path in list_hdr_files(directory):
        try:
            img = load_hdr(path)
        except (OSError, HdrEnhanceError, ValueError) as exc:
            logger.warning("skipping %s: %s", path, exc)
            continue
        if min(img.shape[:2]) < min_side:
            logger.warning("skipping %s: smaller than %d pixels", path, min_side)
            continue
        images.append(img)
        paths.append(path)
    return images, paths
