"""Mertens-style exposure fusion.

Each exposure gets a per-pixel quality weight (contrast, saturation,
well-exposedness); normalized weights are smoothed through Gaussian
pyramids and used to blend the exposures' Laplacian pyramids.
"""

import numpy as np
from scipy import ndimage

from .errors import InputError
from .imageio import LUMA_COEFFS

WEIGHT_EPS = 1e-12

_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
_LAPLACE = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def contrast(img):
    gray = np.asarray(img, dtype=np.float64) @ np.asarray(LUMA_COEFFS)
    return np.abs(ndimage.correlate(gray, _LAPLACE, mode="mirror"))


def saturation(img):
    return np.asarray(img, dtype=np.float64).std(axis=-1)


def well_exposedness(img, sigma=0.2):
    img = np.asarray(img, dtype=np.float64)
    return np.prod(np.exp(-((img - 0.5) ** 2) / (2 * sigma**2)), axis=-1)


def quality_weights(img, w_contrast=1.0, w_saturation=1.0, w_exposedness=1.0, sigma=0.2):
    """Unnormalized Mertens weight map of one ``(H, W, 3)`` image in ``[0, 1]``."""
    return (
        contrast(img) ** w_contrast
        * saturation(img) ** w_saturation
        * well_exposedness(img, sigma) ** w_exposedness
        + WEIGHT_EPS
    )


def normalized_weights(imgs, **kwargs):
    """Stack of weight maps that sum to one at every pixel."""
    weights = np.stack([quality_weights(im, **kwargs) for im in imgs])
    return weights / weights.sum(axis=0, keepdims=True)


def max_levels(shape):
    return int(np.floor(np.log2(min(shape[0], shape[1])))) + 1


def default_levels(shape):
    return max(1, int(np.floor(np.log2(min(shape[0], shape[1])))) - 1)


def _blur(img, kernel):
    out = ndimage.correlate1d(img, kernel, axis=0, mode="mirror")
    return ndimage.correlate1d(out, kernel, axis=1, mode="mirror")


def _downsample(img):
    return _blur(img, _BINOMIAL)[::2, ::2]


def _upsample(img, shape):
    """Zero-insert to ``shape`` then interpolate with the doubled binomial kernel."""
    up = np.zeros(tuple(shape[:2]) + img.shape[2:], dtype=np.float64)
    up[::2, ::2] = img
    return _blur(up, 2.0 * _BINOMIAL)


def _check_levels(img, levels):
    if levels < 1 or levels > max_levels(img.shape):
        raise InputError(f"{levels} levels is invalid for an image of shape {img.shape[:2]}")


def gaussian_pyramid(img, levels):
    """List of progressively blurred and halved images, finest first."""
    img = np.asarray(img, dtype=np.float64)
    _check_levels(img, levels)
    pyr = [img]
    for _ in range(levels - 1):
        pyr.append(_downsample(pyr[-1]))
    return pyr


def laplacian_pyramid(img, levels):
    gauss = gaussian_pyramid(img, levels)
    pyr = [g - _upsample(g_next, g.shape) for g, g_next in zip(gauss[:-1], gauss[1:])]
    pyr.append(gauss[-1])
    return pyr


def collapse(pyr):
    """Invert :func:`laplacian_pyramid`."""
    img = pyr[-1]
    for detail in reversed(pyr[:-1]):
        img = detail + _upsample(img, detail.shape)
    return img


def exposure_fuse(imgs, levels=None, **weight_kwargs):
    """Fuse same-sized float images in ``[0, 1]`` into one image in ``[0, 1]``."""
    imgs = [np.asarray(im, dtype=np.float64) for im in imgs]
    if not imgs:
        raise InputError("need at least one image to fuse")
    shape = imgs[0].shape
    if any(im.shape != shape for im in imgs):
        raise InputError("all exposures must share the same dimensions")
    if levels is None:
        levels = default_levels(shape)
    weights = normalized_weights(imgs, **weight_kwargs)

    blended = None
    for img, weight in zip(imgs, weights):
        w_pyr = gaussian_pyramid(weight, levels)
        l_pyr = laplacian_pyramid(img, levels)
        contrib = [w[..., None] * lap for w, lap in zip(w_pyr, l_pyr)]
        blended = contrib if blended is None else [b + c for b, c in zip(blended, contrib)]
    return np.clip(collapse(blended), 0.0, 1.0)
