"""Discrete entropy and the histogram-equalization baseline."""

import numpy as np

from ..imageio import LUMA_COEFFS
from ..utils.validation import check_ldr_image


def gray_levels(img):
    """8-bit Rec. 709 luma of an RGB uint8 image, rounded to the nearest level."""
    img = check_ldr_image(img)
    luma = img.astype(np.float64) @ np.asarray(LUMA_COEFFS)
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def discrete_entropy(img):
    """Shannon entropy in bits of the 256-bin gray-level histogram."""
    gray = gray_levels(img)
    counts = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    p = counts[counts > 0] / gray.size
    return float(max(0.0, -np.sum(p * np.log2(p))))


def equalization_map(gray):
    """Lookup table ``level -> level`` of global histogram equalization.

    Uses ``round(255 * (cdf - cdf_min) / (1 - cdf_min))`` so that a
    constant image maps onto itself.
    """
    counts = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    cdf = np.cumsum(counts) / gray.size
    cdf_min = cdf[counts > 0][0]
    if cdf_min >= 1.0:
        return np.arange(256, dtype=np.uint8)
    lut = np.floor(255.0 * (cdf - cdf_min) / (1.0 - cdf_min) + 0.5)
    return np.clip(lut, 0, 255).astype(np.uint8)


def histogram_equalize(img):
    """Equalize the gray channel and rescale RGB by the per-pixel gray gain."""
    img = check_ldr_image(img)
    gray = gray_levels(img)
    lut = equalization_map(gray)
    new_gray = lut[gray].astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(gray > 0, new_gray / np.maximum(gray, 1), 0.0)
    out = img.astype(np.float64) * gain[..., None]
    # black pixels have no chroma to preserve: render them as the mapped gray
    out = np.where((gray == 0)[..., None], new_gray[..., None], out)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
