"""Tone-mapped image quality index (Yeganeh & Wang, IEEE TIP 2013).

Constants and procedure follow the authors' published MATLAB release
(``TMQI.m``): multi-scale structural fidelity between the HDR and LDR
luminance, statistical naturalness of the LDR luminance, combined as
``Q = a * S**alpha + (1 - a) * N**beta``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, stats

from ..imageio import LUMA_COEFFS, resize_bilinear
from ..utils.validation import check_hdr_image, check_ldr_image

# Combination weights and exponents from the reference release.
TMQI_A = 0.8012
TMQI_ALPHA = 0.3046
TMQI_BETA = 0.7088
# Per-scale weights of the structural fidelity product (5 scales).
SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
# Stabilizers inside the local structural similarity.
C1 = 0.01
C2 = 10.0
# Naturalness models: Beta(4.4, 10.1) over contrast / 64.29 and
# Gaussian(115.94, 27.99) over mean brightness.
CONTRAST_BETA = (4.4, 10.1)
CONTRAST_SCALE = 64.29
BRIGHTNESS_MEAN = 115.94
BRIGHTNESS_STD = 27.99
NATURALNESS_BLOCK = 11
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5


@dataclass(frozen=True)
class TMQIResult:
    Q: float
    S: float
    N: float

    def __iter__(self):
        return iter((self.Q, self.S, self.N))


def gaussian_window(size=WINDOW_SIZE, sigma=WINDOW_SIGMA):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    return g / g.sum()


def _valid_filter(img, window):
    """Correlation with ``window`` keeping only fully-overlapping positions."""
    k = window.shape[0]
    full = ndimage.correlate(img, window, mode="constant")
    lo = k // 2
    hi = k - 1 - lo
    return full[lo:img.shape[0] - hi, lo:img.shape[1] - hi]


def contrast_sensitivity(freq):
    """Mannos-Sakrison style CSF evaluated at ``freq`` cycles/degree."""
    return 100.0 * 2.6 * (0.0192 + 0.114 * freq) * np.exp(-((0.114 * freq) ** 1.1))


def local_structure(hdr_l, ldr_l, window, freq):
    """Mean local structural fidelity at one scale and the map itself."""
    mu1 = _valid_filter(hdr_l, window)
    mu2 = _valid_filter(ldr_l, window)
    sigma1 = np.sqrt(np.maximum(0.0, _valid_filter(hdr_l * hdr_l, window) - mu1 * mu1))
    sigma2 = np.sqrt(np.maximum(0.0, _valid_filter(ldr_l * ldr_l, window) - mu2 * mu2))
    sigma12 = _valid_filter(hdr_l * ldr_l, window) - mu1 * mu2

    mean_thr = 128.0 / (1.4 * contrast_sensitivity(freq))
    std_thr = mean_thr / 3.0
    p1 = stats.norm.cdf(sigma1, mean_thr, std_thr)
    p2 = stats.norm.cdf(sigma2, mean_thr, std_thr)
    smap = ((2 * p1 * p2 + C1) / (p1 * p1 + p2 * p2 + C1)) * ((sigma12 + C2) / (sigma1 * sigma2 + C2))
    return float(smap.mean()), smap


def _halve(img):
    """2x2 box filter with symmetric border, then keep every other pixel."""
    padded = np.pad(img, ((0, 1), (0, 1)), mode="symmetric")
    avg = (padded[:-1, :-1] + padded[1:, :-1] + padded[:-1, 1:] + padded[1:, 1:]) / 4.0
    return avg[::2, ::2]


def structural_fidelity(hdr_l, ldr_l, weights=SCALE_WEIGHTS, window=None):
    window = gaussian_window() if window is None else window
    freq = 32.0
    local = []
    for _ in weights:
        freq /= 2.0
        if min(hdr_l.shape) < window.shape[0]:
            break
        s, _ = local_structure(hdr_l, ldr_l, window, freq)
        local.append(max(s, 0.0))
        hdr_l, ldr_l = _halve(hdr_l), _halve(ldr_l)
    used = np.asarray(weights[:len(local)])
    return float(np.prod(np.asarray(local) ** (used / used.sum() * np.sum(weights)))), local


def block_std_mean(img, block=NATURALNESS_BLOCK):
    """Mean over pixels of the sample std of the zero-padded block each pixel falls in."""
    h, w = img.shape
    ph, pw = -h % block, -w % block
    padded = np.pad(img, ((0, ph), (0, pw)))
    nb_y, nb_x = padded.shape[0] // block, padded.shape[1] // block
    blocks = padded.reshape(nb_y, block, nb_x, block).transpose(0, 2, 1, 3).reshape(nb_y, nb_x, -1)
    stds = blocks.std(axis=-1, ddof=1)
    per_pixel = np.repeat(np.repeat(stds, block, axis=0), block, axis=1)[:h, :w]
    return float(per_pixel.mean())


def statistical_naturalness(ldr_l):
    mean = float(ldr_l.mean())
    contrast = block_std_mean(ldr_l)
    a, b = CONTRAST_BETA
    mode = (a - 1) / (a + b - 2)
    pc = stats.beta.pdf(contrast / CONTRAST_SCALE, a, b) / stats.beta.pdf(mode, a, b)
    pb = (stats.norm.pdf(mean, BRIGHTNESS_MEAN, BRIGHTNESS_STD)
          / stats.norm.pdf(BRIGHTNESS_MEAN, BRIGHTNESS_MEAN, BRIGHTNESS_STD))
    return float(pb * pc)


def _luminance(rgb):
    return np.asarray(rgb, dtype=np.float64) @ np.asarray(LUMA_COEFFS)


def tmqi(reference, test):
    """Score an 8-bit rendering ``test`` against the HDR ``reference``.

    ``test`` is bilinearly resized to the reference size if they differ.
    Returns a :class:`TMQIResult` ``(Q, S, N)``, each clamped to ``[0, 1]``.
    """
    reference = check_hdr_image(reference)
    test = check_ldr_image(test)
    if test.shape != reference.shape:
        test = np.floor(resize_bilinear(test, reference.shape[1], reference.shape[0]) * 255.0 + 0.5)
    hdr_l = _luminance(reference)
    lmin, lmax = hdr_l.min(), hdr_l.max()
    if lmax > lmin:
        hdr_l = np.round((2.0**32 - 1) / (lmax - lmin)) * (hdr_l - lmin)
    else:
        hdr_l = np.zeros_like(hdr_l)
    ldr_l = _luminance(test)

    S, _ = structural_fidelity(hdr_l, ldr_l)
    N = statistical_naturalness(ldr_l)
    S = min(max(S, 0.0), 1.0)
    N = min(max(N, 0.0), 1.0)
    Q = TMQI_A * S**TMQI_ALPHA + (1 - TMQI_A) * N**TMQI_BETA
    return TMQIResult(Q=min(max(Q, 0.0), 1.0), S=S, N=N)


def combine(S, N):
    return TMQI_A * np.power(S, TMQI_ALPHA) + (1 - TMQI_A) * np.power(N, TMQI_BETA)
