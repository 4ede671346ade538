"""Input validation helpers in the spirit of ``sklearn.utils.validation``.

HDR images are ``float32`` arrays of shape ``(H, W, 3)`` holding linear
radiance; LDR images are ``uint8`` arrays of the same layout.
"""

import numbers

import numpy as np

from ..errors import InputError


def check_hdr_image(img, name="image", copy=False):
    """Validate and return an HDR image as a float32 ``(H, W, 3)`` array."""
    arr = np.array(img, dtype=np.float32, copy=copy) if copy else np.asarray(img, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"{name} must be at least 1x1, got {arr.shape[:2]}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    if arr.size and arr.min() < 0:
        raise InputError(f"{name} contains negative radiance")
    return arr


def check_ldr_image(img, name="image"):
    """Validate and return an LDR image as a uint8 ``(H, W, 3)`` array.

    Integer arrays outside ``[0, 255]`` are rejected rather than wrapped.
    """
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"{name} must be at least 1x1, got {arr.shape[:2]}")
    if arr.dtype == np.uint8:
        return arr
    if not np.issubdtype(arr.dtype, np.integer):
        raise InputError(f"{name} must hold integer codes, got dtype {arr.dtype}")
    if arr.min() < 0 or arr.max() > 255:
        raise InputError(f"{name} codes must lie in [0, 255]")
    return arr.astype(np.uint8)


def ldr_to_float(img):
    """Map 8-bit codes ``c`` to ``c / 255`` in float32."""
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)


def float_to_ldr(img):
    """Quantize floats to 8-bit codes: ``round(clip(f, 0, 1) * 255)``."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(arr + 0.5).astype(np.uint8)


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Accepts None, an int, a ``SeedSequence`` or an existing Generator
    (returned unchanged).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.Generator(np.random.PCG64(seed))
    raise InputError(f"{seed!r} cannot be used to seed a random generator")


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InputError(f"{name} must be a positive finite number, got {value}")
    return value
