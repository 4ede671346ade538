"""Radiance RGBE and 8-bit PNG codecs, luminance and bilinear resizing.

HDR images are float32 arrays ``(H, W, 3)`` of linear radiance, LDR images
are uint8 arrays ``(H, W, 3)``.
"""

import io
import re
import struct
import zlib

import numpy as np
from PIL import Image

from .errors import ImageFormatError, TruncationError, UnsupportedFeatureError
from .utils.validation import check_hdr_image, check_ldr_image

# Rec. 709 / sRGB primaries. Every luminance computation in the package goes
# through this constant.
LUMA_COEFFS = (0.2126, 0.7152, 0.0722)

# Guard inside the log-average so black pixels do not send it to zero.
LOG_AVERAGE_DELTA = 1e-6

_SIGNATURES = (b"#?RADIANCE", b"#?RGBE")
_RES_STANDARD = re.compile(rb"^-Y\s+(\d+)\s+\+X\s+(\d+)$")
_RES_ANY = re.compile(rb"^[-+][XY]\s+\d+\s+[-+][XY]\s+\d+$")


# ---------------------------------------------------------------------------
# Radiance RGBE
# ---------------------------------------------------------------------------

def rgbe_to_float(rgbe):
    """Decode an ``(..., 4)`` uint8 RGBE array into ``(..., 3)`` float32.

    Mantissa ``m`` with exponent ``e > 0`` decodes to
    ``(m + 0.5) / 256 * 2**(e - 128)``; ``e == 0`` decodes to zero.
    """
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    mant = rgbe[..., :3].astype(np.float64) + 0.5
    exp = rgbe[..., 3].astype(np.int32)
    out = np.ldexp(mant, (exp - 136)[..., None])
    out[exp == 0] = 0.0
    return out.astype(np.float32)


def float_to_rgbe(rgb):
    """Encode ``(..., 3)`` nonnegative floats into ``(..., 4)`` uint8 RGBE."""
    rgb = np.asarray(rgb, dtype=np.float64)
    brightest = rgb.max(axis=-1)
    frac, exp = np.frexp(brightest)
    # brightest = frac * 2**exp with frac in [0.5, 1); mantissas land in [0, 256)
    scale = np.ldexp(1.0, 8 - exp)
    mant = np.floor(rgb * scale[..., None])
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    ok = (brightest >= 1e-38) & (exp + 128 >= 1)
    big = exp + 128 > 255
    if np.any(big):
        raise ValueError("radiance value too large for RGBE encoding")
    out[..., :3] = np.where(ok[..., None], np.clip(mant, 0, 255), 0).astype(np.uint8)
    out[..., 3] = np.where(ok, exp + 128, 0).astype(np.uint8)
    return out


def _read_header(buf):
    pos = 0
    lines = []
    while True:
        end = buf.find(b"\n", pos)
        if end < 0:
            raise ImageFormatError("Radiance header is not terminated")
        line = buf[pos:end].rstrip(b"\r")
        pos = end + 1
        if not line:
            break
        lines.append(line)
    if not lines or not lines[0].startswith(_SIGNATURES):
        raise ImageFormatError("missing #?RADIANCE / #?RGBE signature")
    for line in lines[1:]:
        if line.startswith(b"FORMAT="):
            fmt = line[len(b"FORMAT="):].strip()
            if fmt != b"32-bit_rle_rgbe":
                raise UnsupportedFeatureError(f"unsupported pixel format {fmt.decode(errors='replace')}")
    end = buf.find(b"\n", pos)
    if end < 0:
        raise ImageFormatError("missing resolution line")
    res = buf[pos:end].strip()
    m = _RES_STANDARD.match(res)
    if m is None:
        if _RES_ANY.match(res):
            raise UnsupportedFeatureError(f"orientation {res.decode()} is not supported")
        raise ImageFormatError(f"malformed resolution line {res!r}")
    height, width = int(m.group(1)), int(m.group(2))
    if width < 1 or height < 1:
        raise ImageFormatError("image dimensions must be positive")
    return width, height, end + 1


def _read_rle_scanline(buf, pos, width, out_row):
    """Decode one new-style RLE scanline into ``out_row`` (width, 4)."""
    n = len(buf)
    for ch in range(4):
        x = 0
        while x < width:
            if pos >= n:
                raise TruncationError("scanline data ended early")
            count = buf[pos]
            pos += 1
            if count > 128:
                count -= 128
                if pos >= n:
                    raise TruncationError("scanline data ended early")
                if x + count > width:
                    raise ImageFormatError("RLE run overflows scanline")
                out_row[x:x + count, ch] = buf[pos]
                pos += 1
            else:
                if count == 0 or x + count > width:
                    raise ImageFormatError("bad RLE literal count")
                if pos + count > n:
                    raise TruncationError("scanline data ended early")
                out_row[x:x + count, ch] = np.frombuffer(buf, np.uint8, count, pos)
                pos += count
            x += count
    return pos


def read_radiance_hdr(data):
    """Parse a Radiance ``.hdr`` byte string into a float32 HDR image.

    Both flat and new-style run-length-encoded scanlines are accepted.
    Only the standard ``-Y h +X w`` orientation is supported.
    """
    buf = bytes(data)
    width, height, pos = _read_header(buf)
    rgbe = np.empty((height, width, 4), dtype=np.uint8)
    n = len(buf)
    for y in range(height):
        if pos + 4 > n:
            raise TruncationError(f"file ends before scanline {y}")
        head = buf[pos:pos + 4]
        if 8 <= width < 32768 and head[0] == 2 and head[1] == 2 and not head[2] & 0x80:
            if (head[2] << 8) | head[3] != width:
                raise ImageFormatError(f"scanline {y} length does not match image width")
            pos = _read_rle_scanline(buf, pos + 4, width, rgbe[y])
        else:
            if pos + 4 * width > n:
                raise TruncationError(f"file ends inside scanline {y}")
            rgbe[y] = np.frombuffer(buf, np.uint8, 4 * width, pos).reshape(width, 4)
            pos += 4 * width
    return rgbe_to_float(rgbe)


def write_radiance_hdr(img):
    """Serialize an HDR image to Radiance bytes with flat scanlines."""
    img = check_hdr_image(img)
    h, w, _ = img.shape
    header = (
        b"#?RADIANCE\n"
        b"FORMAT=32-bit_rle_rgbe\n"
        b"\n" + f"-Y {h} +X {w}\n".encode("ascii")
    )
    return header + float_to_rgbe(img).tobytes()


def load_hdr(path):
    with open(path, "rb") as fh:
        return read_radiance_hdr(fh.read())


def save_hdr(path, img):
    with open(path, "wb") as fh:
        fh.write(write_radiance_hdr(img))


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _png_ihdr(buf):
    if not buf.startswith(_PNG_MAGIC):
        raise ImageFormatError("not a PNG file")
    if len(buf) < 33:
        raise TruncationError("PNG ends inside IHDR")
    length, kind = struct.unpack(">I4s", buf[8:16])
    if kind != b"IHDR" or length != 13:
        raise ImageFormatError("PNG does not start with an IHDR chunk")
    if zlib.crc32(buf[12:29]) != struct.unpack(">I", buf[29:33])[0]:
        raise ImageFormatError("IHDR checksum mismatch")
    return buf[24], buf[25]


def read_png(data):
    """Decode an 8-bit RGB PNG into a uint8 ``(H, W, 3)`` array."""
    buf = bytes(data)
    bit_depth, color_type = _png_ihdr(buf)
    if bit_depth != 8:
        raise UnsupportedFeatureError(f"{bit_depth}-bit PNG; only 8-bit is supported")
    if color_type != 2:
        raise UnsupportedFeatureError(f"PNG color type {color_type}; only RGB (2) is supported")
    try:
        with Image.open(io.BytesIO(buf)) as im:
            im.load()
            arr = np.array(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"corrupt PNG: {exc}") from exc
    return arr


def write_png(img):
    """Encode a uint8 RGB image as PNG bytes."""
    img = check_ldr_image(img)
    out = io.BytesIO()
    # Fixed settings keep the output byte-stable across runs.
    Image.fromarray(np.ascontiguousarray(img), mode="RGB").save(out, format="PNG", compress_level=6)
    return out.getvalue()


def load_png(path):
    with open(path, "rb") as fh:
        return read_png(fh.read())


def save_png(path, img):
    with open(path, "wb") as fh:
        fh.write(write_png(img))


# ---------------------------------------------------------------------------
# luminance and resampling
# ---------------------------------------------------------------------------

def luminance(rgb):
    """Rec. 709 luminance of an RGB triple or of the last axis of an array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = LUMA_COEFFS
    out = r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]
    return float(out) if out.ndim == 0 else out


def geometric_mean_luminance(img, delta=LOG_AVERAGE_DELTA):
    """Log-average luminance ``exp(mean(log(delta + L)))`` of an image."""
    lum = luminance(np.asarray(img, dtype=np.float64))
    if lum.size == 0:
        raise ValueError("empty image")
    return float(np.exp(np.mean(np.log(delta + lum))))


def _interp_matrix(n_in, n_out):
    """Row-stochastic ``(n_out, n_in)`` matrix for half-pixel bilinear sampling."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(mat, (rows, lo), 1.0 - frac)
    np.add.at(mat, (rows, hi), frac)
    return mat


def resize_bilinear(img, out_w, out_h, axes=(0, 1)):
    """Bilinear resize with half-pixel-centred sampling.

    Works on float arrays along ``axes`` (rows, columns); uint8 inputs are
    converted to ``[0, 1]`` first. The result is float32.
    """
    out_w, out_h = int(out_w), int(out_h)
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be at least 1x1")
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
    ay, ax = (a % arr.ndim for a in axes)
    arr = np.moveaxis(arr, (ay, ax), (-2, -1))
    ry = _interp_matrix(arr.shape[-2], out_h)
    rx = _interp_matrix(arr.shape[-1], out_w)
    out = ry @ arr @ rx.T
    return np.moveaxis(out, (-2, -1), (ay, ax)).astype(np.float32)
