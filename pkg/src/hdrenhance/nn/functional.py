"""Forward and backward passes of the layer primitives.

All tensors are ``(N, C, H, W)`` numpy arrays. Functions preserve the
input dtype, so the same code runs in float32 for training and float64
for finite-difference checks.
"""

import numpy as np

from ..errors import ConfigError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _out_size(n, k, stride, pad):
    span = n + 2 * pad - k
    if span < 0 or span % stride:
        raise ConfigError(f"input size {n} with kernel {k}, stride {stride}, pad {pad} "
                          "does not give an integral output size")
    return span // stride + 1


def _im2col(xp, kh, kw, stride, ho, wo):
    """Gather patches of padded ``xp`` into ``(N, C*kh*kw, ho*wo)``."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * (ho - 1) + 1:stride,
                                  j:j + stride * (wo - 1) + 1:stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols, shape, kh, kw, stride, ho, wo):
    """Adjoint of :func:`_im2col`: scatter-add patches into a ``shape`` array."""
    n, c = shape[:2]
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * (ho - 1) + 1:stride,
                j:j + stride * (wo - 1) + 1:stride] += cols[:, :, i, j]
    return out


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _batched_outer(a, b):
    """``sum_n a[n] @ b[n].T``; a per-item loop lets BLAS read ``b`` transposed in place."""
    out = a[0] @ b[0].T
    for i in range(1, a.shape[0]):
        out += a[i] @ b[i].T
    return out


def _unpad(x, pad):
    if pad == 0:
        return x
    return x[:, :, pad:-pad, pad:-pad]


def conv2d_forward(x, w, b, stride=1, pad=0):
    """Cross-correlation of ``x`` with filters ``w`` of shape ``(F, C, kh, kw)``."""
    n, c, h, wd = x.shape
    f, c_w, kh, kw = w.shape
    if c != c_w:
        raise ConfigError(f"conv expects {c_w} input channels, got {c}")
    ho = _out_size(h, kh, stride, pad)
    wo = _out_size(wd, kw, stride, pad)
    cols = _im2col(_pad(x, pad), kh, kw, stride, ho, wo)
    out = np.matmul(w.reshape(f, -1), cols)
    out += b.reshape(1, f, 1)
    return out.reshape(n, f, ho, wo)


def conv2d_backward(grad_out, x, w, stride=1, pad=0):
    """Gradients ``(dx, dw, db)`` of :func:`conv2d_forward`."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    ho, wo = grad_out.shape[2:]
    g = grad_out.reshape(n, f, ho * wo)
    cols = _im2col(_pad(x, pad), kh, kw, stride, ho, wo)
    dw = _batched_outer(g, cols).reshape(w.shape)
    db = g.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(f, -1).T, g)
    dxp = _col2im(dcols, (n, c, h + 2 * pad, wd + 2 * pad), kh, kw, stride, ho, wo)
    return _unpad(dxp, pad), dw, db


def conv_transpose2d_forward(x, w, b, stride=2, pad=1):
    """Transposed convolution with weights ``(C_in, C_out, kh, kw)``.

    This is the adjoint of :func:`conv2d_forward` with the same stride and
    padding, so ``H_out = (H - 1) * stride - 2 * pad + kh``.
    """
    n, c, h, wd = x.shape
    c_w, f, kh, kw = w.shape
    if c != c_w:
        raise ConfigError(f"transposed conv expects {c_w} input channels, got {c}")
    hp = (h - 1) * stride + kh
    wp = (wd - 1) * stride + kw
    if hp <= 2 * pad or wp <= 2 * pad:
        raise ConfigError("transposed conv output would be empty")
    cols = np.matmul(w.reshape(c, -1).T, x.reshape(n, c, h * wd))
    out = _unpad(_col2im(cols, (n, f, hp, wp), kh, kw, stride, h, wd), pad)
    out = out + b.reshape(1, f, 1, 1)
    return np.ascontiguousarray(out)


def conv_transpose2d_backward(grad_out, x, w, stride=2, pad=1):
    n, c, h, wd = x.shape
    _, f, kh, kw = w.shape
    cols = _im2col(_pad(grad_out, pad), kh, kw, stride, h, wd)
    xf = x.reshape(n, c, h * wd)
    dx = np.matmul(w.reshape(c, -1), cols).reshape(x.shape)
    dw = _batched_outer(xf, cols).reshape(w.shape)
    db = grad_out.sum(axis=(0, 2, 3))
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode="train",
                      eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel batch normalization.

    In ``train`` mode the batch statistics are used and the running
    statistics (updated in place) track them with ``momentum``. Returns
    ``(out, cache)``; the cache is None in eval mode.
    """
    c = x.shape[1]
    if gamma.shape[0] != c:
        raise ConfigError(f"batch norm has {gamma.shape[0]} channels, input has {c}")
    if mode == "train":
        axes = (0, 2, 3)
        count = x.size // c
        mean = x.mean(axis=axes)
        centered = x - mean.reshape(1, c, 1, 1)
        var = (centered * centered).mean(axis=axes)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std.reshape(1, c, 1, 1)
        unbiased = var * count / max(count - 1, 1)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean.astype(running_mean.dtype)
        running_var *= momentum
        running_var += (1 - momentum) * unbiased.astype(running_var.dtype)
        out = xhat * gamma.reshape(1, c, 1, 1) + beta.reshape(1, c, 1, 1)
        return out.astype(x.dtype, copy=False), (xhat, inv_std, gamma)
    if mode == "eval":
        inv_std = 1.0 / np.sqrt(running_var + eps)
        scale = (gamma * inv_std).astype(x.dtype)
        shift = (beta - running_mean * gamma * inv_std).astype(x.dtype)
        return x * scale.reshape(1, c, 1, 1) + shift.reshape(1, c, 1, 1), None
    raise ConfigError(f"unknown batch norm mode {mode!r}")


def batchnorm_backward(grad_out, cache):
    """Gradients ``(dx, dgamma, dbeta)`` of a train-mode batch norm."""
    xhat, inv_std, gamma = cache
    c = xhat.shape[1]
    axes = (0, 2, 3)
    count = xhat.size // c
    dbeta = grad_out.sum(axis=axes)
    dgamma = (grad_out * xhat).sum(axis=axes)
    dxhat = grad_out * gamma.reshape(1, c, 1, 1)
    dx = (dxhat - (dbeta * gamma / count).reshape(1, c, 1, 1)
          - xhat * (dgamma * gamma / count).reshape(1, c, 1, 1))
    dx *= inv_std.reshape(1, c, 1, 1)
    return dx.astype(grad_out.dtype, copy=False), dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, out):
    """ReLU gradient from the layer *output* (zero slope at the kink)."""
    return grad_out * (out > 0)


def maxpool2x2_forward(x):
    """2x2/stride-2 max pooling. Returns ``(out, argmax)``.

    Ties go to the first element in row-major window order.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigError(f"max pooling needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2x2_backward(grad_out, idx):
    n, c, ho, wo = grad_out.shape
    win = np.zeros((n, c, ho, wo, 4), dtype=grad_out.dtype)
    np.put_along_axis(win, idx[..., None], grad_out[..., None], axis=-1)
    win = win.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(n, c, ho * 2, wo * 2)


def concat_channels(*xs):
    shapes = {(x.shape[0],) + x.shape[2:] for x in xs}
    if len(shapes) != 1:
        raise ConfigError(f"cannot concatenate tensors of shapes {[x.shape for x in xs]}")
    return np.concatenate(xs, axis=1)


def split_channels(grad, sizes):
    """Backward of :func:`concat_channels`."""
    return np.split(grad, np.cumsum(sizes)[:-1], axis=1)


def broadcast_spatial(g, h, w):
    """Replicate a ``(N, C, 1, 1)`` feature over an ``h x w`` grid."""
    if g.shape[2:] != (1, 1):
        raise ConfigError(f"expected a 1x1 feature, got {g.shape}")
    return np.broadcast_to(g, g.shape[:2] + (h, w)).copy()


def broadcast_spatial_backward(grad):
    return grad.sum(axis=(2, 3), keepdims=True)


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype)
