"""Local-encoder / global-encoder / decoder enhancement network.

The local encoder and decoder form a U-Net with concatenated skips. The
global encoder sees a fixed 128x128 resize of the input and reduces it to a
single feature vector, which is broadcast over the bottleneck grid and
concatenated with the bottleneck features before decoding.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, InputError
from ..imageio import resize_bilinear
from ..utils.validation import check_ldr_image, check_random_state, float_to_ldr, ldr_to_float
from . import functional as F

LOCAL_FILTERS = (32, 64, 128, 256)
BOTTLENECK_FILTERS = 512
GLOBAL_FILTERS = 64
GLOBAL_INPUT_SIZE = 128
GLOBAL_BLOCKS = 5
SIZE_MULTIPLE = 2 ** len(LOCAL_FILTERS)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # "conv" or "tconv"
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    pad: int
    batchnorm: bool = True
    relu: bool = True

    @property
    def weight_shape(self):
        k = self.kernel
        if self.kind == "tconv":
            return (self.in_channels, self.out_channels, k, k)
        return (self.out_channels, self.in_channels, k, k)

    @property
    def fan_in(self):
        # A stride-s transposed conv feeds each output from (k/s)^2 taps per input channel.
        taps = self.kernel**2 if self.kind == "conv" else (self.kernel // self.stride) ** 2
        return self.in_channels * taps


@dataclass(frozen=True)
class ArchitectureConfig:
    """Architecture switches.

    ``width_scale`` multiplies every filter count (local, global and
    decoder); the products must be whole numbers.
    """

    use_global_encoder: bool = True
    width_scale: float = 1.0

    def width(self, k):
        scaled = k * self.width_scale
        if scaled < 1 or abs(scaled - round(scaled)) > 1e-9:
            raise ConfigError(f"width_scale={self.width_scale} turns {k} filters into {scaled}")
        return int(round(scaled))

    @property
    def global_width(self):
        return self.width(GLOBAL_FILTERS)

    def layer_specs(self):
        """Ordered layer descriptors; the order is also the parameter order."""
        specs = []

        def conv(name, cin, cout, k=3, pad=1, **kw):
            specs.append(LayerSpec(name, "conv", cin, cout, k, 1, pad, **kw))

        cin = 3
        for level, k in enumerate(LOCAL_FILTERS, 1):
            cout = self.width(k)
            conv(f"local.enc{level}.conv1", cin, cout)
            conv(f"local.enc{level}.conv2", cout, cout)
            cin = cout
        bott = self.width(BOTTLENECK_FILTERS)
        conv("local.bottleneck.conv1", cin, bott)
        conv("local.bottleneck.conv2", bott, bott)

        if self.use_global_encoder:
            g = self.global_width
            gin = 3
            for block in range(1, GLOBAL_BLOCKS + 1):
                conv(f"global.block{block}.conv", gin, g)
                gin = g
            conv("global.head.conv", g, g, k=4, pad=0)

        cin = bott + (self.global_width if self.use_global_encoder else 0)
        for level, k in zip(range(len(LOCAL_FILTERS), 0, -1), reversed(LOCAL_FILTERS)):
            cout = self.width(k)
            specs.append(LayerSpec(f"decoder.up{level}.tconv", "tconv", cin, cout, 4, 2, 1))
            conv(f"decoder.up{level}.conv1", 2 * cout, cout)
            conv(f"decoder.up{level}.conv2", cout, cout)
            cin = cout
        conv("decoder.out.conv", cin, 3, batchnorm=False)
        return specs


def param_names(spec):
    names = [f"{spec.name}.weight", f"{spec.name}.bias"]
    if spec.batchnorm:
        names += [f"{spec.name}.bn.gamma", f"{spec.name}.bn.beta"]
    return names


def buffer_names(spec):
    if spec.batchnorm:
        return [f"{spec.name}.bn.running_mean", f"{spec.name}.bn.running_var"]
    return []


def build_network(cfg, rng=None, dtype=np.float32):
    """He-initialized parameters and batch-norm buffers for ``cfg``.

    Returns an ordered dict ``name -> array``: weights ~ N(0, 2/fan_in),
    zero biases, unit BN scale, zero BN shift, running stats (0, 1).
    """
    rng = check_random_state(rng)
    params = {}
    for spec in cfg.layer_specs():
        std = np.sqrt(2.0 / spec.fan_in)
        params[f"{spec.name}.weight"] = (rng.standard_normal(spec.weight_shape) * std).astype(dtype)
        params[f"{spec.name}.bias"] = np.zeros(spec.out_channels, dtype=dtype)
        if spec.batchnorm:
            params[f"{spec.name}.bn.gamma"] = np.ones(spec.out_channels, dtype=dtype)
            params[f"{spec.name}.bn.beta"] = np.zeros(spec.out_channels, dtype=dtype)
            params[f"{spec.name}.bn.running_mean"] = np.zeros(spec.out_channels, dtype=dtype)
            params[f"{spec.name}.bn.running_var"] = np.ones(spec.out_channels, dtype=dtype)
    return params


class EnhancementNetwork:
    """Forward/backward driver over a parameter dict.

    ``forward`` records what ``backward`` needs; ``backward`` returns a dict
    of gradients keyed like the trainable parameters.
    """

    def __init__(self, cfg=None, params=None, rng=None, dtype=np.float32, debug=False):
        self.cfg = cfg if cfg is not None else ArchitectureConfig()
        self.specs = {s.name: s for s in self.cfg.layer_specs()}
        self.params = params if params is not None else build_network(self.cfg, rng, dtype)
        self.debug = debug
        self._tape = None
        self._check_params()

    def _check_params(self):
        for spec in self.specs.values():
            expected = {f"{spec.name}.weight": spec.weight_shape,
                        f"{spec.name}.bias": (spec.out_channels,)}
            for name in param_names(spec)[2:] + buffer_names(spec):
                expected[name] = (spec.out_channels,)
            for name, shape in expected.items():
                if name not in self.params:
                    raise ConfigError(f"missing parameter {name}")
                if tuple(self.params[name].shape) != shape:
                    raise ConfigError(f"{name} has shape {self.params[name].shape}, expected {shape}")

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def trainable_names(self):
        return [n for s in self.specs.values() for n in param_names(s)]

    def n_parameters(self):
        return sum(self.params[n].size for n in self.trainable_names())

    def astype(self, dtype):
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        return EnhancementNetwork(self.cfg, params, debug=self.debug)

    # -- single layers ---------------------------------------------------

    def _layer_forward(self, name, x, mode):
        spec = self.specs[name]
        p = self.params
        w, b = p[f"{name}.weight"], p[f"{name}.bias"]
        if spec.kind == "conv":
            out = F.conv2d_forward(x, w, b, spec.stride, spec.pad)
        else:
            out = F.conv_transpose2d_forward(x, w, b, spec.stride, spec.pad)
        bn_cache = None
        if spec.batchnorm:
            out, bn_cache = F.batchnorm_forward(
                out, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"],
                p[f"{name}.bn.running_mean"], p[f"{name}.bn.running_var"], mode)
        if spec.relu:
            out = F.relu_forward(out)
        if self.debug and not np.all(np.isfinite(out)):
            raise FloatingPointError(f"non-finite activations after {name}")
        if self._tape is not None:
            self._tape[name] = (x, bn_cache, out)
        return out

    def _layer_backward(self, name, grad, grads):
        spec = self.specs[name]
        x, bn_cache, out = self._tape.pop(name)
        if spec.relu:
            grad = F.relu_backward(grad, out)
        if spec.batchnorm:
            grad, grads[f"{name}.bn.gamma"], grads[f"{name}.bn.beta"] = F.batchnorm_backward(grad, bn_cache)
        w = self.params[f"{name}.weight"]
        if spec.kind == "conv":
            dx, dw, db = F.conv2d_backward(grad, x, w, spec.stride, spec.pad)
        else:
            dx, dw, db = F.conv_transpose2d_backward(grad, x, w, spec.stride, spec.pad)
        grads[f"{name}.weight"] = dw
        grads[f"{name}.bias"] = db
        return dx

    # -- whole network ---------------------------------------------------

    def global_feature(self, gx, mode="eval"):
        """Run the global encoder on an already-resized ``(N, 3, 128, 128)`` input."""
        h = gx
        for block in range(1, GLOBAL_BLOCKS + 1):
            h = self._layer_forward(f"global.block{block}.conv", h, mode)
            h, idx = F.maxpool2x2_forward(h)
            if self._tape is not None:
                self._tape[f"global.pool{block}"] = idx
        return self._layer_forward("global.head.conv", h, mode)

    def forward(self, x, mode="train", global_input=None):
        """Enhance a batch ``x`` of shape ``(N, 3, H, W)``, H and W divisible by 16.

        ``global_input`` overrides the image the global encoder is resized
        from (used at inference to ignore reflect padding).
        ``mode="train"`` uses batch statistics and records a tape for
        :meth:`backward`; ``"eval"`` uses running statistics.
        """
        if mode not in ("train", "eval"):
            raise ConfigError(f"unknown mode {mode!r}")
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != 3:
            raise InputError(f"expected input of shape (N, 3, H, W), got {x.shape}")
        n, _, h, w = x.shape
        if h % SIZE_MULTIPLE or w % SIZE_MULTIPLE:
            raise InputError(f"spatial dims must be multiples of {SIZE_MULTIPLE}, got {h}x{w}")
        self._tape = {} if mode == "train" else None

        skips = []
        feat = x
        for level in range(1, len(LOCAL_FILTERS) + 1):
            feat = self._layer_forward(f"local.enc{level}.conv1", feat, mode)
            feat = self._layer_forward(f"local.enc{level}.conv2", feat, mode)
            skips.append(feat)
            feat, idx = F.maxpool2x2_forward(feat)
            if self._tape is not None:
                self._tape[f"local.pool{level}"] = idx
        feat = self._layer_forward("local.bottleneck.conv1", feat, mode)
        feat = self._layer_forward("local.bottleneck.conv2", feat, mode)

        if self.cfg.use_global_encoder:
            src = x if global_input is None else np.asarray(global_input, dtype=self.dtype)
            gx = resize_bilinear(src, GLOBAL_INPUT_SIZE, GLOBAL_INPUT_SIZE, axes=(2, 3)).astype(self.dtype)
            g = self.global_feature(gx, mode)
            self.last_global_feature = g
            feat = F.concat_channels(feat, F.broadcast_spatial(g, *feat.shape[2:]))

        for level in range(len(LOCAL_FILTERS), 0, -1):
            up = self._layer_forward(f"decoder.up{level}.tconv", feat, mode)
            feat = F.concat_channels(up, skips[level - 1])
            feat = self._layer_forward(f"decoder.up{level}.conv1", feat, mode)
            feat = self._layer_forward(f"decoder.up{level}.conv2", feat, mode)
        return self._layer_forward("decoder.out.conv", feat, mode)

    def backward(self, grad_out):
        """Gradients of every trainable parameter given ``dLoss/dOutput``."""
        if not self._tape:
            raise RuntimeError("backward needs a preceding train-mode forward")
        grads = {}
        grad = self._layer_backward("decoder.out.conv", grad_out, grads)
        skip_grads = {}
        for level in range(1, len(LOCAL_FILTERS) + 1):
            grad = self._layer_backward(f"decoder.up{level}.conv2", grad, grads)
            grad = self._layer_backward(f"decoder.up{level}.conv1", grad, grads)
            up_ch = self.specs[f"decoder.up{level}.tconv"].out_channels
            grad, skip_grads[level] = F.split_channels(grad, [up_ch, grad.shape[1] - up_ch])
            grad = self._layer_backward(f"decoder.up{level}.tconv", grad, grads)

        if self.cfg.use_global_encoder:
            bott = self.specs["local.bottleneck.conv2"].out_channels
            grad, g_grad = F.split_channels(grad, [bott, grad.shape[1] - bott])
            g_grad = self._layer_backward("global.head.conv", F.broadcast_spatial_backward(g_grad), grads)
            for block in range(GLOBAL_BLOCKS, 0, -1):
                g_grad = F.maxpool2x2_backward(g_grad, self._tape.pop(f"global.pool{block}"))
                g_grad = self._layer_backward(f"global.block{block}.conv", g_grad, grads)

        grad = self._layer_backward("local.bottleneck.conv2", grad, grads)
        grad = self._layer_backward("local.bottleneck.conv1", grad, grads)
        for level in range(len(LOCAL_FILTERS), 0, -1):
            grad = F.maxpool2x2_backward(grad, self._tape.pop(f"local.pool{level}"))
            grad = grad + skip_grads[level]
            grad = self._layer_backward(f"local.enc{level}.conv2", grad, grads)
            grad = self._layer_backward(f"local.enc{level}.conv1", grad, grads)
        self._tape = None
        return grads

    def enhance(self, img):
        return enhance_image(self, img)


def config_to_dict(cfg):
    return asdict(cfg)


def config_from_dict(d):
    return ArchitectureConfig(use_global_encoder=bool(d["use_global_encoder"]),
                              width_scale=float(d["width_scale"]))


def enhance_image(net, img):
    """Enhance one uint8 ``(H, W, 3)`` image of any size >= 16x16.

    The image is reflect-padded up to multiples of 16 for the local path,
    while the global path sees the unpadded image.
    """
    img = check_ldr_image(img)
    h, w = img.shape[:2]
    if h < SIZE_MULTIPLE or w < SIZE_MULTIPLE:
        raise InputError(f"image must be at least {SIZE_MULTIPLE}x{SIZE_MULTIPLE}, got {w}x{h}")
    x = ldr_to_float(img).transpose(2, 0, 1)[None]
    ph = -h % SIZE_MULTIPLE
    pw = -w % SIZE_MULTIPLE
    padded = np.pad(x, ((0, 0), (0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2)), mode="reflect")
    out = net.forward(padded, mode="eval", global_input=x)
    out = out[0, :, ph // 2:ph // 2 + h, pw // 2:pw // 2 + w].transpose(1, 2, 0)
    return float_to_ldr(out)
