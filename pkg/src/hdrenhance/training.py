"""Training loop: online pair synthesis, MSE loss, Adam updates, checkpoints."""

import csv
import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .nn.checkpoint import save_checkpoint
from .nn.functional import mse_loss
from .nn.network import ArchitectureConfig, EnhancementNetwork
from .synthpipe import PATCH_SIZE, pair_seed, synthesize
from .utils.validation import ldr_to_float

logger = logging.getLogger(__name__)

# pair streams are keyed [epoch, iter, k] with epoch >= 1, so epoch 0 is free
INIT_STREAM = (0, 0)
ORDER_STREAM = (0, 1)
FIXED_STREAM = 2


@dataclass
class AdamState:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """In-place Adam update with bias correction for every key in ``grads``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)).astype(p.dtype)
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 500
    iterations_per_epoch: int = 51
    batch_size: int = 16
    seed: int = 0
    width_scale: float = 1.0
    use_global_encoder: bool = True
    ckpt_every: int = 50
    patch_size: int = PATCH_SIZE
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    precompute: bool = False

    def validate(self):
        for name in ("epochs", "iterations_per_epoch", "batch_size", "ckpt_every", "patch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.patch_size % 16:
            raise ConfigError("patch_size must be a multiple of 16")
        ArchitectureConfig(self.use_global_encoder, self.width_scale).layer_specs()
        return self


def batches_for_epoch(n_images, cfg, rng):
    """Corpus indices for each iteration of one epoch.

    The corpus is shuffled and walked without replacement, so an image is
    used at most once per epoch; the last batch may be short and the epoch
    ends early when the corpus runs out.
    """
    order = rng.permutation(n_images)
    out = []
    for it in range(cfg.iterations_per_epoch):
        chunk = order[it * cfg.batch_size:(it + 1) * cfg.batch_size]
        if chunk.size == 0:
            break
        out.append(chunk)
    return out


def make_batch(corpus, indices, seeds, patch_size, sources=None):
    xs, ys = [], []
    for idx, seed in zip(indices, seeds):
        src = None if sources is None else sources[idx]
        x, y, _, _ = synthesize(corpus[idx], seed, size=patch_size, source=src)
        xs.append(x)
        ys.append(y)
    return _to_nchw(xs), _to_nchw(ys)


def _to_nchw(images):
    return np.ascontiguousarray(ldr_to_float(np.stack(images)).transpose(0, 3, 1, 2))


def train_step(net, state, x, y):
    pred = net.forward(x, mode="train")
    loss, grad = mse_loss(pred, y)
    grads = net.backward(grad)
    adam_step(net.params, grads, state)
    return loss


def fit_pairs(net, inputs, targets, n_steps, state=None, callback=None):
    """Optimize on a fixed batch of float NCHW pairs; returns the loss history."""
    state = state if state is not None else AdamState()
    losses = []
    for step in range(n_steps):
        loss = train_step(net, state, inputs, targets)
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss became {loss} at step {step}")
        losses.append(loss)
        if callback is not None and callback(step, loss) is False:
            break
    return losses


def train(corpus, cfg, out_dir=None, sources=None, net=None):
    """Train on a list of HDR images.

    Each iteration picks a batch of distinct corpus images, synthesizes one
    fresh pair per image, and takes one Adam step on the MSE. When
    ``out_dir`` is given, ``loss_log.csv``, ``train_config.json`` and
    ``ckpt_epoch{N}.nncp`` files are written there.

    Returns ``(net, loss_rows)`` with rows ``(epoch, iteration, loss)``.
    """
    cfg.validate()
    if len(corpus) == 0:
        raise InputError("training corpus is empty")
    if len(corpus) < cfg.batch_size:
        warnings.warn(f"corpus has {len(corpus)} images, fewer than batch size {cfg.batch_size}; "
                      "batches will be smaller", stacklevel=2)
    arch = ArchitectureConfig(cfg.use_global_encoder, cfg.width_scale)
    if net is None:
        net = EnhancementNetwork(arch, rng=np.random.Generator(np.random.PCG64(pair_seed(cfg.seed, INIT_STREAM))))
    state = AdamState(lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
    order_rng = np.random.Generator(np.random.PCG64(pair_seed(cfg.seed, ORDER_STREAM)))

    log_fh = writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "train_config.json"), "w") as fh:
            json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        log_fh = open(os.path.join(out_dir, "loss_log.csv"), "w", newline="")
        writer = csv.writer(log_fh, lineterminator="\n")
        writer.writerow(["epoch", "iter", "loss"])

    fixed = {}

    def batch(epoch, it, indices):
        if not cfg.precompute:
            seeds = [pair_seed(cfg.seed, [epoch, it, k]) for k in range(len(indices))]
            return make_batch(corpus, indices, seeds, cfg.patch_size, sources)
        # one frozen pair per image, drawn the first time the image comes up
        for idx in indices:
            if idx not in fixed:
                fixed[idx] = make_batch(corpus, [idx], [pair_seed(cfg.seed, [0, FIXED_STREAM, idx])],
                                        cfg.patch_size, sources)
        return tuple(np.concatenate([fixed[idx][j] for idx in indices]) for j in (0, 1))

    rows = []
    try:
        for epoch in range(1, cfg.epochs + 1):
            for it, indices in enumerate(batches_for_epoch(len(corpus), cfg, order_rng), 1):
                x, y = batch(epoch, it, indices)
                loss = train_step(net, state, x, y)
                if not np.isfinite(loss):
                    raise FloatingPointError(f"loss became {loss} at epoch {epoch}, iteration {it}")
                rows.append((epoch, it, loss))
                if writer is not None:
                    writer.writerow([epoch, it, repr(loss)])
                    log_fh.flush()
                logger.info("epoch %d iter %d loss %.6f", epoch, it, loss)
            if out_dir is not None and (epoch % cfg.ckpt_every == 0 or epoch == cfg.epochs):
                save_checkpoint(os.path.join(out_dir, f"ckpt_epoch{epoch}.nncp"), net,
                                extra={"epoch": epoch, "seed": cfg.seed})
    finally:
        if log_fh is not None:
            log_fh.close()
    return net, rows
