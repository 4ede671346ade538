"""scikit-learn style front ends.

``fit`` takes a list of HDR radiance maps, ``transform`` / ``predict``
take a single LDR image or a list of them.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .metrics.quality import histogram_equalize
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.network import enhance_image
from .synthpipe import PATCH_SIZE, pair_seed, synthesize
from .training import TrainConfig, train
from .utils.validation import check_hdr_image, check_ldr_image


def _map_images(fn, X):
    if isinstance(X, np.ndarray) and X.ndim == 3:
        return fn(check_ldr_image(X))
    return [fn(check_ldr_image(img, f"X[{i}]")) for i, img in enumerate(X)]


class EnhancementNet(TransformerMixin, BaseEstimator):
    """Learned low-light enhancer trained on pairs synthesized from HDR images.

    Attributes set by ``fit``: ``net_`` (the trained network) and
    ``loss_curve_`` (one loss per Adam step).
    """

    def __init__(self, width_scale=1.0, use_global_encoder=True, epochs=500,
                 iterations_per_epoch=51, batch_size=16, patch_size=PATCH_SIZE,
                 learning_rate=0.002, random_state=0):
        self.width_scale = width_scale
        self.use_global_encoder = use_global_encoder
        self.epochs = epochs
        self.iterations_per_epoch = iterations_per_epoch
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs, iterations_per_epoch=self.iterations_per_epoch,
            batch_size=self.batch_size, seed=self.random_state, width_scale=self.width_scale,
            use_global_encoder=self.use_global_encoder, patch_size=self.patch_size,
            learning_rate=self.learning_rate,
        ).validate()

    def fit(self, X, y=None, out_dir=None):
        corpus = [check_hdr_image(E, f"X[{i}]") for i, E in enumerate(X)]
        self.net_, rows = train(corpus, self._train_config(), out_dir=out_dir)
        self.loss_curve_ = [loss for _, _, loss in rows]
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("call fit or load before transform")

    def transform(self, X):
        self._check_fitted()
        return _map_images(lambda img: enhance_image(self.net_, img), X)

    def predict(self, X):
        return self.transform(X)

    def save(self, path):
        self._check_fitted()
        save_checkpoint(path, self.net_, extra={"estimator": self.get_params()})

    @classmethod
    def load(cls, path):
        net = load_checkpoint(path)
        est = cls(width_scale=net.cfg.width_scale, use_global_encoder=net.cfg.use_global_encoder)
        est.net_ = net
        return est


class HistogramEqualizer(TransformerMixin, BaseEstimator):
    """Global histogram equalization baseline; ``fit`` learns nothing."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return _map_images(histogram_equalize, X)


class PairSynthesizer(BaseEstimator):
    """Draws one (dark input, enhanced target) training pair per HDR image."""

    def __init__(self, size=PATCH_SIZE, random_state=0):
        self.size = size
        self.random_state = random_state

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        """Return ``(inputs, targets, provenance)`` lists aligned with ``X``."""
        xs, ys, prov = [], [], []
        for i, E in enumerate(X):
            x, y, p, _ = synthesize(check_hdr_image(E, f"X[{i}]"), pair_seed(self.random_state, [i]),
                                    size=self.size)
            xs.append(x)
            ys.append(y)
            prov.append(p)
        return xs, ys, prov

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
