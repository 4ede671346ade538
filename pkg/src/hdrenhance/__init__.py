"""Low-light image enhancement learned from pairs synthesized out of HDR radiance maps."""

__version__ = "0.1.0"

from .estimators import EnhancementNet, HistogramEqualizer, PairSynthesizer
from .fusion import exposure_fuse
from .imageio import load_hdr, load_png, save_hdr, save_png
from .metrics import discrete_entropy, histogram_equalize, tmqi
from .synthpipe import generate_pair, synthesize

__all__ = [
    "EnhancementNet",
    "HistogramEqualizer",
    "PairSynthesizer",
    "discrete_entropy",
    "exposure_fuse",
    "generate_pair",
    "histogram_equalize",
    "load_hdr",
    "load_png",
    "save_hdr",
    "save_png",
    "synthesize",
    "tmqi",
]
