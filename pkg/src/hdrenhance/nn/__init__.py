from .checkpoint import load_checkpoint, save_checkpoint
from .network import ArchitectureConfig, EnhancementNetwork, build_network, enhance_image

__all__ = [
    "ArchitectureConfig",
    "EnhancementNetwork",
    "build_network",
    "enhance_image",
    "load_checkpoint",
    "save_checkpoint",
]
