"""Exception hierarchy shared by every module."""


class HdrEnhanceError(Exception):
    """Base class for package errors."""


class ImageFormatError(HdrEnhanceError, ValueError):
    """A file does not follow the format it claims to be in."""


class TruncationError(ImageFormatError):
    """A file ended before all declared pixel data was read."""


class UnsupportedFeatureError(HdrEnhanceError, ValueError):
    """Valid input using a feature this package deliberately does not handle."""


class InputError(HdrEnhanceError, ValueError):
    """Arguments violate an operation's preconditions."""


class ConfigError(HdrEnhanceError, ValueError):
    """Inconsistent architecture, training or CLI configuration."""


class CheckpointError(HdrEnhanceError):
    """A checkpoint file is corrupt or does not match its manifest."""
