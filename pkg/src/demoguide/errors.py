class DemoGuideError(Exception):
    """Base class for errors raised by demoguide."""


class ShapeError(DemoGuideError, ValueError):
    """Input dimensions do not match what the operation expects."""


class NonFiniteError(DemoGuideError, ValueError):
    """A NaN or infinity reached a place that requires finite values."""


class RolloutError(DemoGuideError):
    """Data collection had to abort; the message carries diagnostics."""


class DemoFormatError(DemoGuideError, ValueError):
    """A demonstration file could not be parsed."""


class ConfigError(DemoGuideError, ValueError):
    """An experiment or guidance configuration is invalid."""
