"""Exception types shared across the package."""


class ValveNetError(Exception):
    """Base class for errors raised by this package."""


class ShapeMismatchError(ValveNetError, ValueError):
    """Two arrays that must agree in shape do not."""

    def __init__(self, what: str, expected, actual):
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"{what}: expected shape {self.expected}, got {self.actual}")


class CheckpointError(ValveNetError, ValueError):
    """A checkpoint file is malformed or incompatible."""


class LabelError(ValveNetError, ValueError):
    """A label plane contains an illegal class id or is inconsistent."""


class ConfigError(ValveNetError, ValueError):
    """A run configuration is malformed."""
