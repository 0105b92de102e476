"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An array has the wrong shape or an operation got inconsistent shapes."""


class ConfigError(ValueError):
    """A configuration value or key is invalid."""


class NonFiniteError(FloatingPointError):
    """A public operation produced NaN or Inf."""
