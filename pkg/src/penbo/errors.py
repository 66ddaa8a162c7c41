"""Shared exception types."""


class DimensionError(ValueError):
    """Vector or table dimensions do not line up."""


class NonFiniteError(ArithmeticError):
    """A NaN or Inf appeared where a finite number is required."""


class UnsupportedEnvError(TypeError):
    """Operation requires a finite (enumerable) environment."""


class ConfigError(ValueError):
    """Run configuration failed validation."""
