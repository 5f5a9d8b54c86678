"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration values."""


class CheckpointError(RuntimeError):
    """Checkpoint file malformed or incompatible with the requested model."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to reach its tolerance."""
