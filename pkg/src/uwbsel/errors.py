"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when a parameter set, configuration, or input violates its contract."""


class CheckpointError(ValidationError):
    """Raised when a network checkpoint is malformed or shape-incompatible."""
