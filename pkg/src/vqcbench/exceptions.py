"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for invalid shapes, qubit counts or experiment settings."""


class DataError(RuntimeError):
    """Raised when a dataset file is missing, truncated or has the wrong schema."""
