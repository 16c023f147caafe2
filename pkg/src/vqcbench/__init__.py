"""Variational quantum circuit models for tabular learning, with a numpy simulator."""
from .archs import ModelConfig, HybridModel, count_params
from .exceptions import ConfigurationError, DataError

__version__ = "0.1.0"

__all__ = ["ModelConfig", "HybridModel", "count_params", "ConfigurationError", "DataError", "__version__"]
