"""
Utility modules for YieldGAN
"""

from .errors import ConfigError, DataError, NumericalError, YieldGanError
from .logger import get_logger, setup_logger

__all__ = ['ConfigError', 'DataError', 'NumericalError', 'YieldGanError', 'get_logger', 'setup_logger']
