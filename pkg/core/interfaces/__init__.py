"""
Model Interfaces

Defines abstract base classes for checkpointable models.
"""

from .model import BaseModel

__all__ = ['BaseModel']
