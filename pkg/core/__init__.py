"""
Core modules for YieldGAN: autodiff, layers, the DoppelGANger-style generator and checkpoints
"""

from .autodiff import Tape, Tensor
from .datasets import SampleSet, SupervisedSet

__all__ = ['Tape', 'Tensor', 'SampleSet', 'SupervisedSet']


__version__ = '0.1.0'
