"""
BaseModel Interface

Defines the contract every checkpointable model follows.
This lets the checkpoint module save and restore generators, forecasters
and classifiers through one code path.
"""

from abc import ABC, abstractmethod
from typing import Any, ClassVar, Dict, Optional

import numpy as np

from core import autodiff as ad
from core.autodiff import Tape, Tensor


class BaseModel(ABC):
    """
    Abstract base class for trainable models.

    Subclasses own a flat name -> float64 array parameter dict and expose
    the extra state a checkpoint needs to rebuild them exactly.
    """

    kind: ClassVar[str] = ''

    params: Dict[str, np.ndarray]

    @abstractmethod
    def config_snapshot(self) -> Dict[str, Any]:
        """
        Training/architecture configuration needed to rebuild the model.

        Returns:
            JSON-serializable dict
        """
        pass

    @abstractmethod
    def statistics(self) -> Dict[str, Any]:
        """
        Data-derived state (normalization statistics, schemas).

        Returns:
            JSON-serializable dict
        """
        pass

    @classmethod
    @abstractmethod
    def from_state(cls, params: Dict[str, np.ndarray], config: Dict[str, Any],
                   statistics: Dict[str, Any]) -> 'BaseModel':
        """
        Rebuild a model from checkpoint contents.

        Args:
            params: Named parameter arrays
            config: Output of config_snapshot()
            statistics: Output of statistics()

        Returns:
            Model instance
        """
        pass

    def bind(self, tape: Optional[Tape] = None) -> Dict[str, Tensor]:
        """
        Expose parameters as tensors.

        With a tape the tensors are differentiable leaves; without one they
        are constants and nothing is recorded.
        """
        if tape is None:
            return ad.constants(self.params)
        return tape.leaves(self.params)

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))
