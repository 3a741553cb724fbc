"""
Model Factory

Maps checkpoint kind tags to model classes.
"""

from typing import Dict, Type

from core.interfaces.model import BaseModel
from utils.errors import CheckpointError
from utils.logger import get_logger

logger = get_logger(__name__)


def _registry() -> Dict[str, Type[BaseModel]]:
    # Imported lazily: the model modules import core.checkpoint themselves
    from core.dgan import GeneratorBundle
    from services.downstream import ClassifierModel, ForecastModel, LogisticModel

    return {cls.kind: cls for cls in (GeneratorBundle, ForecastModel, LogisticModel, ClassifierModel)}


def model_class_for(kind: str) -> Type[BaseModel]:
    """
    Look up the model class for a checkpoint kind.

    Args:
        kind: 'dgan', 'forecaster', 'logistic' or 'lstm_classifier'

    Returns:
        BaseModel subclass
    """
    registry = _registry()
    if kind not in registry:
        raise CheckpointError(f"Unknown model kind '{kind}' (known: {sorted(registry)})")
    return registry[kind]
