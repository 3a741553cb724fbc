"""
Sample containers shared by the GAN and the downstream models.

SampleSet holds fixed-length multivariate segments with per-sample
attributes; SupervisedSet holds (input window, target) pairs for
forecasting or classification. Both persist as a binary container
(JSON manifest header + float64 payload) with a readable `.json`
manifest next to it.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from core.checkpoint import read_container, write_container
from utils.errors import DataError, ShapeError

FEATURE_NAMES = ['y1', 'y10']
PROVENANCES = ('real', 'synthetic', 'combined')
SET_FORMAT = 'yieldgan-set'


@dataclass
class SampleSet:
    """
    n_samples x T x F segments plus n_samples x A attributes.
    """

    features: np.ndarray
    attributes: np.ndarray
    attribute_schema: List[str]
    feature_names: List[str] = field(default_factory=lambda: list(FEATURE_NAMES))
    provenance: str = 'real'
    start_dates: Optional[List[str]] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.attributes = np.asarray(self.attributes, dtype=np.float64)
        if self.features.ndim != 3:
            raise ShapeError(f"features must be (n, T, F), got {self.features.shape}")
        n, _, F = self.features.shape
        if self.attributes.ndim != 2 or self.attributes.shape[0] != n:
            raise ShapeError(f"attributes must be ({n}, A), got {self.attributes.shape}")
        if self.attributes.shape[1] != len(self.attribute_schema):
            raise ShapeError("attribute_schema length does not match attribute columns")
        if F != len(self.feature_names):
            raise ShapeError("feature_names length does not match feature axis")
        if not np.all(np.isfinite(self.features)) or not np.all(np.isfinite(self.attributes)):
            raise DataError("SampleSet contains missing or non-finite entries")
        if self.provenance not in PROVENANCES:
            raise DataError(f"Unknown provenance '{self.provenance}'")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def T(self) -> int:
        return self.features.shape[1]

    @property
    def F(self) -> int:
        return self.features.shape[2]

    def attribute(self, name: str) -> np.ndarray:
        if name not in self.attribute_schema:
            raise DataError(f"Unknown attribute '{name}' (have {self.attribute_schema})")
        return self.attributes[:, self.attribute_schema.index(name)]

    def subset(self, index) -> 'SampleSet':
        index = np.asarray(index)
        return SampleSet(
            features=self.features[index],
            attributes=self.attributes[index],
            attribute_schema=list(self.attribute_schema),
            feature_names=list(self.feature_names),
            provenance=self.provenance,
            start_dates=[self.start_dates[i] for i in index] if self.start_dates else None,
        )

    def manifest(self) -> Dict[str, Any]:
        return {
            'format': SET_FORMAT,
            'type': 'sample_set',
            'shape': list(self.features.shape),
            'attribute_schema': list(self.attribute_schema),
            'feature_names': list(self.feature_names),
            'provenance': self.provenance,
            'start_dates': self.start_dates,
        }


@dataclass
class SupervisedSet:
    """
    Window/target pairs.

    kind='forecast': targets are n x H x F reals.
    kind='classify': targets are n binary labels and H is 0.
    """

    inputs: np.ndarray
    targets: np.ndarray
    kind: str
    provenance: str = 'real'
    dates: Optional[List[str]] = None
    feature_names: List[str] = field(default_factory=lambda: list(FEATURE_NAMES))

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.kind not in ('forecast', 'classify'):
            raise DataError(f"Unknown set kind '{self.kind}'")
        if self.inputs.ndim != 3:
            raise ShapeError(f"inputs must be (n, W, F), got {self.inputs.shape}")
        n = self.inputs.shape[0]
        if self.targets.shape[0] != n:
            raise ShapeError(f"{n} inputs but {self.targets.shape[0]} targets")
        if self.kind == 'forecast' and self.targets.ndim != 3:
            raise ShapeError(f"forecast targets must be (n, H, F), got {self.targets.shape}")
        if self.kind == 'classify':
            if self.targets.ndim != 1:
                raise ShapeError(f"classification targets must be (n,), got {self.targets.shape}")
            if not np.isin(self.targets, [0.0, 1.0]).all():
                raise DataError("classification targets must be 0/1")
        if self.provenance not in PROVENANCES:
            raise DataError(f"Unknown provenance '{self.provenance}'")
        if self.dates is not None and len(self.dates) != n:
            raise ShapeError("dates length does not match sample count")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def W(self) -> int:
        return self.inputs.shape[1]

    @property
    def F(self) -> int:
        return self.inputs.shape[2]

    @property
    def H(self) -> int:
        return self.targets.shape[1] if self.kind == 'forecast' else 0

    def manifest(self) -> Dict[str, Any]:
        return {
            'format': SET_FORMAT,
            'type': 'supervised_set',
            'kind': self.kind,
            'shape': list(self.inputs.shape),
            'target_shape': list(self.targets.shape),
            'feature_names': list(self.feature_names),
            'provenance': self.provenance,
            'dates': self.dates,
        }


def save_set(data, path, extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Persist a SampleSet or SupervisedSet.

    Writes the binary container at `path` and a `.json` manifest beside it.
    """
    path = Path(path)
    header = data.manifest()
    if extra:
        header['provenance_details'] = extra
    if isinstance(data, SampleSet):
        arrays = {'features': data.features, 'attributes': data.attributes}
    else:
        arrays = {'inputs': data.inputs, 'targets': data.targets}
    write_container(path, header, arrays)
    manifest_path = path.with_suffix(path.suffix + '.json')
    manifest_path.write_text(json.dumps(header, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path


def load_set(path):
    """Load a set written by save_set."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"File not found: {path}")
    header, arrays = read_container(path)
    if header.get('format') != SET_FORMAT:
        raise DataError(f"{path}: not a YieldGAN sample file")
    if header['type'] == 'sample_set':
        return SampleSet(
            features=arrays['features'],
            attributes=arrays['attributes'],
            attribute_schema=header['attribute_schema'],
            feature_names=header['feature_names'],
            provenance=header['provenance'],
            start_dates=header.get('start_dates'),
        )
    return SupervisedSet(
        inputs=arrays['inputs'],
        targets=arrays['targets'],
        kind=header['kind'],
        provenance=header['provenance'],
        dates=header.get('dates'),
        feature_names=header['feature_names'],
    )
