"""
Sampling Service

Builds every training/test set shape the experiments use:
- non-overlapping GAN segments with recession attributes
- rolling forecast windows with 1-day or 15-day targets
- rolling classifier windows labeled by a future-recession lookahead
- the same windows cut from synthetic segments, and set concatenation
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from core.datasets import SampleSet, SupervisedSet
from services.ingest import YieldPanel
from utils.errors import ConfigError, DataError, ShapeError
from utils.logger import get_logger

logger = get_logger(__name__)

RECESSION_ATTR = 'recession'
FUTURE_RECESSION_ATTR = 'future_recession'


@dataclass(frozen=True)
class AttributePlan:
    """
    Which indicator attributes to attach to GAN segments.

    Args:
        recession_in_window: 1 iff any recession day inside the segment
        future_recession_days: If set, 1 iff any recession day in that many
            trading days after the segment end
    """

    recession_in_window: bool = True
    future_recession_days: Optional[int] = None

    def __post_init__(self):
        if self.future_recession_days is not None and self.future_recession_days <= 0:
            raise ConfigError(f"future_recession_days must be positive, got {self.future_recession_days}")

    @property
    def schema(self) -> List[str]:
        names = []
        if self.recession_in_window:
            names.append(RECESSION_ATTR)
        if self.future_recession_days is not None:
            names.append(FUTURE_RECESSION_ATTR)
        return names


def _any_in_range(flags: np.ndarray, start: np.ndarray, stop: np.ndarray) -> np.ndarray:
    """1.0 where flags[start:stop] has a positive entry, per (start, stop) pair."""
    cumulative = np.concatenate([[0], np.cumsum(flags)])
    return (cumulative[stop] - cumulative[start] > 0).astype(np.float64)


def _window_index(n: int, start_offset: int, length: int) -> np.ndarray:
    return np.arange(n)[:, None] + start_offset + np.arange(length)[None, :]


def segment_gan_samples(panel: YieldPanel, T: int, plan: AttributePlan = AttributePlan()) -> SampleSet:
    """
    Split a panel into consecutive non-overlapping T-day segments.

    The trailing remainder is dropped. When the plan asks for the
    future-recession attribute, segments whose lookahead runs past the panel
    end are dropped too.

    Args:
        panel: Source panel
        T: Segment length in trading days
        plan: Attributes to attach

    Returns:
        SampleSet with provenance 'real'
    """
    if T <= 0:
        raise ConfigError(f"Segment length must be positive, got {T}")
    if len(panel) < T:
        raise DataError(f"Panel of {len(panel)} days is shorter than one {T}-day segment")

    n = len(panel) // T
    starts = np.arange(n) * T
    ends = starts + T
    h = plan.future_recession_days
    if h is not None:
        keep = ends + h <= len(panel)
        if not keep.all():
            logger.info(f"Dropping {int((~keep).sum())} trailing segments without a full {h}-day lookahead")
        starts, ends = starts[keep], ends[keep]
    if len(starts) == 0:
        raise DataError("No segment has a complete recession lookahead")

    features = panel.features[starts[:, None] + np.arange(T)[None, :]]
    flags = panel.recession
    columns = []
    if plan.recession_in_window:
        columns.append(_any_in_range(flags, starts, ends))
    if h is not None:
        columns.append(_any_in_range(flags, ends, ends + h))
    attributes = np.stack(columns, axis=1) if columns else np.zeros((len(starts), 0))

    dates = panel.iso_dates()
    samples = SampleSet(
        features=features,
        attributes=attributes,
        attribute_schema=plan.schema,
        provenance='real',
        start_dates=[dates[s] for s in starts],
    )
    logger.info(f"✂️  {len(samples)} GAN segments of {T} days (attributes: {plan.schema})")
    return samples


def rolling_windows(panel: YieldPanel, W: int, H: int) -> SupervisedSet:
    """
    Rolling forecast windows: input days [i, i+W), target days [i+W, i+W+H).

    Produces len - W - H + 1 samples. dates holds the last input day of each window.
    """
    if W <= 0 or H <= 0:
        raise ConfigError(f"Window and horizon must be positive, got W={W}, H={H}")
    n = len(panel) - W - H + 1
    if n <= 0:
        raise DataError(f"Panel of {len(panel)} days is too short for W={W}, H={H}")

    data = panel.features
    inputs = data[_window_index(n, 0, W)]
    targets = data[_window_index(n, W, H)]
    dates = panel.iso_dates()
    return SupervisedSet(
        inputs=inputs,
        targets=targets,
        kind='forecast',
        provenance='real',
        dates=[dates[i + W - 1] for i in range(n)],
    )


def rolling_classifier_windows(panel: YieldPanel, W: int, h: int,
                               label_source: Optional[YieldPanel] = None) -> SupervisedSet:
    """
    Rolling W-day windows labeled 1 iff a recession day falls within the h
    trading days after the window.

    Args:
        panel: Panel providing the input windows
        W: Window length
        h: Label lookahead in trading days
        label_source: Panel extending past `panel`'s last date whose recession
            flags label the final windows; without it those windows are dropped

    Returns:
        SupervisedSet of kind 'classify'
    """
    if W <= 0 or h <= 0:
        raise ConfigError(f"Window and lookahead must be positive, got W={W}, h={h}")
    if len(panel) < W:
        raise DataError(f"Panel of {len(panel)} days is shorter than the {W}-day window")

    flags = panel.recession
    if label_source is not None:
        later = label_source.dates > panel.dates[-1]
        flags = np.concatenate([flags, label_source.recession[later]])

    n = min(len(panel) - W + 1, len(flags) - W - h + 1)
    if n <= 0:
        raise DataError(f"No {W}-day window has a complete {h}-day label lookahead")
    dropped = len(panel) - W + 1 - n
    if dropped:
        logger.info(f"Dropped {dropped} windows whose {h}-day lookahead has no recession data")

    starts = np.arange(n)
    labels = _any_in_range(flags, starts + W, starts + W + h)
    dates = panel.iso_dates()
    return SupervisedSet(
        inputs=panel.features[_window_index(n, 0, W)],
        targets=labels,
        kind='classify',
        provenance='real',
        dates=[dates[i + W - 1] for i in range(n)],
    )


def windows_from_synthetic(samples: SampleSet, W: int, H: int = 0,
                           label_attribute: Optional[str] = None) -> SupervisedSet:
    """
    Rolling windows cut inside each segment, never across segment boundaries.

    Forecast use (label_attribute None): H >= 1, T - W - H + 1 windows per segment.
    Classification use: H must be 0; every window of a segment carries that
    segment's `label_attribute` value, T - W + 1 windows per segment.
    """
    classify = label_attribute is not None
    if W <= 0 or H < 0 or (not classify and H == 0):
        raise ConfigError(f"Invalid window W={W}, H={H}")
    if classify and H != 0:
        raise ConfigError("Classification windows take their label from the segment, use H=0")
    if samples.T < W + H:
        raise DataError(f"Segments of {samples.T} days cannot hold W={W} plus H={H}")

    per_segment = samples.T - W - H + 1
    input_index = _window_index(per_segment, 0, W)
    inputs = samples.features[:, input_index].reshape(-1, W, samples.F)

    if classify:
        labels = samples.attribute(label_attribute)
        if not np.isin(labels, [0.0, 1.0]).all():
            raise DataError(f"Attribute '{label_attribute}' is not a 0/1 indicator")
        targets = np.repeat(labels, per_segment)
        kind = 'classify'
    else:
        targets = samples.features[:, _window_index(per_segment, W, H)].reshape(-1, H, samples.F)
        kind = 'forecast'

    out = SupervisedSet(inputs=inputs, targets=targets, kind=kind, provenance=samples.provenance)
    logger.info(f"🧩 {len(out)} {kind} windows from {len(samples)} {samples.provenance} segments")
    return out


def combine_sets(a: SupervisedSet, b: SupervisedSet) -> SupervisedSet:
    """
    Concatenate two supervised sets (a first). An empty operand returns the other.
    """
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    if a.kind != b.kind:
        raise ShapeError(f"Cannot combine '{a.kind}' with '{b.kind}' sets")
    if a.inputs.shape[1:] != b.inputs.shape[1:] or a.targets.shape[1:] != b.targets.shape[1:]:
        raise ShapeError(
            f"Cannot combine sets with inputs {a.inputs.shape[1:]}/{b.inputs.shape[1:]} "
            f"and targets {a.targets.shape[1:]}/{b.targets.shape[1:]}"
        )
    dates = a.dates + b.dates if a.dates is not None and b.dates is not None else None
    return SupervisedSet(
        inputs=np.concatenate([a.inputs, b.inputs]),
        targets=np.concatenate([a.targets, b.targets]),
        kind=a.kind,
        provenance=a.provenance if a.provenance == b.provenance else 'combined',
        dates=dates,
        feature_names=list(a.feature_names),
    )
