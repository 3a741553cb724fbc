"""
Evaluation metrics: forecast errors, fidelity statistics and ROC analysis
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from statsmodels.tsa.stattools import acf

from utils.errors import ConfigError, DataError, ShapeError

MAPE_FLOOR = 0.01


def _pair(pred, truth) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.shape != truth.shape:
        raise ShapeError(f"length mismatch: {pred.size} predictions vs {truth.size} targets")
    if pred.size == 0:
        raise DataError("metrics need at least one point")
    return pred, truth


def rmse(pred, truth) -> float:
    """sqrt(mean((pred - truth)^2))"""
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


@dataclass(frozen=True)
class MapeResult:
    value: float
    included: int
    excluded: int


def mape_details(pred, truth, include_all: bool = False, floor: float = MAPE_FLOOR) -> MapeResult:
    """
    Mean absolute percentage error with the exclusion count.

    Points with |truth| < floor are excluded unless include_all is set
    (exact zeros are always excluded since the error is undefined there).
    """
    pred, truth = _pair(pred, truth)
    keep = np.abs(truth) > 0 if include_all else np.abs(truth) >= floor
    if not keep.any():
        raise DataError(f"every MAPE point has |truth| < {floor}")
    value = 100.0 * float(np.mean(np.abs(pred[keep] - truth[keep]) / np.abs(truth[keep])))
    return MapeResult(value=value, included=int(keep.sum()), excluded=int((~keep).sum()))


def mape(pred, truth, include_all: bool = False, floor: float = MAPE_FLOOR) -> float:
    """100 * mean(|pred - truth| / |truth|) over included points."""
    return mape_details(pred, truth, include_all, floor).value


def pearson_corr(a, b) -> float:
    """Product-moment correlation of two equal-length vectors."""
    a, b = _pair(a, b)
    if a.size < 2:
        raise DataError("correlation needs at least 2 points")
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt((da @ da) * (db @ db))
    if denom == 0:
        raise DataError("correlation undefined for a zero-variance input")
    return float(np.clip((da @ db) / denom, -1.0, 1.0))


@dataclass
class SampleAutocorr:
    """
    Within-sample autocorrelation averaged over samples.

    per_feature: (F, max_lag + 1), pooled: (max_lag + 1,) averaged over every
    (sample, feature) series that is not constant.
    """

    per_feature: np.ndarray
    pooled: np.ndarray
    used: np.ndarray
    skipped: int


def _series_acf(x: np.ndarray, max_lag: int) -> np.ndarray:
    # biased estimator: autocovariance divided by the full length
    return acf(x, nlags=max_lag, adjusted=False, fft=False)


def avg_sample_autocorr(samples, max_lag: int) -> SampleAutocorr:
    """
    Average lag-0..max_lag autocorrelation across samples, skipping constant ones.

    Args:
        samples: SampleSet or (n, T, F) array
        max_lag: Largest lag, must be < T
    """
    features = getattr(samples, 'features', samples)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ShapeError(f"expected (n, T, F) samples, got {features.shape}")
    n, T, F = features.shape
    if max_lag < 0 or max_lag >= T:
        raise ConfigError(f"max_lag must be in [0, {T}), got {max_lag}")

    sums = np.zeros((F, max_lag + 1))
    used = np.zeros(F, dtype=np.int64)
    for i in range(n):
        for f in range(F):
            x = features[i, :, f]
            if np.ptp(x) == 0:
                continue
            sums[f] += _series_acf(x, max_lag)
            used[f] += 1
    if used.sum() == 0:
        raise DataError("every sample is constant, autocorrelation is undefined")

    with np.errstate(invalid='ignore', divide='ignore'):
        per_feature = sums / used[:, None]
    return SampleAutocorr(
        per_feature=per_feature,
        pooled=sums.sum(axis=0) / used.sum(),
        used=used,
        skipped=int(n * F - used.sum()),
    )


def full_series_autocorr(values, max_lag: int) -> np.ndarray:
    """Autocorrelation of one undivided series at lags 0..max_lag."""
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if max_lag < 0 or max_lag >= x.size:
        raise ConfigError(f"max_lag must be in [0, {x.size}), got {max_lag}")
    if np.ptp(x) == 0:
        raise DataError("autocorrelation undefined for a constant series")
    return _series_acf(x, max_lag)


@dataclass
class Histogram:
    edges: np.ndarray
    masses: np.ndarray


def histogram(values, bins: int, value_range: Tuple[float, float]) -> Histogram:
    """
    Normalized bin masses over [lo, hi].

    Values outside the range are clamped into the first/last bin.
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    lo, hi = float(value_range[0]), float(value_range[1])
    if bins < 1 or not lo < hi:
        raise ConfigError(f"need bins >= 1 and lo < hi, got bins={bins}, range=({lo}, {hi})")
    if x.size == 0:
        raise DataError("histogram of an empty input")
    counts, edges = np.histogram(np.clip(x, lo, hi), bins=bins, range=(lo, hi))
    return Histogram(edges=edges, masses=counts / x.size)


def attribute_proportion(samples, name: str) -> float:
    """Share of samples whose indicator attribute is 1."""
    values = samples.attribute(name)
    if not np.isin(values, [0.0, 1.0]).all():
        raise DataError(f"Attribute '{name}' is not a 0/1 indicator")
    if values.size == 0:
        raise DataError("attribute proportion of an empty set")
    return float(values.mean())


@dataclass
class RocCurve:
    """
    Threshold sweep from +inf down through every distinct score.

    Point k predicts positive when score >= thresholds[k].
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def _binary_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if not np.isin(y, [0.0, 1.0]).all():
        raise DataError("labels must be 0/1")
    return y


def roc_auc(scores, labels) -> RocCurve:
    """
    ROC curve and trapezoidal AUC.

    Tied scores move both rates at once, so the area equals the probability
    that a random positive outscores a random negative with ties counted 1/2.
    """
    s, y = _pair(scores, labels)
    y = _binary_labels(y)
    positives, negatives = y.sum(), (1.0 - y).sum()
    if positives == 0 or negatives == 0:
        raise DataError("ROC needs both classes in the labels")

    order = np.argsort(-s, kind='mergesort')
    s, y = s[order], y[order]
    # last index of each run of equal scores
    last = np.flatnonzero(np.concatenate([s[1:] != s[:-1], [True]]))
    tp = np.cumsum(y)[last]
    fp = np.cumsum(1.0 - y)[last]

    tpr = np.concatenate([[0.0], tp / positives])
    fpr = np.concatenate([[0.0], fp / negatives])
    thresholds = np.concatenate([[np.inf], s[last]])
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc)


def rates_at_threshold(scores, labels, threshold: float) -> Tuple[float, float]:
    """(true positive rate, false positive rate) when predicting positive at score >= threshold."""
    s, y = _pair(scores, labels)
    y = _binary_labels(y)
    predicted = s >= threshold
    positives, negatives = y.sum(), (1.0 - y).sum()
    tpr = float((predicted & (y == 1)).sum() / positives) if positives else float('nan')
    fpr = float((predicted & (y == 0)).sum() / negatives) if negatives else float('nan')
    return tpr, fpr


def pooled_feature_values(samples, feature: int) -> np.ndarray:
    """All values of one feature across samples and days."""
    features = getattr(samples, 'features', samples)
    return np.asarray(features)[:, :, feature].reshape(-1)


def summary_stats(values: Sequence[float]) -> dict:
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    return {'mean': float(x.mean()), 'std': float(x.std()), 'min': float(x.min()), 'max': float(x.max())}
