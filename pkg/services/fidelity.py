"""
Fidelity Service

Compares generated samples with the real training samples: cross-feature
correlation, value histograms, averaged within-sample and full-series
autocorrelation, attribute proportions and diversity.
"""

from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from core.datasets import SampleSet
from core.dgan import diversity_score
from services.reports import CSV_OPTIONS, FidelityReport
from utils.errors import DataError
from utils.logger import get_logger
from utils.metrics import (SampleAutocorr, attribute_proportion, avg_sample_autocorr, full_series_autocorr,
                           histogram, pearson_corr, pooled_feature_values, summary_stats)

logger = get_logger(__name__)


def inversion_fraction(samples: SampleSet) -> float:
    """Share of samples with at least one day where the short yield exceeds the long one."""
    if samples.F < 2:
        raise DataError("inversion needs a short and a long yield feature")
    return float((samples.features[:, :, 0] > samples.features[:, :, 1]).any(axis=1).mean())


def negative_fraction(samples: SampleSet) -> float:
    return float((samples.features < 0).mean())


def _correlation(samples: SampleSet, label: str) -> float:
    """Pooled y1/y10 correlation; NaN with a warning when a feature never varies."""
    try:
        return pearson_corr(pooled_feature_values(samples, 0), pooled_feature_values(samples, 1))
    except DataError as e:
        logger.warning(f"⚠️ {label} correlation undefined ({e}), reporting NaN")
        return float('nan')


def _sample_autocorr(samples: SampleSet, max_lag: int, label: str) -> SampleAutocorr:
    """Averaged within-sample autocorrelation; NaN curves when every sample is constant."""
    try:
        return avg_sample_autocorr(samples, max_lag)
    except DataError as e:
        logger.warning(f"⚠️ {label} autocorrelation undefined ({e}), reporting NaN")
        return SampleAutocorr(
            per_feature=np.full((samples.F, max_lag + 1), np.nan),
            pooled=np.full(max_lag + 1, np.nan),
            used=np.zeros(samples.F, dtype=np.int64),
            skipped=len(samples) * samples.F,
        )


def build_fidelity_report(real: SampleSet, synthetic: SampleSet, max_lag: int = 100, bins: int = 50,
                          value_range: Optional[Tuple[float, float]] = None,
                          real_series: Optional[np.ndarray] = None) -> FidelityReport:
    """
    Build the real-vs-synthetic fidelity report.

    Args:
        real: Real training segments
        synthetic: Generated segments (same T and features)
        max_lag: Largest autocorrelation lag (capped at T - 1)
        bins: Histogram bins per feature
        value_range: Histogram range shared by all features; default spans both sets
        real_series: (len, F) undivided real series for the full-series autocorrelation;
            defaults to the real segments laid end to end

    Returns:
        FidelityReport
    """
    if real.feature_names != synthetic.feature_names or real.T != synthetic.T:
        raise DataError("real and synthetic sets differ in features or sample length")
    if max_lag >= real.T:
        logger.warning(f"max_lag {max_lag} >= sample length {real.T}, using {real.T - 1}")
        max_lag = real.T - 1

    names = real.feature_names
    correlation = {}
    if real.F >= 2:
        correlation = {
            'real': _correlation(real, 'real'),
            'synthetic': _correlation(synthetic, 'synthetic'),
        }

    histograms, summary = {}, {}
    for f, name in enumerate(names):
        r, s = pooled_feature_values(real, f), pooled_feature_values(synthetic, f)
        lo_hi = value_range or (float(min(r.min(), s.min())), float(max(r.max(), s.max())))
        if lo_hi[0] == lo_hi[1]:
            lo_hi = (lo_hi[0] - 0.5, lo_hi[1] + 0.5)
        hr, hs = histogram(r, bins, lo_hi), histogram(s, bins, lo_hi)
        histograms[name] = {'edges': hr.edges.tolist(), 'real': hr.masses.tolist(), 'synthetic': hs.masses.tolist()}
        summary[name] = {'real': summary_stats(r), 'synthetic': summary_stats(s)}

    synth_acf = _sample_autocorr(synthetic, max_lag, 'synthetic')
    real_acf = _sample_autocorr(real, max_lag, 'real')
    full = real.features.reshape(-1, real.F) if real_series is None else np.asarray(real_series)
    autocorr = {
        'lags': list(range(max_lag + 1)),
        'synthetic': {n: synth_acf.per_feature[f].tolist() for f, n in enumerate(names)},
        'real_sample': {n: real_acf.per_feature[f].tolist() for f, n in enumerate(names)},
        'real_full': {n: full_series_autocorr(full[:, f], max_lag).tolist() for f, n in enumerate(names)},
        'synthetic_pooled': synth_acf.pooled.tolist(),
        'real_sample_pooled': real_acf.pooled.tolist(),
    }

    proportions = {
        name: {'real': attribute_proportion(real, name), 'synthetic': attribute_proportion(synthetic, name)}
        for name in real.attribute_schema if name in synthetic.attribute_schema
    }

    report = FidelityReport(
        feature_names=list(names),
        correlation=correlation,
        histograms=histograms,
        autocorr=autocorr,
        attribute_proportions=proportions,
        diversity={'real': diversity_score(real), 'synthetic': diversity_score(synthetic)},
        summary=summary,
        negative_fraction=negative_fraction(synthetic),
        inversion_fraction={'real': inversion_fraction(real), 'synthetic': inversion_fraction(synthetic)}
        if real.F >= 2 else {},
        constant_samples_skipped={'real': real_acf.skipped, 'synthetic': synth_acf.skipped},
        sample_counts={'real': len(real), 'synthetic': len(synthetic)},
    )
    if correlation:
        logger.info(f"Correlation real={correlation['real']:.3f} synthetic={correlation['synthetic']:.3f}")
    for name, p in proportions.items():
        logger.info(f"Attribute '{name}': real={p['real']:.3f} synthetic={p['synthetic']:.3f}")
    return report


def export_examples(real: SampleSet, synthetic: SampleSet, path, n: int = 5) -> Path:
    """
    Write a few real and synthetic samples as long-format CSV
    (kind, sample, t, <features>, <attributes>).
    """
    frames = []
    for kind, samples in (('real', real), ('synthetic', synthetic)):
        for i in range(min(n, len(samples))):
            frame = pd.DataFrame(samples.features[i], columns=samples.feature_names)
            frame.insert(0, 't', np.arange(samples.T))
            frame.insert(0, 'sample', i)
            frame.insert(0, 'kind', kind)
            for a, name in enumerate(samples.attribute_schema):
                frame[name] = samples.attributes[i, a]
            frames.append(frame)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(path, **CSV_OPTIONS)
    return path
