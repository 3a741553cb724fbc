"""
Metrics against brute-force reference implementations.
"""

import itertools
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from core.dgan import diversity_score
from utils.errors import ConfigError, DataError, ShapeError
from utils.metrics import (avg_sample_autocorr, full_series_autocorr, histogram, mape, mape_details, pearson_corr,
                           rates_at_threshold, rmse, roc_auc)

INSTANCES = 1000
TOL = 1e-9


def brute_acf(x, max_lag):
    n = len(x)
    m = sum(x) / n
    denom = sum((v - m) ** 2 for v in x)
    return np.array([sum((x[t] - m) * (x[t + k] - m) for t in range(n - k)) / denom for k in range(max_lag + 1)])


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    credit = 0.0
    for p, q in itertools.product(pos, neg):
        credit += 1.0 if p > q else 0.5 if p == q else 0.0
    return credit / (len(pos) * len(neg))


def test_rmse_mape_corr_against_loops():
    rng = np.random.default_rng(0)
    for _ in range(INSTANCES):
        n = int(rng.integers(2, 12))
        p, t = rng.normal(3, 1, n), rng.normal(3, 1, n)
        t[np.abs(t) < 0.05] = 0.5

        assert abs(rmse(p, t) - (sum((a - b) ** 2 for a, b in zip(p, t)) / n) ** 0.5) < TOL
        assert abs(mape(p, t) - 100.0 * sum(abs(a - b) / abs(b) for a, b in zip(p, t)) / n) < TOL

        mp, mt = sum(p) / n, sum(t) / n
        cov = sum((a - mp) * (b - mt) for a, b in zip(p, t))
        ref = cov / (sum((a - mp) ** 2 for a in p) * sum((b - mt) ** 2 for b in t)) ** 0.5
        assert abs(pearson_corr(p, t) - ref) < TOL


def test_mape_excludes_near_zero_targets():
    result = mape_details([1.0, 2.0, 0.5], [1.0, 4.0, 0.001])
    assert result.value == pytest.approx(25.0)
    assert (result.included, result.excluded) == (2, 1)
    with_all = mape_details([1.0, 2.0, 0.5], [1.0, 4.0, 0.001], include_all=True)
    assert with_all.excluded == 0
    assert with_all.value == pytest.approx(100.0 * (0 + 0.5 + 499.0) / 3)
    with pytest.raises(DataError):
        mape([1.0], [0.0])


def test_metric_input_errors():
    with pytest.raises(ShapeError):
        rmse([1.0, 2.0], [1.0])
    with pytest.raises(DataError):
        rmse([], [])
    with pytest.raises(DataError):
        pearson_corr([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_autocorrelations_against_loops():
    rng = np.random.default_rng(1)
    for _ in range(INSTANCES):
        T = int(rng.integers(4, 10))
        x = rng.standard_normal(T)
        lag = int(rng.integers(1, T))
        np.testing.assert_allclose(full_series_autocorr(x, lag), brute_acf(list(x), lag), atol=TOL, rtol=0)

    samples = rng.standard_normal((6, 8, 2))
    samples[2, :, 1] = 1.5
    result = avg_sample_autocorr(samples, 4)
    assert result.skipped == 1
    assert list(result.used) == [6, 5]
    ref0 = np.mean([brute_acf(list(samples[i, :, 0]), 4) for i in range(6)], axis=0)
    ref1 = np.mean([brute_acf(list(samples[i, :, 1]), 4) for i in range(6) if i != 2], axis=0)
    np.testing.assert_allclose(result.per_feature[0], ref0, atol=TOL)
    np.testing.assert_allclose(result.per_feature[1], ref1, atol=TOL)
    np.testing.assert_allclose(result.pooled, (6 * ref0 + 5 * ref1) / 11, atol=TOL)
    assert result.per_feature[0][0] == pytest.approx(1.0)

    with pytest.raises(ConfigError):
        avg_sample_autocorr(samples, 8)
    with pytest.raises(DataError):
        avg_sample_autocorr(np.ones((3, 5, 1)), 2)


def test_histogram_against_loops():
    rng = np.random.default_rng(2)
    for _ in range(INSTANCES):
        x = rng.uniform(-1.5, 1.5, int(rng.integers(1, 20)))
        bins = int(rng.integers(1, 6))
        h = histogram(x, bins, (-1.0, 1.0))
        width = 2.0 / bins
        counts = np.zeros(bins)
        for v in x:
            v = min(max(v, -1.0), 1.0)
            counts[min(int((v + 1.0) / width), bins - 1)] += 1
        np.testing.assert_allclose(h.masses, counts / len(x), atol=TOL)
        assert h.masses.sum() == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        histogram([1.0], 3, (1.0, 1.0))


def test_auc_against_pair_counting():
    rng = np.random.default_rng(3)
    for _ in range(INSTANCES):
        n = int(rng.integers(2, 15))
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 5, n) / 4.0
        curve = roc_auc(scores, labels)
        assert curve.auc == pytest.approx(brute_auc(scores, labels), abs=1e-12)
        assert curve.fpr[0] == 0 and curve.tpr[0] == 0
        assert curve.fpr[-1] == pytest.approx(1.0) and curve.tpr[-1] == pytest.approx(1.0)
        assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)


def test_auc_edge_cases():
    assert roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]).auc == 1.0
    assert roc_auc([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0]).auc == 0.0
    assert roc_auc([0.5, 0.5, 0.5], [1, 0, 1]).auc == 0.5
    with pytest.raises(DataError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(DataError):
        roc_auc([0.1, 0.2], [1, 2])


def test_rates_at_threshold():
    tpr, fpr = rates_at_threshold([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0], 0.5)
    assert (tpr, fpr) == (0.5, 0.5)
    tpr, fpr = rates_at_threshold([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0], 0.25)
    assert (tpr, fpr) == (1.0, 0.5)


def brute_diversity(features):
    flat = []
    for s in features:
        lo, hi = s.min(axis=0), s.max(axis=0)
        half = np.maximum((hi - lo) / 2.0, 1e-8)
        flat.append(((s - (lo + hi) / 2.0) / half).reshape(-1))
    n = len(flat)
    dists = [np.sqrt(np.sum((flat[i] - flat[j]) ** 2)) for i in range(n) for j in range(i + 1, n)]
    norms = [np.sqrt(np.sum(v ** 2)) for v in flat]
    return (sum(dists) / len(dists)) / (sum(norms) / n)


def test_diversity_against_loops():
    rng = np.random.default_rng(4)
    for _ in range(INSTANCES):
        features = rng.standard_normal((int(rng.integers(2, 6)), int(rng.integers(2, 6)), 2))
        assert abs(diversity_score(features) - brute_diversity(features)) < TOL
    same = np.tile(rng.standard_normal((1, 5, 2)), (4, 1, 1))
    assert diversity_score(same) == 0.0
    with pytest.raises(DataError):
        diversity_score(np.ones((1, 5, 2)))


def test_auc_of_negated_scores_is_complement():
    rng = np.random.default_rng(5)
    for _ in range(100):
        labels = rng.integers(0, 2, 12)
        labels[0], labels[1] = 0, 1
        scores = rng.permutation(12) / 12.0
        assert roc_auc(scores, labels).auc + roc_auc(-scores, labels).auc == pytest.approx(1.0)
