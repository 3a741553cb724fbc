"""
Window-count identities and attribute labelling.
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from core.datasets import SampleSet, SupervisedSet
from services.ingest import YieldPanel
from services.sampling import (AttributePlan, combine_sets, rolling_classifier_windows, rolling_windows,
                               segment_gan_samples, windows_from_synthetic)
from utils.errors import ConfigError, DataError, ShapeError


def panel_of(n, start='1962-01-02', recession=None):
    dates = pd.bdate_range(start, periods=n, name='date')
    t = np.arange(n, dtype=np.float64)
    frame = pd.DataFrame({
        'y1': 3.0 + np.sin(t / 50.0),
        'y10': 4.0 + np.cos(t / 70.0),
        'recession': np.zeros(n, dtype=np.int64) if recession is None else np.asarray(recession, dtype=np.int64),
    }, index=pd.DatetimeIndex(dates, name='date', freq=None))
    return YieldPanel(frame)


def test_forecast_window_count_identity():
    # 13,710 one-day-ahead samples from 25-day windows
    data = rolling_windows(panel_of(13710 + 25), 25, 1)
    assert len(data) == 13710
    assert data.inputs.shape == (13710, 25, 2)
    assert data.targets.shape == (13710, 1, 2)


def test_rolling_windows_alignment():
    panel = panel_of(40)
    data = rolling_windows(panel, 5, 3)
    assert len(data) == 40 - 5 - 3 + 1
    np.testing.assert_array_equal(data.inputs[2], panel.features[2:7])
    np.testing.assert_array_equal(data.targets[2], panel.features[7:10])
    assert data.dates[2] == panel.iso_dates()[6]
    with pytest.raises(DataError):
        rolling_windows(panel_of(5), 5, 1)
    with pytest.raises(ConfigError):
        rolling_windows(panel, 0, 1)


def test_synthetic_segment_yields_100_windows():
    samples = SampleSet(features=np.random.default_rng(0).standard_normal((1000, 125, 2)),
                        attributes=np.zeros((1000, 1)), attribute_schema=['recession'], provenance='synthetic')
    synthetic = windows_from_synthetic(samples, 25, 1)
    assert len(synthetic) == 100 * 1000
    np.testing.assert_array_equal(synthetic.inputs[1], samples.features[0, 1:26])
    np.testing.assert_array_equal(synthetic.targets[99, 0], samples.features[0, 124])
    np.testing.assert_array_equal(synthetic.inputs[100], samples.features[1, 0:25])

    real = rolling_windows(panel_of(13710 + 25), 25, 1)
    combined = combine_sets(real, synthetic)
    assert len(combined) == 113710
    assert combined.provenance == 'combined'


def test_classifier_window_count_with_post_cutoff_labels():
    full = panel_of(5730 + 400)
    train = YieldPanel(full.frame.iloc[:5730])
    with_labels = rolling_classifier_windows(train, 30, 250, label_source=full)
    assert len(with_labels) == 5701
    dropped = rolling_classifier_windows(train, 30, 250)
    assert len(dropped) == 5730 - 30 - 250 + 1


def test_classifier_labels_look_ahead():
    rec = np.zeros(60, dtype=np.int64)
    rec[40] = 1
    panel = panel_of(60, recession=rec)
    data = rolling_classifier_windows(panel, 10, 5)
    # window i covers [i, i+10); label looks at [i+10, i+15)
    expected = np.array([1.0 if i + 10 <= 40 < i + 15 else 0.0 for i in range(len(data))])
    np.testing.assert_array_equal(data.targets, expected)


def test_gan_segments_and_attributes():
    rec = np.zeros(100, dtype=np.int64)
    rec[25] = 1
    rec[65] = 1
    panel = panel_of(100, recession=rec)
    samples = segment_gan_samples(panel, 20, AttributePlan(recession_in_window=True))
    assert samples.features.shape == (5, 20, 2)
    np.testing.assert_array_equal(samples.attribute('recession'), [0, 1, 0, 1, 0])
    np.testing.assert_array_equal(samples.features[3], panel.features[60:80])

    both = segment_gan_samples(panel, 20, AttributePlan(True, future_recession_days=10))
    # the last segment has no 10-day lookahead inside the panel
    assert len(both) == 4
    np.testing.assert_array_equal(both.attribute('future_recession'), [1, 0, 1, 0])
    assert both.attribute_schema == ['recession', 'future_recession']

    trailing = segment_gan_samples(panel_of(105), 20)
    assert len(trailing) == 5
    with pytest.raises(DataError):
        segment_gan_samples(panel_of(10), 20)
    with pytest.raises(DataError):
        samples.attribute('unknown')


def test_synthetic_classification_windows():
    samples = SampleSet(features=np.zeros((3, 30, 2)), attributes=np.array([[1.0], [0.0], [1.0]]),
                        attribute_schema=['future_recession'], provenance='synthetic')
    data = windows_from_synthetic(samples, 30, 0, label_attribute='future_recession')
    np.testing.assert_array_equal(data.targets, [1.0, 0.0, 1.0])
    data = windows_from_synthetic(samples, 28, 0, label_attribute='future_recession')
    np.testing.assert_array_equal(data.targets, [1, 1, 1, 0, 0, 0, 1, 1, 1])
    with pytest.raises(ConfigError):
        windows_from_synthetic(samples, 28, 1, label_attribute='future_recession')
    with pytest.raises(DataError):
        windows_from_synthetic(samples, 31, 0, label_attribute='future_recession')


def test_combine_sets_rules():
    a = SupervisedSet(inputs=np.zeros((2, 5, 2)), targets=np.zeros((2, 1, 2)), kind='forecast')
    b = SupervisedSet(inputs=np.ones((3, 5, 2)), targets=np.ones((3, 1, 2)), kind='forecast', provenance='synthetic')
    empty = SupervisedSet(inputs=np.zeros((0, 5, 2)), targets=np.zeros((0, 1, 2)), kind='forecast')
    out = combine_sets(a, b)
    assert len(out) == 5
    np.testing.assert_array_equal(out.inputs[:2], a.inputs)
    assert combine_sets(empty, b) is b
    assert combine_sets(a, empty) is a
    c = SupervisedSet(inputs=np.zeros((2, 6, 2)), targets=np.zeros((2, 1, 2)), kind='forecast')
    with pytest.raises(ShapeError):
        combine_sets(a, c)


def gapped_panel(rng, n):
    """n weekdays drawn from a longer calendar, so the dates have holes."""
    calendar = pd.bdate_range('1990-01-02', periods=n + int(rng.integers(0, n)), name='date')
    dates = np.sort(rng.choice(len(calendar), size=n, replace=False))
    frame = pd.DataFrame({
        'y1': rng.uniform(0.0, 8.0, n),
        'y10': rng.uniform(1.0, 9.0, n),
        'recession': (rng.random(n) < 0.1).astype(np.int64),
    }, index=pd.DatetimeIndex(calendar[dates], name='date'))
    return YieldPanel(frame)


def test_window_counts_match_brute_force_on_random_panels():
    rng = np.random.default_rng(11)
    for _ in range(40):
        n = int(rng.integers(8, 60))
        panel = gapped_panel(rng, n)
        W, H, h = int(rng.integers(1, 8)), int(rng.integers(1, 5)), int(rng.integers(1, 6))

        starts = [i for i in range(n) if i + W + H <= n]
        if starts:
            data = rolling_windows(panel, W, H)
            assert len(data) == len(starts)
            assert data.dates == [panel.iso_dates()[i + W - 1] for i in starts]
        else:
            with pytest.raises(DataError):
                rolling_windows(panel, W, H)

        labelled = [i for i in range(n) if i + W + h <= n]
        if labelled:
            data = rolling_classifier_windows(panel, W, h)
            expected = [float(panel.recession[i + W:i + W + h].any()) for i in labelled]
            np.testing.assert_array_equal(data.targets, expected)
        elif n >= W:
            with pytest.raises(DataError):
                rolling_classifier_windows(panel, W, h)


def test_classifier_labels_ignore_yield_scale():
    rng = np.random.default_rng(12)
    panel = gapped_panel(rng, 80)
    rescaled = panel.frame.copy()
    rescaled[['y1', 'y10']] = rescaled[['y1', 'y10']] * 100.0 - 2.0
    base = rolling_classifier_windows(panel, 10, 7)
    scaled = rolling_classifier_windows(YieldPanel(rescaled), 10, 7)
    np.testing.assert_array_equal(scaled.targets, base.targets)
    np.testing.assert_allclose(scaled.inputs, base.inputs * 100.0 - 2.0)
