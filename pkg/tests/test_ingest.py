"""
FRED parsing, calendar alignment and period slicing.
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from conftest import make_panel
from services.ingest import (align_panel, count_recessions, lead_markers, load_panel, panel_from_csv,
                             parse_fred_csv, read_fred_csv, recession_starts, slice_period)
from utils.errors import ConfigError, DataError


def test_parse_fred_csv_missing_markers():
    series = parse_fred_csv('DATE,DGS10\n2020-01-01,.\n2020-01-02,1.88\n2020-01-03,\n')
    assert series.id == 'DGS10'
    assert len(series) == 3
    assert series.n_missing == 2
    assert series.values.iloc[1] == 1.88


def test_parse_fred_csv_errors():
    with pytest.raises(DataError):
        parse_fred_csv('DATE,DGS10\n2020-01-01,abc\n')
    with pytest.raises(DataError):
        parse_fred_csv('DATE,DGS10\n2020-01-02,1.0\n2020-01-01,1.1\n')
    with pytest.raises(DataError):
        parse_fred_csv('DATE,DGS10\n')
    with pytest.raises(DataError):
        parse_fred_csv('DATE,DGS10\n01/02/2020,1.0\n')


def test_align_drop_policy(fred_files):
    panel = align_panel(read_fred_csv(fred_files['y1']), read_fred_csv(fred_files['y10']),
                        read_fred_csv(fred_files['rec']), policy='drop')
    assert panel.iso_dates() == ['2020-01-02', '2020-01-03', '2020-01-07']
    np.testing.assert_allclose(panel.y1, [1.56, 1.55, 1.54])
    np.testing.assert_array_equal(panel.recession, [0, 0, 1])


def test_align_ffill_policy(fred_files):
    panel = align_panel(read_fred_csv(fred_files['y1']), read_fred_csv(fred_files['y10']),
                        read_fred_csv(fred_files['rec']), policy='ffill')
    assert panel.iso_dates() == ['2020-01-02', '2020-01-03', '2020-01-06', '2020-01-07']
    assert panel.y1[2] == 1.55
    assert panel.y10[2] == 1.81


def test_align_rejects_unknown_policy(fred_files):
    series = [read_fred_csv(fred_files[k]) for k in ('y1', 'y10', 'rec')]
    with pytest.raises(ConfigError):
        align_panel(*series, policy='interpolate')


def test_align_rejects_non_binary_recession():
    y = parse_fred_csv('DATE,DGS1\n2020-01-02,1.0\n')
    rec = parse_fred_csv('DATE,USRECD\n2020-01-02,2\n')
    with pytest.raises(DataError):
        align_panel(y, y, rec)


def test_read_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_fred_csv(tmp_path / 'nope.csv')


def test_slice_period_is_inclusive_and_pure(panel):
    sub = slice_period(panel, '2001-01-02', '2001-01-31')
    assert sub.iso_dates()[0] == '2001-01-02'
    assert sub.iso_dates()[-1] == '2001-01-31'
    assert len(sub) == len(pd.bdate_range('2001-01-02', '2001-01-31'))
    assert len(panel) == len(pd.bdate_range('2000-01-03', '2002-12-31'))
    with pytest.raises(DataError):
        slice_period(panel, '1990-01-01', '1990-12-31')
    with pytest.raises(ConfigError):
        slice_period(panel, '2001-02-01', '2001-01-01')


def test_panel_csv_round_trip(panel, tmp_path):
    path = tmp_path / 'panel.csv'
    panel.to_csv(path)
    loaded = load_panel(path)
    pd.testing.assert_frame_equal(loaded.frame, panel.frame, check_freq=False)
    assert panel_from_csv(panel.to_csv()).iso_dates() == panel.iso_dates()


def test_recession_starts_and_lead_markers():
    panel = make_panel()
    starts = recession_starts(panel)
    assert [d.strftime('%Y-%m-%d') for d in starts] == ['2001-03-01', '2002-08-01']
    assert count_recessions(panel) == 2
    markers = lead_markers(panel, 20)
    onset = panel.iso_dates().index('2001-03-01')
    assert markers[0] == panel.dates[onset - 20]
