"""
Shared fixtures: synthetic weekday yield panels and FRED-format CSV text.
"""

import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from services.ingest import YieldPanel

# Two recessions inside 2000..2002 so both label classes appear in any split
DEFAULT_RECESSIONS = (('2001-03-01', '2001-11-30'), ('2002-08-01', '2002-09-30'))


def make_panel(start='2000-01-03', end='2002-12-31', seed=0, recessions=DEFAULT_RECESSIONS) -> YieldPanel:
    """Smooth, strictly positive y1/y10 paths on a weekday calendar."""
    dates = pd.bdate_range(start, end, name='date')
    rng = np.random.default_rng(seed)
    n = len(dates)
    t = np.arange(n)
    y1 = 3.0 + 1.5 * np.sin(2 * np.pi * t / 260.0) + 0.05 * np.cumsum(rng.standard_normal(n)) / np.sqrt(n)
    y10 = y1 + 1.0 + 0.3 * np.cos(2 * np.pi * t / 130.0) + 0.02 * rng.standard_normal(n)
    recession = np.zeros(n, dtype=np.int64)
    for lo, hi in recessions:
        recession[(dates >= pd.Timestamp(lo)) & (dates <= pd.Timestamp(hi))] = 1
    frame = pd.DataFrame({'y1': y1, 'y10': y10, 'recession': recession}, index=dates)
    frame.index = pd.DatetimeIndex(frame.index, name='date', freq=None)
    return YieldPanel(frame)


def fred_csv(series_id, dates, values) -> str:
    lines = [f'observation_date,{series_id}']
    for d, v in zip(dates, values):
        lines.append(f'{d},{v}')
    return '\n'.join(lines) + '\n'


@pytest.fixture
def panel():
    return make_panel()


@pytest.fixture
def fred_files(tmp_path):
    """DGS1/DGS10/USRECD files with a holiday ('.'), an empty field and a weekend row."""
    y1 = fred_csv('DGS1', ['2020-01-01', '2020-01-02', '2020-01-03', '2020-01-06', '2020-01-07'],
                  ['.', '1.56', '1.55', '', '1.54'])
    y10 = fred_csv('DGS10', ['2020-01-01', '2020-01-02', '2020-01-03', '2020-01-06', '2020-01-07'],
                   ['.', '1.88', '1.80', '1.81', '1.83'])
    rec = fred_csv('USRECD', ['2020-01-01', '2020-01-02', '2020-01-03', '2020-01-04', '2020-01-05',
                              '2020-01-06', '2020-01-07'], ['0', '0', '0', '0', '0', '1', '1'])
    paths = {}
    for name, text in (('y1', y1), ('y10', y10), ('rec', rec)):
        paths[name] = tmp_path / f'{name}.csv'
        paths[name].write_text(text, encoding='utf-8')
    return paths


def pytest_collection_modifyitems(config, items):
    if os.environ.get('YIELDGAN_RUN_SLOW') == '1':
        return
    skip = pytest.mark.skip(reason='set YIELDGAN_RUN_SLOW=1 to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)
