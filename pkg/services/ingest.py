"""
FRED Ingestion Service

Parses FRED CSV exports (DGS1, DGS10, USRECD), aligns them onto a weekday
calendar and produces labeled yield panels restricted to date ranges.
"""

import io
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, TextIO, Union

import numpy as np
import pandas as pd

from utils.errors import ConfigError, DataError
from utils.logger import get_logger

logger = get_logger(__name__)

# '.' is the classic FRED missing marker; current fredgraph exports leave the field empty
MISSING_MARKERS = ('.', '')
POLICIES = ('drop', 'ffill')
PANEL_COLUMNS = ['y1', 'y10', 'recession']


@dataclass(frozen=True)
class DatedSeries:
    """
    One FRED series.

    values is indexed by a strictly increasing DatetimeIndex named 'date';
    missing observations are NaN and are never dropped here.
    """

    id: str
    values: pd.Series

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_missing(self) -> int:
        return int(self.values.isna().sum())


@dataclass(frozen=True)
class YieldPanel:
    """
    Calendar-aligned daily panel: y1, y10 (percent) and a 0/1 recession flag.
    """

    frame: pd.DataFrame

    def __post_init__(self):
        frame = self.frame
        if list(frame.columns) != PANEL_COLUMNS:
            raise DataError(f"Panel columns must be {PANEL_COLUMNS}, got {list(frame.columns)}")
        if frame.isna().any().any():
            raise DataError("Panel contains missing values")
        if not frame.index.is_monotonic_increasing or not frame.index.is_unique:
            raise DataError("Panel dates must be strictly increasing")
        if not frame['recession'].isin([0, 1]).all():
            raise DataError("Panel recession flag must be 0/1")

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def y1(self) -> np.ndarray:
        return self.frame['y1'].to_numpy(dtype=np.float64)

    @property
    def y10(self) -> np.ndarray:
        return self.frame['y10'].to_numpy(dtype=np.float64)

    @property
    def recession(self) -> np.ndarray:
        return self.frame['recession'].to_numpy(dtype=np.int64)

    @property
    def features(self) -> np.ndarray:
        """(len, 2) array of [y1, y10]."""
        return self.frame[['y1', 'y10']].to_numpy(dtype=np.float64)

    def iso_dates(self) -> List[str]:
        return [d.strftime('%Y-%m-%d') for d in self.frame.index]

    def to_csv(self, path=None) -> Optional[str]:
        """Write the canonical `date,y1,y10,recession` CSV (returns text when path is None)."""
        out = self.frame.copy()
        out.index = out.index.strftime('%Y-%m-%d')
        out.index.name = 'date'
        out['recession'] = out['recession'].astype(int)
        if path is None:
            return out.to_csv(float_format='%.17g', lineterminator='\n')
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        out.to_csv(path, float_format='%.17g', lineterminator='\n')
        return None


def _read_text(text: Union[str, TextIO]) -> str:
    return text.read() if hasattr(text, 'read') else text


def parse_fred_csv(text: Union[str, TextIO], series_id: Optional[str] = None) -> DatedSeries:
    """
    Parse a FRED CSV export.

    Expects a header row (e.g. `observation_date,DGS10` or `DATE,DGS10`)
    followed by `date,value` rows. Missing-marker values become NaN.

    Args:
        text: CSV content or an open text stream
        series_id: Override for the series id (defaults to the value column header)

    Returns:
        DatedSeries in file order
    """
    content = _read_text(text)
    try:
        raw = pd.read_csv(io.StringIO(content), dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise DataError("no data rows")
    if raw.shape[1] < 2:
        raise DataError("FRED CSV needs a date column and a value column")
    if raw.empty:
        raise DataError("no data rows")

    date_col, value_col = raw.columns[0], raw.columns[1]
    sid = series_id or str(value_col)

    try:
        dates = pd.to_datetime(raw[date_col].str.strip(), format='%Y-%m-%d', errors='raise')
    except (ValueError, TypeError) as e:
        raise DataError(f"{sid}: malformed date ({e})") from e

    tokens = raw[value_col].str.strip()
    missing = tokens.isin(MISSING_MARKERS)
    values = pd.to_numeric(tokens.where(~missing), errors='coerce')
    bad = values.isna() & ~missing
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"{sid}: non-numeric value '{tokens.iloc[row]}' on {raw[date_col].iloc[row]}")

    index = pd.DatetimeIndex(dates, name='date')
    if not index.is_monotonic_increasing or not index.is_unique:
        raise DataError(f"{sid}: dates are out of order or duplicated")

    series = pd.Series(values.to_numpy(dtype=np.float64), index=index, name=sid)
    logger.debug(f"Parsed {sid}: {len(series)} rows, {int(missing.sum())} missing")
    return DatedSeries(id=sid, values=series)


def read_fred_csv(path) -> DatedSeries:
    """Parse a FRED CSV file from disk."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"File not found: {path}")
    return parse_fred_csv(path.read_text(encoding='utf-8'))


def align_panel(y1: DatedSeries, y10: DatedSeries, rec: DatedSeries, policy: str = 'drop') -> YieldPanel:
    """
    Align three series on the weekdays of their common date range.

    Args:
        y1: 1-year yield series
        y10: 10-year yield series
        rec: Daily NBER recession indicator
        policy: 'drop' removes weekdays missing either yield; 'ffill' carries the last quote forward

    Returns:
        YieldPanel without missing values
    """
    if policy not in POLICIES:
        raise ConfigError(f"Unknown missing-data policy '{policy}' (use one of {POLICIES})")
    for s in (y1, y10, rec):
        if len(s) == 0:
            raise DataError(f"{s.id}: empty series")

    start = max(s.values.index[0] for s in (y1, y10, rec))
    end = min(s.values.index[-1] for s in (y1, y10, rec))
    if start > end:
        raise DataError(f"Series do not overlap ({start.date()} > {end.date()})")

    weekdays = pd.bdate_range(start, end, name='date')
    if len(weekdays) == 0:
        raise DataError("Common date range contains no weekdays")

    frame = pd.DataFrame({
        'y1': y1.values.reindex(weekdays),
        'y10': y10.values.reindex(weekdays),
    })

    # Recession flag is published daily; a gap takes the last published value
    recession = rec.values.dropna()
    observed = recession.unique()
    if not np.isin(observed, [0.0, 1.0]).all():
        raise DataError(f"{rec.id}: recession series is not binary (values {sorted(observed)[:5]})")
    frame['recession'] = recession.reindex(weekdays, method='ffill')

    if policy == 'ffill':
        frame[['y1', 'y10']] = frame[['y1', 'y10']].ffill()

    before = len(frame)
    frame = frame.dropna()
    dropped = before - len(frame)
    if dropped:
        logger.info(f"Dropped {dropped} weekdays without complete data (policy={policy})")
    if frame.empty:
        raise DataError("No complete weekdays in the common date range")

    frame['recession'] = frame['recession'].astype(np.int64)
    frame.index = pd.DatetimeIndex(frame.index, name='date', freq=None)
    logger.info(
        f"📈 Aligned panel: {len(frame)} days {frame.index[0].date()} .. {frame.index[-1].date()} (policy={policy})"
    )
    return YieldPanel(frame[PANEL_COLUMNS])


def slice_period(panel: YieldPanel, start, end) -> YieldPanel:
    """
    Sub-panel with dates in [start, end]. The source panel is left untouched.
    """
    start, end = pd.Timestamp(start), pd.Timestamp(end)
    if start > end:
        raise ConfigError(f"slice start {start.date()} is after end {end.date()}")
    frame = panel.frame.loc[(panel.frame.index >= start) & (panel.frame.index <= end)].copy()
    if frame.empty:
        raise DataError(f"No panel dates between {start.date()} and {end.date()}")
    return YieldPanel(frame)


def panel_from_csv(path_or_text) -> YieldPanel:
    """Read a canonical panel CSV (`date,y1,y10,recession`)."""
    if isinstance(path_or_text, Path) or '\n' not in str(path_or_text):
        source = Path(path_or_text)
        if not source.exists():
            raise DataError(f"File not found: {source}")
    else:
        source = io.StringIO(path_or_text)
    try:
        frame = pd.read_csv(source, dtype={'y1': np.float64, 'y10': np.float64, 'recession': np.int64},
                            float_precision='round_trip')
    except (pd.errors.EmptyDataError, ValueError) as e:
        raise DataError(f"Cannot read panel CSV: {e}") from e
    if 'date' not in frame.columns:
        raise DataError("Panel CSV needs a 'date' column")
    frame['date'] = pd.to_datetime(frame['date'], format='%Y-%m-%d')
    frame = frame.set_index('date')
    return YieldPanel(frame[PANEL_COLUMNS])


def load_panel(path) -> YieldPanel:
    """Read a panel CSV from disk."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"File not found: {path}")
    return panel_from_csv(path)


def concat_panels(first: YieldPanel, second: YieldPanel) -> YieldPanel:
    """Join two panels whose date ranges do not overlap (first before second)."""
    return YieldPanel(pd.concat([first.frame, second.frame]))


def recession_starts(panel: YieldPanel) -> pd.DatetimeIndex:
    """Dates where the recession flag switches from 0 to 1 (or starts at 1)."""
    flag = panel.recession
    onset = np.flatnonzero((flag == 1) & (np.concatenate([[0], flag[:-1]]) == 0))
    return panel.dates[onset]


def count_recessions(panel: YieldPanel) -> int:
    return len(recession_starts(panel))


def lead_markers(panel: YieldPanel, lookahead: int) -> pd.DatetimeIndex:
    """Dates `lookahead` trading days before each recession onset that fall inside the panel."""
    flag = panel.recession
    onset = np.flatnonzero((flag == 1) & (np.concatenate([[0], flag[:-1]]) == 0))
    lead = onset - lookahead
    return panel.dates[lead[lead >= 0]]
