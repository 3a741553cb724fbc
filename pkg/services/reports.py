"""
Report Service

Serializable evaluation outputs. Every report writes a JSON summary and the
CSV plot data behind it; `write_manifest` stamps an artifact directory with
the config hash, seed and sub-seed lineage. Nothing time-dependent is
written, so identical runs produce identical files.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from utils.config import config_hash
from utils.logger import get_logger
from utils.metrics import RocCurve

logger = get_logger(__name__)

VARIANTS = ('real', 'synthetic', 'combined')
CSV_OPTIONS = dict(index=False, float_format='%.17g', lineterminator='\n')


def _plain(value: Any) -> Any:
    """numpy -> JSON-ready python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None if np.isnan(value) else ('inf' if value > 0 else '-inf')
    return value


def write_json(path: Path, data: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path


def write_manifest(out_dir, config: Dict[str, Any], seed: Optional[int] = None,
                   lineage: Optional[Dict[str, Any]] = None, **extra) -> Path:
    """
    manifest.json with the config hash, seed, sub-seed lineage and any extra facts
    (ingest policy, panel lengths, sample counts).
    """
    manifest = {
        'config_hash': config_hash(config),
        'config': config,
        'seed': seed,
        'seed_lineage': lineage or {},
    }
    manifest.update(extra)
    path = write_json(Path(out_dir) / 'manifest.json', manifest)
    logger.debug(f"Manifest written to {path}")
    return path


@dataclass
class FidelityReport:
    """
    Real-vs-synthetic comparison.

    histograms: feature -> {'edges', 'real', 'synthetic'}
    autocorr:   {'lags', 'synthetic', 'real_sample', 'real_full'} each feature -> per-lag list,
                plus pooled within-sample curves
    """

    feature_names: List[str]
    correlation: Dict[str, float]
    histograms: Dict[str, Dict[str, List[float]]]
    autocorr: Dict[str, Any]
    attribute_proportions: Dict[str, Dict[str, float]]
    diversity: Dict[str, float]
    summary: Dict[str, Dict[str, Dict[str, float]]] = field(default_factory=dict)
    negative_fraction: float = 0.0
    inversion_fraction: Dict[str, float] = field(default_factory=dict)
    constant_samples_skipped: Dict[str, int] = field(default_factory=dict)
    sample_counts: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def histogram_frame(self, feature: str) -> pd.DataFrame:
        h = self.histograms[feature]
        edges = np.asarray(h['edges'])
        return pd.DataFrame({'bin_lo': edges[:-1], 'bin_hi': edges[1:], 'real': h['real'], 'synthetic': h['synthetic']})

    def autocorr_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'lag': self.autocorr['lags']})
        for feature in self.feature_names:
            frame[f'synthetic_{feature}'] = self.autocorr['synthetic'][feature]
            frame[f'real_sample_{feature}'] = self.autocorr['real_sample'][feature]
            frame[f'real_full_{feature}'] = self.autocorr['real_full'][feature]
        frame['synthetic_pooled'] = self.autocorr['synthetic_pooled']
        frame['real_sample_pooled'] = self.autocorr['real_sample_pooled']
        return frame

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / 'fidelity.json', self.to_dict())
        for feature in self.feature_names:
            self.histogram_frame(feature).to_csv(out_dir / f'histogram_{feature}.csv', **CSV_OPTIONS)
        self.autocorr_frame().to_csv(out_dir / 'autocorrelation.csv', **CSV_OPTIONS)
        logger.info(f"📊 Fidelity report written to {out_dir}")
        return out_dir


@dataclass
class ForecastReport:
    """
    RMSE/MAPE per training-set variant and feature for each horizon.

    tables: horizon -> variant -> {'rmse_y1', 'mape_y1', 'rmse_y10', 'mape_y10'}
    curves: horizon -> DataFrame(date, actual_*, <variant>_*) for the evaluated step
    """

    feature_names: List[str]
    tables: Dict[int, Dict[str, Dict[str, float]]] = field(default_factory=dict)
    mape_excluded: Dict[int, Dict[str, Dict[str, int]]] = field(default_factory=dict)
    curves: Dict[int, pd.DataFrame] = field(default_factory=dict)
    test_range: Optional[List[str]] = None
    mape_include_all: bool = False
    sample_counts: Dict[str, int] = field(default_factory=dict)

    def table_frame(self, horizon: int) -> pd.DataFrame:
        rows = []
        for variant, cells in self.tables[horizon].items():
            row = {'training_data': variant}
            for feature in self.feature_names:
                row[f'rmse_{feature}'] = cells[f'rmse_{feature}']
                row[f'mape_{feature}'] = cells[f'mape_{feature}']
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return _plain({
            'feature_names': self.feature_names,
            'tables': {f'h{h}': t for h, t in sorted(self.tables.items())},
            'mape_excluded': {f'h{h}': t for h, t in sorted(self.mape_excluded.items())},
            'test_range': self.test_range,
            'mape_include_all': self.mape_include_all,
            'sample_counts': self.sample_counts,
        })

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / 'forecast_report.json', self.to_dict())
        for horizon in sorted(self.tables):
            self.table_frame(horizon).to_csv(out_dir / f'table_h{horizon}.csv', **CSV_OPTIONS)
            if horizon in self.curves:
                self.curves[horizon].to_csv(out_dir / f'curve_h{horizon}.csv', **CSV_OPTIONS)
        logger.info(f"📊 Forecast report written to {out_dir}")
        return out_dir


@dataclass
class ClassifierResult:
    model: str
    variant: str
    auc: float
    rates: Dict[str, Dict[str, float]]
    roc: RocCurve

    @property
    def key(self) -> str:
        return f'{self.model}_{self.variant}'


@dataclass
class ClassificationReport:
    """
    ROC/AUC per (model kind, training variant) plus the daily probability curves.

    curves: DataFrame(date, recession, lead_marker, label, <model>_<variant>...)
    """

    results: List[ClassifierResult] = field(default_factory=list)
    curves: Optional[pd.DataFrame] = None
    test_range: Optional[List[str]] = None
    lookahead: Optional[int] = None
    sample_counts: Dict[str, int] = field(default_factory=dict)

    def auc_frame(self) -> pd.DataFrame:
        rows = []
        for r in self.results:
            row = {'model': r.model, 'training_data': r.variant, 'auc': r.auc}
            for threshold, rates in sorted(r.rates.items()):
                row[f'tpr@{threshold}'] = rates['tpr']
                row[f'fpr@{threshold}'] = rates['fpr']
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return _plain({
            'results': [
                {'model': r.model, 'training_data': r.variant, 'auc': r.auc, 'rates': r.rates}
                for r in self.results
            ],
            'test_range': self.test_range,
            'lookahead': self.lookahead,
            'sample_counts': self.sample_counts,
        })

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / 'classification_report.json', self.to_dict())
        self.auc_frame().to_csv(out_dir / 'auc_table.csv', **CSV_OPTIONS)
        if self.curves is not None:
            self.curves.to_csv(out_dir / 'probabilities.csv', **CSV_OPTIONS)
        for r in self.results:
            roc = pd.DataFrame({'threshold': r.roc.thresholds, 'fpr': r.roc.fpr, 'tpr': r.roc.tpr})
            roc.to_csv(out_dir / f'roc_{r.key}.csv', **CSV_OPTIONS)
        logger.info(f"📊 Classification report written to {out_dir}")
        return out_dir
