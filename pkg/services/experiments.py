"""
Experiment Service

End-to-end pipelines for the two studies:
- forecast:  GAN on 125-day segments -> real/synthetic/combined 25-day windows
             -> stacked-LSTM forecasters at 1 and 15 days -> RMSE/MAPE tables
- recession: GAN on 30-day segments with a 250-day future-recession attribute
             -> logistic and LSTM classifiers on three set variants -> ROC/AUC
"""

import copy
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from core.checkpoint import load_checkpoint, save_checkpoint
from core.datasets import SampleSet, SupervisedSet, save_set
from core.dgan import DGanConfig, GeneratorBundle, generate, train_dgan
from services.downstream import (ClassifierConfig, ForecasterConfig, ForecastModel, LogisticConfig,
                                 predict_probability, train_forecaster, train_logistic_l1,
                                 train_lstm_classifier)
from services.fidelity import build_fidelity_report, export_examples
from services.ingest import (YieldPanel, align_panel, lead_markers, load_panel, read_fred_csv,
                             slice_period)
from services.reports import (VARIANTS, ClassificationReport, ClassifierResult, ForecastReport,
                              write_manifest)
from services.sampling import (FUTURE_RECESSION_ATTR, AttributePlan, combine_sets, rolling_classifier_windows,
                               rolling_windows, segment_gan_samples, windows_from_synthetic)
from utils.config import get_config, output_root
from utils.errors import ConfigError, DataError
from utils.logger import get_logger
from utils.metrics import mape_details, rates_at_threshold, rmse, roc_auc
from utils.seeding import SeedLineage

logger = get_logger(__name__)

EXPERIMENTS = ('forecast', 'recession')
RATE_THRESHOLDS = (0.25, 0.5)


def _deep_merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


@dataclass
class RunConfig:
    """
    Everything one experiment run needs. Defaults reproduce the forecast study;
    `RunConfig.defaults('recession')` gives the recession study layout.
    """

    experiment: str = 'forecast'
    panel: Optional[str] = None
    y1: Optional[str] = None
    y10: Optional[str] = None
    rec: Optional[str] = None
    policy: str = 'drop'
    gan_train: Tuple[str, str] = ('1962-01-02', '2016-12-30')
    downstream_train: Tuple[str, str] = ('1962-01-02', '2016-12-30')
    test: Tuple[str, str] = ('2017-01-03', '2023-01-11')
    segment_length: int = 125
    window: int = 25
    horizons: Tuple[int, ...] = (1, 15)
    lookahead: int = 250
    n_synthetic: int = 1000
    max_lag: int = 100
    seed: int = 0
    output_dir: Optional[str] = None
    gan_checkpoint: Optional[str] = None
    mape_include_all: bool = False
    use_post_cutoff_labels: bool = True
    clip_negative: bool = False
    save_sets: bool = False
    dgan: DGanConfig = field(default_factory=DGanConfig)
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    logistic: LogisticConfig = field(default_factory=LogisticConfig)

    def __post_init__(self):
        self.gan_train = tuple(self.gan_train)
        self.downstream_train = tuple(self.downstream_train)
        self.test = tuple(self.test)
        self.horizons = tuple(int(h) for h in self.horizons)
        self.validate()

    @classmethod
    def defaults(cls, experiment: str) -> 'RunConfig':
        if experiment == 'forecast':
            return cls()
        if experiment == 'recession':
            return cls(
                experiment='recession',
                gan_train=('1962-01-02', '1984-12-31'),
                downstream_train=('1962-01-02', '1984-12-31'),
                test=('1985-01-02', '2009-06-30'),
                segment_length=30,
                window=30,
                n_synthetic=50000,
                max_lag=29,
                dgan=DGanConfig(sample_length=30),
            )
        raise ConfigError(f"Unknown experiment '{experiment}' (use one of {EXPERIMENTS})")

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"Unknown experiment '{self.experiment}' (use one of {EXPERIMENTS})")
        if self.dgan.sample_length != self.segment_length:
            raise ConfigError(
                f"dgan.sample_length {self.dgan.sample_length} differs from segment_length {self.segment_length}"
            )
        if self.window <= 0 or self.lookahead <= 0 or self.n_synthetic <= 0 or not self.horizons:
            raise ConfigError("window, lookahead, n_synthetic and horizons must be positive")
        ranges = {}
        for name in ('gan_train', 'downstream_train', 'test'):
            pair = getattr(self, name)
            if len(pair) != 2:
                raise ConfigError(f"{name} must be [start, end]")
            try:
                start, end = pd.Timestamp(pair[0]), pd.Timestamp(pair[1])
            except ValueError as e:
                raise ConfigError(f"{name}: bad date ({e})") from e
            if start > end:
                raise ConfigError(f"{name} starts after it ends")
            ranges[name] = (start, end)
        for name in ('gan_train', 'downstream_train'):
            if ranges[name][1] >= ranges['test'][0]:
                raise ConfigError(f"{name} overlaps the test range; test data must stay out of training")

    def to_dict(self) -> Dict[str, Any]:
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if hasattr(value, 'to_dict'):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            data[f.name] = value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'RunConfig':
        experiment = data.get('experiment', 'forecast')
        merged = _deep_merge(cls.defaults(experiment).to_dict(), data)
        if 'dgan' not in data or 'sample_length' not in data.get('dgan', {}):
            merged['dgan']['sample_length'] = merged['segment_length']
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ConfigError(f"Unknown run config keys: {unknown}")
        merged['dgan'] = DGanConfig.from_dict(merged['dgan'])
        merged['forecaster'] = ForecasterConfig.from_dict(merged['forecaster'])
        merged['classifier'] = ClassifierConfig.from_dict(merged['classifier'])
        merged['logistic'] = LogisticConfig.from_dict(merged['logistic'])
        return cls(**merged)


def load_run_config(path, experiment: str, flags: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Read a RunConfig from YAML/JSON.

    The file is either a bare run config or a project config holding
    `experiments.<experiment>`; shared `data` keys are merged in first.
    Command-line `flags` fill keys the file leaves unset; the file wins.
    """
    raw = get_config(path, required=True)
    if 'experiments' in raw:
        section = raw['experiments'].get(experiment)
        if section is None:
            raise ConfigError(f"{path} has no 'experiments.{experiment}' section")
        data = _deep_merge(raw.get('data', {}), section)
    else:
        data = raw
    data = dict(data)
    data.setdefault('experiment', experiment)
    if data['experiment'] != experiment:
        raise ConfigError(f"{path} describes the '{data['experiment']}' experiment, not '{experiment}'")
    for key, value in (flags or {}).items():
        if key in data and data[key] != value:
            logger.warning(f"Flag value {key}={value} ignored, {path} sets {key}={data[key]}")
    data = _deep_merge(dict(flags or {}), data)
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _context_panel(test: YieldPanel, history: Optional[YieldPanel], rows: int) -> YieldPanel:
    """Test panel preceded by the last `rows` history days before the test start."""
    if history is None or rows <= 0:
        return test
    before = history.frame.loc[history.frame.index < test.dates[0]]
    if before.empty:
        return test
    return YieldPanel(pd.concat([before.iloc[-rows:], test.frame]))


def evaluate_forecasts(models: Mapping[str, ForecastModel], test: YieldPanel,
                       history: Optional[YieldPanel] = None,
                       mape_include_all: bool = False) -> Tuple[Dict[str, Dict[str, float]],
                                                                 Dict[str, Dict[str, int]], pd.DataFrame]:
    """
    Score forecasters on the test range at their last forecast step.

    Every test day with W + H - 1 preceding days (taken from `history` before
    the test start when given) is a target. Only step H of each forecast is
    scored.

    Returns:
        (table variant -> metric cells, MAPE exclusions, curve DataFrame)
    """
    if not models:
        raise ConfigError("No forecasters to evaluate")
    first = next(iter(models.values()))
    W, H = first.config.window, first.horizon
    for name, model in models.items():
        if (model.config.window, model.horizon) != (W, H):
            raise ConfigError(f"Forecaster '{name}' has a different window/horizon")

    context = _context_panel(test, history, W + H - 1)
    windows = rolling_windows(context, W, H)
    target_rows = np.arange(len(windows)) + W + H - 1
    in_test = context.dates[target_rows] >= test.dates[0]
    inputs = windows.inputs[in_test]
    actual = windows.targets[in_test, H - 1, :]
    if len(inputs) == 0:
        raise DataError("No forecast targets fall inside the test range")

    names = first.feature_names
    curve = pd.DataFrame({'date': [d.strftime('%Y-%m-%d') for d in context.dates[target_rows[in_test]]]})
    for f, feature in enumerate(names):
        curve[f'actual_{feature}'] = actual[:, f]

    table, excluded = {}, {}
    for variant, model in models.items():
        predicted = model.predict(inputs)[:, H - 1, :]
        cells, skipped = {}, {}
        for f, feature in enumerate(names):
            cells[f'rmse_{feature}'] = rmse(predicted[:, f], actual[:, f])
            result = mape_details(predicted[:, f], actual[:, f], include_all=mape_include_all)
            cells[f'mape_{feature}'] = result.value
            skipped[feature] = result.excluded
            curve[f'{variant}_{feature}'] = predicted[:, f]
            if result.excluded:
                logger.warning(f"MAPE for {variant}/{feature} excluded {result.excluded} near-zero targets")
        table[variant], excluded[variant] = cells, skipped
        logger.info(f"h={H} {variant}: " + ', '.join(f'{k}={v:.4f}' for k, v in cells.items()))
    return table, excluded, curve


def evaluate_classifiers(models: Mapping[Tuple[str, str], Any], test: YieldPanel, lookahead: int,
                         label_source: Optional[YieldPanel] = None) -> ClassificationReport:
    """
    Slide every classifier over the test panel and compute ROC/AUC.

    Args:
        models: (model kind, variant) -> LogisticModel or ClassifierModel
        test: Test panel; windows lie fully inside it
        lookahead: Label lookahead in trading days
        label_source: Longer panel supplying recession flags past the test end

    Returns:
        ClassificationReport with one result per model and the probability curves
    """
    if not models:
        raise ConfigError("No classifiers to evaluate")
    W = next(iter(models.values())).config.window
    windows = rolling_classifier_windows(test, W, lookahead, label_source=label_source)
    flags = pd.Series(test.recession, index=[d.strftime('%Y-%m-%d') for d in test.dates])
    markers = {d.strftime('%Y-%m-%d') for d in lead_markers(label_source if label_source is not None else test, lookahead)}

    curves = pd.DataFrame({'date': windows.dates})
    curves['recession'] = flags.loc[windows.dates].to_numpy()
    curves['lead_marker'] = [int(d in markers) for d in windows.dates]
    curves['label'] = windows.targets.astype(int)

    report = ClassificationReport(test_range=[windows.dates[0], windows.dates[-1]], lookahead=lookahead)
    for (kind, variant), model in models.items():
        scores = predict_probability(model, windows.inputs)
        roc = roc_auc(scores, windows.targets)
        rates = {}
        for threshold in RATE_THRESHOLDS:
            tpr, fpr = rates_at_threshold(scores, windows.targets, threshold)
            rates[str(threshold)] = {'tpr': tpr, 'fpr': fpr}
        result = ClassifierResult(model=kind, variant=variant, auc=roc.auc, rates=rates, roc=roc)
        curves[result.key] = scores
        report.results.append(result)
        logger.info(f"{kind}/{variant}: AUC={roc.auc:.3f}")
    report.curves = curves
    return report


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

class ExperimentRunner:
    """
    Runs one configured experiment and writes every artifact under out_dir.

    Layout:
        manifest.json
        gan/        dgan.ckpt, history.csv, examples.csv, fidelity/
        models/     one checkpoint per downstream model
        report/     forecast or classification report
    """

    def __init__(self, config: RunConfig, panel: Optional[YieldPanel] = None, out_dir=None):
        self.config = config
        self.lineage = SeedLineage(config.seed)
        self.out_dir = Path(out_dir or config.output_dir or output_root() / config.experiment)
        self._panel = panel
        self.counts: Dict[str, int] = {}

    @property
    def panel(self) -> YieldPanel:
        if self._panel is None:
            cfg = self.config
            if cfg.panel is None and None in (cfg.y1, cfg.y10, cfg.rec):
                raise ConfigError("Set either 'panel' or all of 'y1', 'y10', 'rec'")
            if cfg.panel is not None:
                self._panel = load_panel(cfg.panel)
            else:
                self._panel = align_panel(read_fred_csv(cfg.y1), read_fred_csv(cfg.y10), read_fred_csv(cfg.rec),
                                          policy=cfg.policy)
        return self._panel

    def _slice(self, name: str) -> YieldPanel:
        start, end = getattr(self.config, name)
        panel = slice_period(self.panel, start, end)
        self.counts[f'panel_{name}'] = len(panel)
        return panel

    def gan_samples(self, gan_panel: YieldPanel) -> Tuple[SampleSet, SampleSet]:
        """Real segments and generated segments (training the GAN unless a checkpoint is configured)."""
        cfg = self.config
        plan = AttributePlan(
            recession_in_window=True,
            future_recession_days=cfg.lookahead if cfg.experiment == 'recession' else None,
        )
        real = segment_gan_samples(gan_panel, cfg.segment_length, plan)
        self.counts['gan_segments'] = len(real)
        gan_dir = self.out_dir / 'gan'

        if cfg.gan_checkpoint:
            bundle = load_checkpoint(cfg.gan_checkpoint, expected_kind=GeneratorBundle.kind)
            logger.info(f"Loaded generator from {cfg.gan_checkpoint}")
        else:
            dgan_config = replace(cfg.dgan, seed=self.lineage.seed_for('dgan'))
            bundle, history = train_dgan(dgan_config, real)
            gan_dir.mkdir(parents=True, exist_ok=True)
            history.to_csv(gan_dir / 'history.csv')
            save_checkpoint(bundle, gan_dir / 'dgan.ckpt', self.lineage.to_dict())

        synthetic = generate(bundle, cfg.n_synthetic, self.lineage.seed_for('generate'),
                             clip_negative=cfg.clip_negative)
        self.counts['synthetic_segments'] = len(synthetic)
        report = build_fidelity_report(real, synthetic, max_lag=min(cfg.max_lag, cfg.segment_length - 1),
                                       real_series=gan_panel.features)
        report.write(gan_dir / 'fidelity')
        export_examples(real, synthetic, gan_dir / 'examples.csv')
        return real, synthetic

    def _record_sets(self, prefix: str, sets: Mapping[str, SupervisedSet]) -> None:
        for variant, data in sets.items():
            self.counts[f'{prefix}_{variant}'] = len(data)
            if self.config.save_sets:
                save_set(data, self.out_dir / 'sets' / f'{prefix}_{variant}.bin')

    def run_forecast(self) -> ForecastReport:
        cfg = self.config
        gan_panel, train_panel, test_panel = self._slice('gan_train'), self._slice('downstream_train'), self._slice('test')
        _, synthetic = self.gan_samples(gan_panel)

        report = ForecastReport(
            feature_names=list(synthetic.feature_names),
            test_range=[test_panel.iso_dates()[0], test_panel.iso_dates()[-1]],
            mape_include_all=cfg.mape_include_all,
        )
        for H in cfg.horizons:
            real_set = rolling_windows(train_panel, cfg.window, H)
            synth_set = windows_from_synthetic(synthetic, cfg.window, H)
            sets = {'real': real_set, 'synthetic': synth_set, 'combined': combine_sets(real_set, synth_set)}
            self._record_sets(f'forecast_h{H}', sets)

            models = {}
            for variant in VARIANTS:
                fc = replace(cfg.forecaster, seed=self.lineage.seed_for(f'forecaster.{variant}.h{H}'))
                models[variant] = train_forecaster(sets[variant], H, fc)
                save_checkpoint(models[variant], self.out_dir / 'models' / f'forecaster_{variant}_h{H}.ckpt',
                                self.lineage.to_dict())
            table, excluded, curve = evaluate_forecasts(models, test_panel, history=self.panel,
                                                        mape_include_all=cfg.mape_include_all)
            report.tables[H], report.mape_excluded[H], report.curves[H] = table, excluded, curve

        report.sample_counts = dict(self.counts)
        report.write(self.out_dir / 'report')
        self._write_manifest()
        return report

    def run_recession(self) -> ClassificationReport:
        cfg = self.config
        gan_panel, train_panel, test_panel = self._slice('gan_train'), self._slice('downstream_train'), self._slice('test')
        _, synthetic = self.gan_samples(gan_panel)

        label_source = self.panel if cfg.use_post_cutoff_labels else None
        real_set = rolling_classifier_windows(train_panel, cfg.window, cfg.lookahead, label_source=label_source)
        synth_set = windows_from_synthetic(synthetic, cfg.window, 0, label_attribute=FUTURE_RECESSION_ATTR)
        sets = {'real': real_set, 'synthetic': synth_set, 'combined': combine_sets(real_set, synth_set)}
        self._record_sets('classify', sets)

        models = {}
        for variant in VARIANTS:
            logistic = train_logistic_l1(sets[variant], config=cfg.logistic)
            lstm = train_lstm_classifier(
                sets[variant], replace(cfg.classifier, seed=self.lineage.seed_for(f'lstm_classifier.{variant}'))
            )
            for kind, model in (('logistic', logistic), ('lstm', lstm)):
                models[(kind, variant)] = model
                save_checkpoint(model, self.out_dir / 'models' / f'{kind}_{variant}.ckpt', self.lineage.to_dict())

        report = evaluate_classifiers(models, test_panel, cfg.lookahead, label_source=self.panel)
        report.sample_counts = dict(self.counts)
        report.write(self.out_dir / 'report')
        self._write_manifest()
        return report

    def _write_manifest(self) -> None:
        write_manifest(
            self.out_dir,
            self.config.to_dict(),
            seed=self.config.seed,
            lineage=self.lineage.to_dict(),
            ingest_policy=self.config.policy,
            panel_length=len(self.panel),
            counts=self.counts,
        )

    def run(self):
        logger.info(f"🚀 Running {self.config.experiment} experiment -> {self.out_dir}")
        if self.config.experiment == 'forecast':
            return self.run_forecast()
        return self.run_recession()


def run_experiment_forecast(config: RunConfig, panel: Optional[YieldPanel] = None, out_dir=None) -> ForecastReport:
    """Forecast study: three training-set variants x horizons, RMSE/MAPE per feature."""
    if config.experiment != 'forecast':
        raise ConfigError("run_experiment_forecast needs a 'forecast' run config")
    return ExperimentRunner(config, panel, out_dir).run()


def run_experiment_recession(config: RunConfig, panel: Optional[YieldPanel] = None,
                             out_dir=None) -> ClassificationReport:
    """Recession study: 2 model kinds x 3 training-set variants, ROC/AUC and probability curves."""
    if config.experiment != 'recession':
        raise ConfigError("run_experiment_recession needs a 'recession' run config")
    return ExperimentRunner(config, panel, out_dir).run()
