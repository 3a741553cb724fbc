#!/usr/bin/env python3
"""
YieldGAN - synthetic Treasury yield paths for forecasting and recession prediction
Main entry point and orchestrator
"""

import sys
import argparse
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from utils.errors import exit_code_for
from utils.logger import setup_logger

logger = setup_logger('yieldgan', level='INFO')


def _parse_kv(pairs, what):
    """['real=a.ckpt', ...] -> {'real': 'a.ckpt', ...}"""
    from utils.errors import ConfigError

    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition('=')
        if not sep or not key or not value:
            raise ConfigError(f"{what} must look like NAME=PATH, got '{pair}'")
        out[key] = value
    return out


def _section(args, name):
    """Section `name` of --config (empty when no config file was given)."""
    from utils.config import get_config

    if not args.config:
        return {}
    return get_config(args.config, required=True).get(name, {}) or {}


def _settings(args, name, flags):
    """
    Section `name` of --config layered over the given command-line flags.

    Config values win; a flag only fills a key the config leaves unset.
    """
    section = dict(_section(args, name))
    merged = {}
    for key in flags:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key in section and section[key] != value:
            logger.warning(f"--{key.replace('_', '-')} {value} ignored, --config sets {name}.{key}={section[key]}")
        merged[key] = value
    merged.update(section)
    return merged


def _load_panel_arg(args):
    from services.ingest import load_panel, slice_period

    panel = load_panel(args.panel)
    if getattr(args, 'start', None) or getattr(args, 'end', None):
        panel = slice_period(panel, args.start or panel.dates[0], args.end or panel.dates[-1])
    return panel


def run_ingest(args):
    """Align FRED y1/y10/recession CSVs into one daily panel."""
    from services.ingest import align_panel, read_fred_csv, slice_period

    panel = align_panel(read_fred_csv(args.y1), read_fred_csv(args.y10), read_fred_csv(args.rec),
                        policy=args.policy)
    if args.start or args.end:
        panel = slice_period(panel, args.start or panel.dates[0], args.end or panel.dates[-1])
    panel.to_csv(args.out)
    logger.info(f"✅ Panel of {len(panel)} days ({panel.iso_dates()[0]}..{panel.iso_dates()[-1]}) -> {args.out}")


def run_make_samples(args):
    """Cut GAN segments or supervised windows from a panel."""
    from core.datasets import save_set
    from services.sampling import (AttributePlan, rolling_classifier_windows, rolling_windows,
                                   segment_gan_samples)
    from services.ingest import load_panel

    panel = _load_panel_arg(args)
    if args.kind == 'gan':
        plan = AttributePlan(recession_in_window=True, future_recession_days=args.lookahead)
        data = segment_gan_samples(panel, args.length, plan)
    elif args.kind == 'forecast':
        data = rolling_windows(panel, args.length, args.horizon)
    else:
        label_source = load_panel(args.label_panel) if args.label_panel else None
        if label_source is None and not args.drop_incomplete_labels:
            logger.warning("No --label-panel given: windows without a full lookahead are dropped")
        data = rolling_classifier_windows(panel, args.length, args.lookahead or 250, label_source=label_source)
    save_set(data, args.out)
    logger.info(f"✅ {len(data)} {args.kind} samples -> {args.out}")


def run_train_gan(args):
    from core.checkpoint import save_checkpoint
    from core.datasets import load_set
    from core.dgan import DGanConfig, train_dgan

    data = load_set(args.samples)
    settings = _settings(args, 'dgan', ('epochs', 'batch_size', 'seed', 'max_iterations'))
    settings.setdefault('sample_length', data.T)
    config = DGanConfig.from_dict(settings)
    bundle, history = train_dgan(config, data)
    save_checkpoint(bundle, args.out, {'seed': config.seed})
    if args.history:
        history.to_csv(args.history)
    logger.info(f"✅ Generator saved to {args.out}")


def run_generate(args):
    from core.checkpoint import load_checkpoint
    from core.datasets import save_set
    from core.dgan import GeneratorBundle, generate

    bundle = load_checkpoint(args.checkpoint, expected_kind=GeneratorBundle.kind)
    samples = generate(bundle, args.n, args.seed, clip_negative=args.clip_negative)
    save_set(samples, args.out, extra={'generator_seed': args.seed})
    logger.info(f"✅ {len(samples)} synthetic segments -> {args.out}")


def run_fidelity(args):
    from core.datasets import load_set
    from services.fidelity import build_fidelity_report, export_examples

    real, synthetic = load_set(args.real), load_set(args.synthetic)
    report = build_fidelity_report(real, synthetic, max_lag=args.max_lag, bins=args.bins)
    report.write(args.out)
    export_examples(real, synthetic, Path(args.out) / 'examples.csv', n=args.examples)


def run_train_forecaster(args):
    from core.checkpoint import save_checkpoint
    from core.datasets import load_set
    from services.downstream import ForecasterConfig, train_forecaster

    data = load_set(args.samples)
    settings = _settings(args, 'forecaster', ('epochs', 'seed', 'horizon'))
    H = settings.setdefault('horizon', data.H)
    model = train_forecaster(data, H, ForecasterConfig.from_dict(settings))
    save_checkpoint(model, args.out)
    logger.info(f"✅ Forecaster saved to {args.out}")


def run_forecast(args):
    import numpy as np
    import pandas as pd
    from core.checkpoint import load_checkpoint
    from services.downstream import ForecastModel, forecast
    from utils.errors import DataError

    model = load_checkpoint(args.checkpoint, expected_kind=ForecastModel.kind)
    panel = _load_panel_arg(args)
    W = model.config.window
    if len(panel) < W:
        raise DataError(f"Need {W} days of history, the panel has {len(panel)}")
    prediction = forecast(model, panel.features[-W:])
    frame = pd.DataFrame(prediction, columns=model.feature_names)
    frame.insert(0, 'step', np.arange(1, model.horizon + 1))
    frame.insert(0, 'origin', panel.iso_dates()[-1])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, float_format='%.17g', lineterminator='\n')
        logger.info(f"✅ {model.horizon}-step forecast -> {args.out}")
    print(frame.to_string(index=False))


def run_train_classifier(args):
    from core.checkpoint import save_checkpoint
    from core.datasets import load_set
    from services.downstream import ClassifierConfig, LogisticConfig, train_logistic_l1, train_lstm_classifier

    data = load_set(args.samples)
    if args.kind == 'logistic':
        config = LogisticConfig.from_dict(_settings(args, 'logistic', ('lam',)))
        model = train_logistic_l1(data, config=config)
    else:
        settings = _settings(args, 'classifier', ('epochs', 'seed'))
        model = train_lstm_classifier(data, ClassifierConfig.from_dict(settings))
    save_checkpoint(model, args.out)
    logger.info(f"✅ {model.kind} classifier saved to {args.out}")


def run_classify(args):
    import numpy as np
    import pandas as pd
    from core.checkpoint import load_checkpoint
    from services.downstream import predict_probability
    from utils.errors import DataError

    model = load_checkpoint(args.checkpoint)
    if model.kind not in ('logistic', 'lstm_classifier'):
        raise DataError(f"{args.checkpoint} holds a '{model.kind}' model, not a classifier")
    panel = _load_panel_arg(args)
    W = model.config.window
    if len(panel) < W:
        raise DataError(f"Need {W} days of history, the panel has {len(panel)}")
    if args.out:
        # one probability per day that closes a full window
        windows = np.lib.stride_tricks.sliding_window_view(panel.features, W, axis=0).transpose(0, 2, 1)
        curve = pd.DataFrame({'date': panel.iso_dates()[W - 1:],
                              'probability': predict_probability(model, np.ascontiguousarray(windows))})
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        curve.to_csv(args.out, index=False, float_format='%.17g', lineterminator='\n')
        logger.info(f"✅ {len(curve)} daily probabilities -> {args.out}")
    probability = float(predict_probability(model, panel.features[-W:][None])[0])
    print(f"{panel.iso_dates()[-1]} P(recession within lookahead) = {probability:.4f}")


def run_evaluate_forecasts(args):
    from core.checkpoint import load_checkpoint
    from services.downstream import ForecastModel
    from services.experiments import evaluate_forecasts
    from services.ingest import load_panel, slice_period
    from services.reports import ForecastReport

    history = load_panel(args.panel)
    test = slice_period(history, args.start or history.dates[0], args.end or history.dates[-1])
    models = {name: load_checkpoint(path, expected_kind=ForecastModel.kind)
              for name, path in _parse_kv(args.model, '--model').items()}
    table, excluded, curve = evaluate_forecasts(models, test, history=history,
                                                mape_include_all=args.mape_include_all)
    H = next(iter(models.values())).horizon
    report = ForecastReport(feature_names=next(iter(models.values())).feature_names,
                            tables={H: table}, mape_excluded={H: excluded}, curves={H: curve},
                            test_range=[test.iso_dates()[0], test.iso_dates()[-1]],
                            mape_include_all=args.mape_include_all)
    report.write(args.out)
    print(report.table_frame(H).to_string(index=False))


def run_evaluate_classifier(args):
    from core.checkpoint import load_checkpoint
    from services.experiments import evaluate_classifiers
    from services.ingest import load_panel, slice_period

    label_source = load_panel(args.panel)
    test = slice_period(label_source, args.start or label_source.dates[0], args.end or label_source.dates[-1])
    models = {}
    for name, path in _parse_kv(args.model, '--model').items():
        kind, _, variant = name.partition(':')
        models[(kind, variant or 'real')] = load_checkpoint(path)
    report = evaluate_classifiers(models, test, args.lookahead,
                                  label_source=None if args.drop_incomplete_labels else label_source)
    report.write(args.out)
    print(report.auc_frame().to_string(index=False))


def run_run_experiment(args):
    from services.experiments import load_run_config, run_experiment_forecast, run_experiment_recession

    flags = {}
    if args.seed is not None:
        flags['seed'] = args.seed
    if args.mape_include_all:
        flags['mape_include_all'] = True
    if args.drop_incomplete_labels:
        flags['use_post_cutoff_labels'] = False
    config = load_run_config(args.config or 'config/config.yaml', args.experiment, flags)
    runner = run_experiment_forecast if args.experiment == 'forecast' else run_experiment_recession
    report = runner(config, out_dir=args.out)
    if args.experiment == 'forecast':
        for H in sorted(report.tables):
            logger.info(f"Horizon {H}:\n{report.table_frame(H).to_string(index=False)}")
    else:
        logger.info(f"AUC:\n{report.auc_frame().to_string(index=False)}")


COMMANDS = {
    'ingest': run_ingest,
    'make-samples': run_make_samples,
    'train-gan': run_train_gan,
    'generate': run_generate,
    'fidelity': run_fidelity,
    'train-forecaster': run_train_forecaster,
    'forecast': run_forecast,
    'train-classifier': run_train_classifier,
    'classify': run_classify,
    'evaluate-forecasts': run_evaluate_forecasts,
    'evaluate-classifier': run_evaluate_classifier,
    'run-experiment': run_run_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='YieldGAN - synthetic Treasury yields for forecasting and recession prediction'
    )
    parser.add_argument('--config', type=str, default=None, help='YAML/JSON config file (its values override flags)')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    parser.add_argument('--log-dir', type=str, default=None, help='Also write rotating log files here')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('ingest', help='Align FRED CSVs into a daily panel')
    p.add_argument('--y1', required=True)
    p.add_argument('--y10', required=True)
    p.add_argument('--rec', required=True)
    p.add_argument('--policy', choices=['drop', 'ffill'], default='drop', help='Missing-yield policy')
    p.add_argument('--start')
    p.add_argument('--end')
    p.add_argument('--out', required=True)

    p = sub.add_parser('make-samples', help='Cut GAN segments or supervised windows')
    p.add_argument('--panel', required=True)
    p.add_argument('--kind', choices=['gan', 'forecast', 'classify'], required=True)
    p.add_argument('--window', '--length', dest='length', type=int, required=True, help='Segment length T or window W')
    p.add_argument('--horizon', type=int, default=1)
    p.add_argument('--lookahead', type=int, default=None, help='Future-recession attribute / label lookahead')
    p.add_argument('--label-panel', default=None, help='Longer panel labelling windows near the end')
    p.add_argument('--drop-incomplete-labels', action='store_true')
    p.add_argument('--start')
    p.add_argument('--end')
    p.add_argument('--out', required=True)

    p = sub.add_parser('train-gan', help='Train the generator on GAN segments')
    p.add_argument('--data', '--samples', dest='samples', required=True)
    p.add_argument('--epochs', type=int)
    p.add_argument('--batch-size', dest='batch_size', type=int)
    p.add_argument('--max-iterations', dest='max_iterations', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--history', default=None, help='Write per-epoch losses as CSV')
    p.add_argument('--out', required=True)

    p = sub.add_parser('generate', help='Sample synthetic segments from a generator checkpoint')
    p.add_argument('--ckpt', '--checkpoint', dest='checkpoint', required=True)
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--clip-negative', action='store_true', help='Clamp negative yields to 0')
    p.add_argument('--out', required=True)

    p = sub.add_parser('fidelity', help='Compare synthetic segments with real ones')
    p.add_argument('--real', required=True)
    p.add_argument('--synth', '--synthetic', dest='synthetic', required=True)
    p.add_argument('--max-lag', dest='max_lag', type=int, default=100)
    p.add_argument('--bins', type=int, default=50)
    p.add_argument('--examples', type=int, default=5)
    p.add_argument('--out', required=True)

    p = sub.add_parser('train-forecaster', help='Train a forecaster on a forecast set')
    p.add_argument('--data', '--samples', dest='samples', required=True)
    p.add_argument('--horizon', type=int, help='Forecast steps H (defaults to the set horizon)')
    p.add_argument('--epochs', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)

    p = sub.add_parser('forecast', help='Forecast from the last window of a panel')
    p.add_argument('--ckpt', '--checkpoint', dest='checkpoint', required=True)
    p.add_argument('--panel', required=True)
    p.add_argument('--end')
    p.add_argument('--out', default=None, help='Also write the forecast as CSV')

    p = sub.add_parser('train-classifier', help='Train a recession classifier')
    p.add_argument('--data', '--samples', dest='samples', required=True)
    p.add_argument('--kind', choices=['logistic', 'lstm'], required=True)
    p.add_argument('--lam', type=float, default=None, help='L1 strength (default: cross-validated)')
    p.add_argument('--epochs', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)

    p = sub.add_parser('classify', help='Recession probability for the last window of a panel')
    p.add_argument('--ckpt', '--checkpoint', dest='checkpoint', required=True)
    p.add_argument('--panel', required=True)
    p.add_argument('--end')
    p.add_argument('--out', default=None, help='Write date,probability for every full window as CSV')

    p = sub.add_parser('evaluate-forecasts', help='RMSE/MAPE of forecasters on a test range')
    p.add_argument('--panel', required=True, help='Full panel (history before --start is used as warm-up)')
    p.add_argument('--model', action='append', required=True, help='VARIANT=CHECKPOINT, repeatable')
    p.add_argument('--start')
    p.add_argument('--end')
    p.add_argument('--mape-include-all', action='store_true')
    p.add_argument('--out', required=True)

    p = sub.add_parser('evaluate-classifier', help='ROC/AUC of classifiers on a test range')
    p.add_argument('--panel', required=True)
    p.add_argument('--model', action='append', required=True, help='KIND:VARIANT=CHECKPOINT, repeatable')
    p.add_argument('--lookahead', type=int, default=250)
    p.add_argument('--drop-incomplete-labels', action='store_true')
    p.add_argument('--start')
    p.add_argument('--end')
    p.add_argument('--out', required=True)

    p = sub.add_parser('run-experiment', help='Run a full study end to end')
    p.add_argument('experiment', choices=['forecast', 'recession'])
    p.add_argument('--seed', type=int)
    p.add_argument('--mape-include-all', action='store_true')
    p.add_argument('--drop-incomplete-labels', action='store_true')
    p.add_argument('--out', default=None)
    return parser


def main(argv=None) -> int:
    """
    Main entry point for YieldGAN

    Returns:
        Process exit code (0 ok, 2 config, 3 data, 4 numerical, 1 other)
    """
    args = build_parser().parse_args(argv)

    if args.log_dir:
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
        setup_logger('yieldgan', log_dir=args.log_dir)
    if args.debug:
        logger.setLevel('DEBUG')
        logger.debug('Debug mode enabled')

    logger.info(f"Starting YieldGAN '{args.command}'")
    try:
        COMMANDS[args.command](args)
    except KeyboardInterrupt:
        logger.info("\nShutdown requested by user")
        return 1
    except Exception as e:
        code = exit_code_for(e)
        if code == 1:
            logger.error(f"Fatal error: {e}", exc_info=True)
        else:
            logger.error(f"❌ {type(e).__name__}: {e}")
        return code
    return 0


if __name__ == '__main__':
    sys.exit(main())
