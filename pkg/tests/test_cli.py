"""
Command-line entry point: exit codes and a chain of subcommands.
"""

import json
import sys
from pathlib import Path

import pandas as pd
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from conftest import make_panel
from main import main

TINY_CONFIG = """
dgan:
  steps_per_pass: 5
  attribute_hidden: [4]
  minmax_hidden: [4]
  lstm_hidden: 4
  critic_hidden: [8]
  aux_critic_hidden: [4]
  epochs: 1
  batch_size: 16
  diversity_sample: 4
forecaster:
  hidden: [4]
  batch_size: 64
classifier:
  hidden: 4
  dense: 4
  batch_size: 64
logistic:
  max_iter: 100
"""


@pytest.fixture
def panel_csv(tmp_path):
    path = tmp_path / 'panel.csv'
    make_panel().to_csv(path)
    return path


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / 'tiny.yaml'
    path.write_text(TINY_CONFIG)
    return str(path)


def test_ingest_writes_aligned_panel(fred_files, tmp_path):
    out = tmp_path / 'panel.csv'
    code = main(['ingest', '--y1', str(fred_files['y1']), '--y10', str(fred_files['y10']),
                 '--rec', str(fred_files['rec']), '--out', str(out)])
    assert code == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ['date', 'y1', 'y10', 'recession']
    assert list(frame['date']) == ['2020-01-02', '2020-01-03', '2020-01-07']


def test_exit_codes(fred_files, tmp_path):
    missing = ['ingest', '--y1', str(tmp_path / 'nope.csv'), '--y10', str(fred_files['y10']),
               '--rec', str(fred_files['rec']), '--out', str(tmp_path / 'p.csv')]
    assert main(missing) == 3
    assert main(['--config', str(tmp_path / 'missing.yaml'), 'run-experiment', 'forecast']) == 2

    bad = tmp_path / 'bad.yaml'
    bad.write_text('experiments:\n  forecast:\n    segment_length: 125\n    dgan:\n      sample_length: 124\n')
    assert main(['--config', str(bad), 'run-experiment', 'forecast']) == 2

    with pytest.raises(SystemExit):
        main(['train-classifier', '--samples', 'x', '--kind', 'svm', '--out', 'y'])


def test_forecaster_chain(panel_csv, tiny_config, tmp_path, capsys):
    samples, model = tmp_path / 'h2.bin', tmp_path / 'f.ckpt'
    assert main(['make-samples', '--panel', str(panel_csv), '--kind', 'forecast', '--length', '5',
                 '--horizon', '2', '--end', '2001-12-31', '--out', str(samples)]) == 0
    assert main(['--config', tiny_config, 'train-forecaster', '--samples', str(samples), '--epochs', '1',
                 '--out', str(model)]) == 0
    assert main(['forecast', '--checkpoint', str(model), '--panel', str(panel_csv)]) == 0
    printed = capsys.readouterr().out
    assert 'step' in printed and 'y10' in printed

    report_dir = tmp_path / 'eval'
    assert main(['evaluate-forecasts', '--panel', str(panel_csv), '--model', f'real={model}',
                 '--start', '2002-01-02', '--out', str(report_dir)]) == 0
    report = json.loads((report_dir / 'forecast_report.json').read_text())
    assert set(report['tables']['h2']['real']) == {'rmse_y1', 'mape_y1', 'rmse_y10', 'mape_y10'}

    assert main(['evaluate-forecasts', '--panel', str(panel_csv), '--model', str(model),
                 '--out', str(report_dir)]) == 2


def test_gan_chain(panel_csv, tiny_config, tmp_path):
    segments, ckpt, synthetic = tmp_path / 'seg.bin', tmp_path / 'g.ckpt', tmp_path / 'syn.bin'
    assert main(['make-samples', '--panel', str(panel_csv), '--kind', 'gan', '--length', '10',
                 '--lookahead', '20', '--out', str(segments)]) == 0
    assert main(['--config', tiny_config, 'train-gan', '--samples', str(segments), '--seed', '3',
                 '--history', str(tmp_path / 'history.csv'), '--out', str(ckpt)]) == 0
    assert len(pd.read_csv(tmp_path / 'history.csv')) == 1
    assert main(['generate', '--checkpoint', str(ckpt), '--n', '12', '--seed', '1', '--out', str(synthetic)]) == 0
    assert main(['fidelity', '--real', str(segments), '--synthetic', str(synthetic), '--max-lag', '5',
                 '--out', str(tmp_path / 'fidelity')]) == 0
    assert (tmp_path / 'fidelity' / 'autocorrelation.csv').exists()
    assert (tmp_path / 'fidelity' / 'examples.csv').exists()
    # a generator is not a classifier
    assert main(['classify', '--checkpoint', str(ckpt), '--panel', str(panel_csv)]) == 3


def test_classifier_chain(panel_csv, tiny_config, tmp_path, capsys):
    samples = tmp_path / 'cls.bin'
    assert main(['make-samples', '--panel', str(panel_csv), '--kind', 'classify', '--length', '10',
                 '--lookahead', '20', '--end', '2001-12-31', '--label-panel', str(panel_csv),
                 '--out', str(samples)]) == 0
    logistic, lstm = tmp_path / 'logistic.ckpt', tmp_path / 'lstm.ckpt'
    assert main(['--config', tiny_config, 'train-classifier', '--samples', str(samples), '--kind', 'logistic',
                 '--lam', '0.5', '--out', str(logistic)]) == 0
    assert main(['--config', tiny_config, 'train-classifier', '--samples', str(samples), '--kind', 'lstm',
                 '--epochs', '1', '--out', str(lstm)]) == 0
    assert main(['classify', '--checkpoint', str(logistic), '--panel', str(panel_csv)]) == 0
    assert 'P(recession' in capsys.readouterr().out
    curve_path = tmp_path / 'curve.csv'
    assert main(['classify', '--checkpoint', str(lstm), '--panel', str(panel_csv), '--out', str(curve_path)]) == 0
    curve = pd.read_csv(curve_path)
    assert list(curve.columns) == ['date', 'probability']
    assert len(curve) == len(make_panel()) - 10 + 1
    assert curve['probability'].between(0, 1).all()

    out = tmp_path / 'auc'
    assert main(['evaluate-classifier', '--panel', str(panel_csv), '--model', f'logistic:real={logistic}',
                 '--model', f'lstm:real={lstm}', '--lookahead', '20', '--start', '2002-01-02',
                 '--out', str(out)]) == 0
    table = pd.read_csv(out / 'auc_table.csv')
    assert sorted(table['model']) == ['logistic', 'lstm']


def test_documented_flag_names(panel_csv, tiny_config, tmp_path, capsys):
    samples, model = tmp_path / 'h2.bin', tmp_path / 'f.ckpt'
    assert main(['make-samples', '--panel', str(panel_csv), '--kind', 'forecast', '--window', '5',
                 '--horizon', '2', '--end', '2001-12-31', '--out', str(samples)]) == 0
    assert main(['--config', tiny_config, 'train-forecaster', '--data', str(samples), '--horizon', '2',
                 '--epochs', '1', '--out', str(model)]) == 0
    assert main(['forecast', '--ckpt', str(model), '--panel', str(panel_csv)]) == 0
    assert 'step' in capsys.readouterr().out

    # the set was cut for two steps ahead
    assert main(['--config', tiny_config, 'train-forecaster', '--data', str(samples), '--horizon', '3',
                 '--epochs', '1', '--out', str(tmp_path / 'h3.ckpt')]) == 3


def test_config_values_override_flags(panel_csv, tmp_path):
    from core.checkpoint import read_checkpoint_header

    config = tmp_path / 'seeded.yaml'
    config.write_text(TINY_CONFIG.replace('dgan:\n', 'dgan:\n  seed: 5\n'))
    segments, ckpt, synthetic = tmp_path / 'seg.bin', tmp_path / 'g.ckpt', tmp_path / 'syn.bin'
    assert main(['make-samples', '--panel', str(panel_csv), '--kind', 'gan', '--window', '10',
                 '--lookahead', '20', '--out', str(segments)]) == 0
    assert main(['--config', str(config), 'train-gan', '--data', str(segments), '--seed', '9', '--epochs', '4',
                 '--history', str(tmp_path / 'history.csv'), '--out', str(ckpt)]) == 0

    assert read_checkpoint_header(ckpt)['seed_lineage']['seed'] == 5
    assert len(pd.read_csv(tmp_path / 'history.csv')) == 1

    assert main(['generate', '--ckpt', str(ckpt), '--n', '8', '--seed', '1', '--out', str(synthetic)]) == 0
    assert main(['fidelity', '--real', str(segments), '--synth', str(synthetic), '--max-lag', '5',
                 '--out', str(tmp_path / 'fidelity')]) == 0
    assert (tmp_path / 'fidelity' / 'fidelity.json').exists()
