"""Command-line interface tests."""

import json

import numpy as np
import pandas as pd
import pytest

from govern import config
from govern.cli import run
from govern.cli.parser import parse_args
from govern.data import load as load_data
from govern.nn import save_net
from govern.tests.tests import constant_net


@pytest.fixture
def config_file():
    return str(load_data('tests', 'config.json'))


def _main(*args):
    with pytest.raises(SystemExit) as e:
        run.main(list(args))
    return e.value.code


def test_parse_args(tmp_path, config_file):
    opts = parse_args(
        [
            'run',
            '--config',
            config_file,
            '--output-dir',
            str(tmp_path),
            '--set',
            'governor.horizon=5',
            '--governor',
            'naive_nn',
        ]
    )
    assert opts.command == 'run'
    assert opts.governor == 'naive-nn'
    assert config.governor.horizon == 5
    assert config.execution.output_dir == tmp_path.absolute()
    assert config.execution.log_dir == tmp_path.absolute() / 'logs'
    assert config.paths.net == tmp_path.absolute() / 'net.json'
    # Settings missing from the file keep their packaged defaults
    assert config.governor.operating_command == 1.0


def test_parse_args_rejects_unknown(tmp_path, config_file):
    with pytest.raises(SystemExit):
        parse_args(['run', '--governor', 'pid', '--output-dir', str(tmp_path)])
    with pytest.raises(SystemExit):
        parse_args(['sensitivity', '--set', 'governor.horizon', '--output-dir', str(tmp_path)])
    with pytest.raises(SystemExit):
        parse_args(['calibrate', '--config', str(tmp_path / 'missing.json')])


def test_version():
    with pytest.raises(SystemExit) as e:
        parse_args(['--version'])
    assert e.value.code == 0


def test_sensitivity(tmp_path, config_file):
    assert _main('sensitivity', '--config', config_file, '--output-dir', str(tmp_path)) == 0

    table = pd.read_csv(tmp_path / 'sensitivity.csv')
    assert list(table.columns) == ['output', 'j', 'k', 'abs_sensitivity']
    assert len(table) == 12 * 12
    row = table[(table.j == 2) & (table.k == 0)]
    assert row.abs_sensitivity.iloc[0] == pytest.approx(0.0025)
    assert np.all(table[table.k > table.j].abs_sensitivity == 0.0)

    snapshot = tmp_path / 'logs' / config.execution.run_uuid / config.CONFIG_FILENAME
    assert snapshot.is_file()


def test_run_pass_through(tmp_path, config_file):
    code = _main(
        'run', '--config', config_file, '--output-dir', str(tmp_path), '--governor', 'none'
    )
    assert code == 0
    trace = pd.read_csv(tmp_path / 'traces' / 'none.csv')
    assert len(trace) == 40
    assert trace['v'].iloc[-1] == 3.0
    assert trace['y0'].max() > 0.0


def test_missing_network(tmp_path, config_file):
    code = _main(
        'run', '--config', config_file, '--output-dir', str(tmp_path), '--governor', 'naive-nn'
    )
    assert code == run.EXIT_CONFIG


def test_unknown_override(tmp_path, config_file):
    code = _main(
        'sensitivity',
        '--config',
        config_file,
        '--output-dir',
        str(tmp_path),
        '--set',
        'governor.horizn=3',
    )
    assert code == run.EXIT_CONFIG


def test_invalid_plant(tmp_path, config_file):
    code = _main(
        'sensitivity',
        '--config',
        config_file,
        '--output-dir',
        str(tmp_path),
        '--set',
        'plant.kind=fuel_cell',
    )
    assert code == run.EXIT_CONFIG


def test_calibration_outcomes(tmp_path, config_file):
    save_net(constant_net(3.0, 12), tmp_path / 'net.json')
    common = ('--config', config_file, '--output-dir', str(tmp_path))

    code = _main(
        'calibrate', *common, '--set', 'governor.mbar=[0.0]', '--set', 'calibration.max_iter=1'
    )
    assert code == run.EXIT_CALIBRATION_CAP
    report = json.loads((tmp_path / 'calibration_report.json').read_text())
    assert report['status'] == 'cap_reached'
    assert report['provenance']['command'] == 'calibrate'
    assert not (tmp_path / 'mbar.json').exists()

    assert _main('calibrate', *common, '--set', 'governor.mbar=[10.0]') == 0
    mbar = json.loads((tmp_path / 'mbar.json').read_text())
    assert mbar['mbar'] == [10.0]
    assert len(mbar['provenance']['plant_hash']) == 64

    # The calibrated bound is picked up by the tightened governor
    assert _main('run', *common, '--governor', 'nn-mcg') == 0
    trace = pd.read_csv(tmp_path / 'traces' / 'nn-mcg.csv')
    assert np.all(trace['y0'] <= trace['eps0'] + 1e-6)
    assert trace['v'].max() <= 3.0


def test_malformed_artifacts(tmp_path, config_file):
    """Broken files from an earlier stage are reported as input errors, not crashes."""
    common = ('--config', config_file, '--output-dir', str(tmp_path))
    save_net(constant_net(3.0, 12), tmp_path / 'net.json')

    (tmp_path / 'mbar.json').write_text('{"mbar": [0.1,')
    assert _main('run', *common, '--governor', 'nn-mcg') == run.EXIT_CONFIG

    (tmp_path / 'mbar.json').write_text('{"mbar": ["wide"]}')
    assert _main('run', *common, '--governor', 'nn-mcg') == run.EXIT_CONFIG

    (tmp_path / 'dataset.csv').write_text('a,b\n1,2\n')
    assert _main('train', *common) == run.EXIT_CONFIG


@pytest.mark.integration
def test_pipeline(tmp_path, config_file):
    common = ('--config', config_file, '--output-dir', str(tmp_path))
    assert _main('collect', *common) == 0
    assert (tmp_path / 'dataset.csv').is_file()
    assert json.loads((tmp_path / 'dataset.json').read_text())['records'] == 120

    assert _main('train', *common) == 0
    report = json.loads((tmp_path / 'train_report.json').read_text())
    assert report['hidden_sizes'] == [10]

    assert _main('calibrate', *common, '--set', 'calibration.max_iter=30') == 0
    assert _main('run', *common, '--governor', 'nn-mcg') == 0
    methods = 'benchmark.methods=["none", "mcg", "nn-mcg"]'
    assert _main('benchmark', *common, '--set', methods) == 0

    benchmark = json.loads((tmp_path / 'benchmark.json').read_text())
    assert set(benchmark['methods']) == {'none', 'mcg', 'nn-mcg'}
    assert benchmark['methods']['mcg']['tracking_rmse_vs_mcg'] == 0.0


def _stable(obj):
    """Artifact content without creation timestamps."""
    if isinstance(obj, dict):
        return {k: _stable(v) for k, v in obj.items() if k != 'created'}
    if isinstance(obj, list):
        return [_stable(v) for v in obj]
    return obj


def _run_pipeline(out_dir, config_file):
    common = ('--config', config_file, '--output-dir', str(out_dir))
    assert _main('collect', *common) == 0
    assert _main('train', *common) == 0
    assert _main('calibrate', *common, '--set', 'calibration.max_iter=30') == 0
    assert _main('run', *common, '--governor', 'nn-mcg') == 0


@pytest.mark.integration
def test_pipeline_is_reproducible(tmp_path, config_file):
    first, second = tmp_path / 'first', tmp_path / 'second'
    _run_pipeline(first, config_file)
    _run_pipeline(second, config_file)

    for name in ('dataset.csv', 'net.json'):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    for name in ('dataset.json', 'train_report.json', 'calibration_report.json', 'mbar.json'):
        a = json.loads((first / name).read_text())
        b = json.loads((second / name).read_text())
        assert _stable(a) == _stable(b)

    a, b = (pd.read_csv(d / 'traces' / 'nn-mcg.csv') for d in (first, second))
    pd.testing.assert_frame_equal(
        a.drop(columns='wall_s'), b.drop(columns='wall_s'), check_exact=True
    )


@pytest.fixture(scope='module')
def full_pipeline(tmp_path_factory):
    """Collection, training and calibration at the default data-set size."""
    out_dir = tmp_path_factory.mktemp('full')
    common = (
        '--config',
        str(load_data('tests', 'config.json')),
        '--output-dir',
        str(out_dir),
        '--set',
        'profiles.collection.total_steps=9200',
        '--set',
        'nn.hidden_sizes=[[5], [10], [20]]',
        '--set',
        'nn.max_epochs=5000',
        '--set',
        'nn.patience=50',
        '--set',
        'calibration.max_iter=50',
        '--set',
        'profiles.calibration={"kind": "adversarial", "total_steps": 600, "dwell": 100}',
        '--set',
        'profiles.evaluation={"kind": "adversarial", "total_steps": 600, "dwell": 100}',
    )
    for command in ('collect', 'train', 'calibrate'):
        assert _main(command, *common) == 0
    return out_dir, common


@pytest.mark.integration
def test_imitation_quality(full_pipeline):
    out_dir, _ = full_pipeline
    assert json.loads((out_dir / 'dataset.json').read_text())['records'] == 9200
    report = json.loads((out_dir / 'train_report.json').read_text())
    # Two percent of the [-3, 3] command range
    assert report['final_rmse'] <= 0.02 * 6.0


@pytest.mark.integration
def test_three_way_benchmark(full_pipeline):
    out_dir, common = full_pipeline
    methods = 'benchmark.methods=["naive-nn", "mcg", "nn-mcg"]'
    assert _main('benchmark', *common, '--set', methods) == 0
    results = json.loads((out_dir / 'benchmark.json').read_text())['methods']
    naive, mcg, nnmcg = results['naive-nn'], results['mcg'], results['nn-mcg']

    assert naive['max_violation'] > 1e-4
    assert nnmcg['constraint_satisfied']
    assert nnmcg['tracking_rmse_vs_mcg'] <= 0.05 * 6.0

    assert naive['average_step_time'] < nnmcg['average_step_time'] < mcg['average_step_time']
    assert nnmcg['worst_case_step_time'] < mcg['worst_case_step_time']
    assert mcg['average_step_time'] >= 3.0 * nnmcg['average_step_time']
