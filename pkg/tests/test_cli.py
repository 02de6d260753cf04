import json

import pytest
from click.testing import CliRunner

from src.cli import cli
from src.services.serialization import read_csv, read_json


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, data):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(data))
    return str(path)


def test_sample_potential(runner, tmp_path):
    config = write_config(tmp_path, {'seed': 11, 'potential': {'n_max': 3}})
    result = runner.invoke(cli, ['sample-potential', '--config', config, '--output-root', str(tmp_path)])
    assert result.exit_code == 0, result.output
    data = read_json(str(tmp_path / 'potential.json'))
    assert data['seed'] == 11
    assert len(data['block_values']) == 4
    assert data['meta']['command'] == 'sample-potential'


def test_invalid_config(runner, tmp_path):
    config = write_config(tmp_path, {'seed': 1, 'unknown': True})
    result = runner.invoke(cli, ['sample-potential', '--config', config])
    assert result.exit_code == 1


def test_missing_output_dir(runner, tmp_path):
    config = write_config(tmp_path, {'output_dir': 'nowhere'})
    result = runner.invoke(cli, ['sample-potential', '--config', config, '--output-root', str(tmp_path)])
    assert result.exit_code == 1
    assert not (tmp_path / 'nowhere').exists()


def test_verify_with_injected_fault(runner, tmp_path):
    config = write_config(tmp_path, {'verify': {'examples': 3, 'inject': 'bracket_sign', 'suites': ['polyalg']}})
    result = runner.invoke(cli, ['verify', '--config', config, '--output-root', str(tmp_path)])
    assert result.exit_code == 3
    report = read_json(str(tmp_path / 'verify.json'))
    assert report['failed'] >= 1


def test_smalldiv_scan(runner, tmp_path):
    config = write_config(tmp_path, {'seed': 2, 'scan': {'k_max': 4, 'q_max': 2}})
    result = runner.invoke(cli, ['smalldiv-scan', '--config', config, '--output-root', str(tmp_path)])
    assert result.exit_code == 0, result.output
    meta, rows = read_csv(str(tmp_path / 'smalldiv_scan.csv'))
    assert meta['command'] == 'smalldiv-scan'
    assert rows and set(rows[0]) == {'q', 'k', 'l', 'removal', 'abs_omega', 'gamma_contribution'}
    summary = read_json(str(tmp_path / 'smalldiv_summary.json'))
    assert summary['pairs'] == len(rows)
    assert summary['meta']['config_hash'] == meta['config_hash']
