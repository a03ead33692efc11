import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from cli import cli
from core.complex_field import GridSpec, make_field
from core.error_handler import EXIT_CONFIG, EXIT_DEGENERACY, EXIT_EXTREMAL
from tools.field_io import write_field
from tools.reports import read_csv

SMALL_GRID = {'n': 32, 'half_width': 4.0, 'center': 0.5}


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.setenv('HOME', str(tmp_path))
    return CliRunner()


def _config(tmp_path, data):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_version(runner):
    result = runner.invoke(cli, ['--version'])
    assert result.exit_code == 0
    assert "qcvar" in result.output


def test_validate_accepts_a_good_config(runner, tmp_path):
    path = _config(tmp_path, {'mode': 'solve', 'grid': SMALL_GRID, 'coefficient': {'preset': 'zero'}})
    result = runner.invoke(cli, ['validate', path])
    assert result.exit_code == 0
    assert "valid" in result.output


def test_validate_rejects_large_epsilon(runner, tmp_path):
    path = _config(tmp_path, {
        'mode': 'variation_check', 'grid': SMALL_GRID, 'coefficient': {'preset': 'zero'},
        'variation': {'nu': {'preset': 'disk_indicator'}, 'epsilons': [0.6]},
    })
    result = runner.invoke(cli, ['validate', path])
    assert result.exit_code == EXIT_CONFIG
    assert "exceeds 1/2" in result.output


def test_run_solve(runner, tmp_path):
    out = tmp_path / "out"
    path = _config(tmp_path, {'mode': 'solve', 'grid': SMALL_GRID,
                              'coefficient': {'preset': 'disk_indicator', 'k': 0.2}})
    result = runner.invoke(cli, ['run', path, '--out', str(out)])
    assert result.exit_code == 0, result.output
    for name in ('mu.cfld', 'f.cfld', 'f_z.cfld', 'f_zbar.cfld', 'solution.json', 'summary.json'):
        assert (out / name).exists()
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['status'] == 'ok'
    assert summary['neumann_terms'] >= 1
    assert not (out / '.qcvar.lock').exists()


def test_run_variation_check(runner, tmp_path):
    out = tmp_path / "out"
    path = _config(tmp_path, {
        'mode': 'variation_check', 'grid': SMALL_GRID, 'coefficient': {'preset': 'zero'},
        'variation': {'nu': {'preset': 'disk_indicator', 'k': 0.1}, 'targets': [2, [-1, 1]]},
    })
    result = runner.invoke(cli, ['run', path, '-o', str(out), '-t', '2'])
    assert result.exit_code == 0, result.output
    rows = read_csv(out / 'convergence.csv')
    assert len(rows) == 6
    assert [float(r['epsilon']) for r in rows[::2]] == [0.2, 0.1, 0.05]


def test_run_missing_config(runner, tmp_path):
    result = runner.invoke(cli, ['run', str(tmp_path / "absent.yaml")])
    assert result.exit_code == EXIT_CONFIG


def test_run_solver_failure_exit_code(runner, tmp_path):
    path = _config(tmp_path, {'mode': 'solve', 'grid': SMALL_GRID,
                              'coefficient': {'preset': 'radial_stretch', 'K': 3.0},
                              'solver': {'max_terms': 1}, 'output': {'dir': str(tmp_path / "out")}})
    result = runner.invoke(cli, ['run', path])
    assert result.exit_code == 3
    summary = json.loads((tmp_path / "out" / 'summary.json').read_text())
    assert summary['status'] == 'failed'


def test_inspect(runner, tmp_path):
    spec = GridSpec(**SMALL_GRID)
    path = write_field(tmp_path / "z.cfld", make_field(spec, lambda z: np.where(np.abs(z) < 1, z, 0)))
    result = runner.invoke(cli, ['inspect', str(path)])
    assert result.exit_code == 0
    assert "L2 norm" in result.output


def test_inspect_rejects_other_files(runner, tmp_path):
    path = tmp_path / "notes.cfld"
    path.write_bytes(b"hello")
    result = runner.invoke(cli, ['inspect', str(path)])
    assert result.exit_code == EXIT_CONFIG


def test_doctor(runner):
    result = runner.invoke(cli, ['doctor'])
    assert result.exit_code == 0, result.output
    assert "6/6 checks passed" in result.output


EXTREMAL = {
    'mode': 'extremal', 'grid': {'n': 64, 'half_width': 4.0, 'center': 0.5},
    'constraints': {'kind': 'disk', 'center': 0, 'radius': 0.3, 'support_radius': 1.0},
    'functional': {'atoms': [{'zeta': 2, 'weight': 1}]},
    'extremal': {'theta': 0.5, 'tol': 1e-7, 'max_iter': 200},
}


def _without_timestamps(path):
    summary = json.loads(path.read_text())
    return {k: v for k, v in summary.items() if k not in ('started', 'finished')}


def test_runs_are_reproducible(runner, tmp_path):
    configs = {
        'solve': {'mode': 'solve', 'grid': SMALL_GRID,
                  'coefficient': {'preset': 'disk_indicator', 'k': 0.2}},
        'variation': {'mode': 'variation_check', 'grid': SMALL_GRID, 'coefficient': {'preset': 'zero'},
                      'variation': {'nu': {'preset': 'disk_indicator', 'k': 0.1}, 'targets': [2]}},
    }
    for name, data in configs.items():
        path = _config(tmp_path, data)
        first, second = tmp_path / f"{name}1", tmp_path / f"{name}2"
        for out in (first, second):
            result = runner.invoke(cli, ['run', path, '--out', str(out)])
            assert result.exit_code == 0, result.output
        produced = sorted(p.name for p in first.iterdir() if p.name != 'summary.json')
        assert produced
        for artifact in produced:
            assert (first / artifact).read_bytes() == (second / artifact).read_bytes(), artifact
        assert _without_timestamps(first / 'summary.json') == _without_timestamps(second / 'summary.json')
    assert (tmp_path / 'variation1' / 'convergence.csv').exists()
    assert (tmp_path / 'solve1' / 'f.cfld').exists()


def test_run_gateaux_check(runner, tmp_path):
    out = tmp_path / "out"
    path = _config(tmp_path, {
        'mode': 'gateaux_check', 'grid': {'n': 64, 'half_width': 4.0, 'center': 0.5},
        'coefficient': {'preset': 'zero'},
        'variation': {'nu': {'preset': 'disk_indicator', 'k': 0.1}},
        'functional': {'atoms': [{'zeta': 2, 'weight': 1}]},
    })
    result = runner.invoke(cli, ['run', path, '--out', str(out)])
    assert result.exit_code == 0, result.output
    rows = read_csv(out / 'gateaux.csv')
    assert [float(r['epsilon']) for r in rows] == [0.2, 0.1, 0.05]
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['predicted'] < 0


def test_run_extremal(runner, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli, ['run', _config(tmp_path, EXTREMAL), '--out', str(out)])
    assert result.exit_code == 0, result.output
    for name in ('run_log.csv', 'mu.cfld', 'f.cfld', 'summary.json'):
        assert (out / name).exists()
    summary = json.loads((out / 'summary.json').read_text())
    checks = summary['checks']
    assert checks['boundary_residual']['passed']
    assert checks['normal_inequality']['passed']
    assert checks['normal_inequality']['tested'] > 0
    assert summary['final']['omega_value'] > 2.0


def test_run_degenerate_functional_exit_code(runner, tmp_path):
    out = tmp_path / "out"
    data = dict(EXTREMAL, functional={'atoms': [{'zeta': 2, 'weight': 0}]})
    result = runner.invoke(cli, ['run', _config(tmp_path, data), '--out', str(out)])
    assert result.exit_code == EXIT_DEGENERACY
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['status'] == 'failed'
    assert summary['error']
    assert not (out / '.qcvar.lock').exists()


def test_run_extremal_iteration_limit_exit_code(runner, tmp_path):
    out = tmp_path / "out"
    data = dict(EXTREMAL, extremal={'tol': 1e-12, 'max_iter': 1})
    result = runner.invoke(cli, ['run', _config(tmp_path, data), '--out', str(out)])
    assert result.exit_code == EXIT_EXTREMAL
    assert len(read_csv(out / 'run_log.csv')) == 1
    assert json.loads((out / 'summary.json').read_text())['status'] == 'failed'


def test_validate_disk_family_from_files(runner, tmp_path):
    spec = GridSpec(**SMALL_GRID)
    center = write_field(tmp_path / "c.cfld", make_field(spec, lambda z: 0 * z))
    radius = write_field(tmp_path / "k.cfld", make_field(spec, lambda z: np.where(np.abs(z) < 1, 0.3, 0.0) + 0j))
    data = {'mode': 'extremal', 'grid': SMALL_GRID,
            'constraints': {'kind': 'disk', 'center_file': str(center), 'radius_file': str(radius)},
            'functional': {'atoms': [{'zeta': 2, 'weight': 1}]}}
    result = runner.invoke(cli, ['validate', _config(tmp_path, data)])
    assert result.exit_code == 0, result.output

    complex_radius = write_field(tmp_path / "kc.cfld", make_field(spec, lambda z: 0.1j + 0 * z))
    data['constraints']['radius_file'] = str(complex_radius)
    result = runner.invoke(cli, ['validate', _config(tmp_path, data)])
    assert result.exit_code == EXIT_CONFIG
    assert "must be real" in result.output

    data['constraints'] = {'kind': 'disk', 'center_file': str(center), 'radius': 0.3}
    result = runner.invoke(cli, ['validate', _config(tmp_path, data)])
    assert result.exit_code == EXIT_CONFIG


def test_validate_show_prints_settings(runner, tmp_path):
    path = _config(tmp_path, {'mode': 'solve', 'grid': SMALL_GRID, 'coefficient': {'preset': 'zero'}})
    result = runner.invoke(cli, ['validate', path, '--show'])
    assert result.exit_code == 0, result.output
    assert "Run Configuration" in result.output
    assert "max_terms" in result.output
    assert "radial_stretch" in result.output
