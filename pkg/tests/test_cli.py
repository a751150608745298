"""
End-to-end tests of the command-line program.
"""

import json
import logging

import numpy as np
import pytest

from salemspec.cli import main
from salemspec.export import read_table

MORSE = {
    'command': 'iceberg',
    'tower': {'base': 2, 'factors': [2] * 8},
    'rotations': {'provenance': 'morse'},
    'function': {'kind': 'values', 'values': [1, -1]},
    'export_levels': [2],
}

RANDOM_ICEBERG = {
    'command': 'iceberg',
    'tower': {'base': 4, 'factors': [4, 6]},
    'rotations': {'provenance': 'random', 'seed': 7},
    'function': {'kind': 'random-sign', 'seed': 1},
}

SMALL_ENSEMBLE = {
    'command': 'ensemble',
    'tower': {'base': 2, 'factors': [2, 2, 2]},
    'function': {'kind': 'random-sign', 'seed': 3},
    'replicas': 8,
    'seed': 5,
    'control': True,
}


def _run(command, config_path, out, *extra) -> int:
    return main([command, '--config', config_path, '--out', str(out), *extra])


def _summary(out) -> dict:
    return json.loads((out / 'summary.json').read_text())


def test_riesz_lacunary(tmp_path, write_config) -> None:
    """Tests that both pathways are written and agree."""
    path = write_config({'command': 'riesz',
                         'riesz': {'amplitudes': [1, 0.5, 1],
                                   'frequencies': [2, 9, 40],
                                   'phases': [0, 1, 2]},
                         'n_out': 64})
    assert _run('riesz', path, tmp_path) == 0
    summary = _summary(tmp_path)
    assert summary['pathways'] == ['lacunary', 'quadrature']
    assert summary['pathway_difference'] <= 1e-10
    for name in ('coefficients_lacunary.csv', 'coefficients_quadrature.csv',
                 'density.csv', 'decay_fit.json'):
        assert (tmp_path / name).exists()
    coefficients = read_table(tmp_path / 'coefficients_lacunary.csv')
    assert coefficients.columns == ('n', 're', 'im', 'abs')
    assert len(coefficients.rows) == 129
    assert np.allclose(coefficients.column('abs'),
                       np.hypot(coefficients.column('re'), coefficients.column('im')))


def test_riesz_single_factor(tmp_path, write_config) -> None:
    """Tests that a spectrum too sparse to fit still succeeds."""
    path = write_config({'command': 'riesz',
                         'riesz': {'amplitudes': [0.5], 'frequencies': [7]},
                         'n_out': 64})
    assert _run('riesz', path, tmp_path) == 0
    assert _summary(tmp_path)['kappa_hat'] is None
    assert not (tmp_path / 'decay_fit.json').exists()
    assert (tmp_path / 'density.csv').exists()


def test_riesz_errors(tmp_path, write_config, caplog) -> None:
    """Tests exit codes of invalid Riesz runs."""
    path = write_config({'command': 'riesz',
                         'riesz': {'amplitudes': [1, 1], 'frequencies': [2, 5]}})
    with caplog.at_level(logging.CRITICAL):
        assert _run('riesz', path, tmp_path, '--method', 'lacunary') == 2
    assert 'lacunarity violated at index 1' in caplog.text
    assert _run('riesz', path, tmp_path, '--n-out', '0') == 2
    assert _run('riesz', path, tmp_path, '--method', 'quadrature', '--n-out', '8') == 0


def test_cantor(tmp_path, write_config) -> None:
    """Tests Cantor coefficients followed by their analysis."""
    path = write_config({'command': 'riesz', 'measure': 'cantor', 'n_out': 729})
    assert _run('riesz', path, tmp_path) == 0
    coefficients = tmp_path / 'coefficients.csv'
    analysis = tmp_path / 'analysis'
    path = write_config({'command': 'analyze', 'input': str(coefficients)},
                        'analyze.json')
    assert _run('analyze', path, analysis) == 0
    summary = _summary(analysis)
    assert summary['kind'] == 'fourier'
    table = read_table(analysis / 'self_similarity.csv')
    assert len(table.rows) == 243
    assert np.max(table.column('difference')) <= 1e-10
    assert (analysis / 'wiener.csv').exists()


def test_iceberg_morse(tmp_path, write_config) -> None:
    """Tests the Morse correlation R(2) = -1 on level 2."""
    assert _run('iceberg', write_config(MORSE), tmp_path) == 0
    table = read_table(tmp_path / 'correlation_level2.csv')
    assert table.columns == ('t', 're', 'im', 'abs')
    assert table.column('abs').tolist() == pytest.approx([1, 0, 1, 0], abs=1e-15)
    assert table.column('re').tolist() == pytest.approx([1, 0, -1, 0], abs=1e-15)
    function = read_table(tmp_path / 'function.csv')
    assert len(function.rows) == 2 ** 9
    assert _summary(tmp_path)['provenance'] == 'morse'


def test_iceberg_determinism(tmp_path, write_config) -> None:
    """Tests byte-identical output of repeated seeded runs."""
    path = write_config(RANDOM_ICEBERG)
    assert _run('iceberg', path, tmp_path / 'first') == 0
    assert _run('iceberg', path, tmp_path / 'second') == 0
    for name in ('function.csv', 'correlation.csv', 'spectral_density.csv',
                 'rotations.json', 'summary.json'):
        assert (tmp_path / 'first' / name).read_bytes() == \
            (tmp_path / 'second' / name).read_bytes()
    assert _run('iceberg', path, tmp_path / 'third', '--seed', '8') == 0
    assert (tmp_path / 'first' / 'function.csv').read_bytes() != \
        (tmp_path / 'third' / 'function.csv').read_bytes()


def test_iceberg_errors(tmp_path, write_config) -> None:
    """Tests validation failures of iceberg runs."""
    explicit = dict(RANDOM_ICEBERG,
                    rotations={'provenance': 'explicit', 'values': [[0, 1, 2, 4],
                                                                     [0] * 6]})
    assert _run('iceberg', write_config(explicit), tmp_path) == 2
    cube = dict(RANDOM_ICEBERG, tower={'dimension': 3, 'base': 2, 'factors': [2]})
    assert _run('iceberg', write_config(cube), tmp_path) == 2
    morse = dict(MORSE, tower={'base': 2, 'factors': [3]})
    assert _run('iceberg', write_config(morse), tmp_path) == 2


def test_ensemble(tmp_path, write_config) -> None:
    """Tests the ensemble report and its independence of the thread count."""
    path = write_config(SMALL_ENSEMBLE)
    assert _run('ensemble', path, tmp_path / 'one') == 0
    assert _run('ensemble', path, tmp_path / 'four', '--threads', '4') == 0
    for name in ('ensemble.json', 'moments_level4.csv', 'control_moments.csv'):
        assert (tmp_path / 'one' / name).read_bytes() == \
            (tmp_path / 'four' / name).read_bytes()
    report = json.loads((tmp_path / 'one' / 'ensemble.json').read_text())
    assert [level['stats']['level'] for level in report['levels']] == [1, 2, 3, 4]
    assert report['levels'][0]['tests'] == []
    names = [test['name'] for test in report['levels'][3]['tests']]
    assert names == ['mean-zero', 'recursion', 'moment-bound']
    assert report['control']['tests'][0]['expected_control'] is True


def test_ensemble_errors(tmp_path, write_config) -> None:
    """Tests exit codes of invalid ensembles."""
    with pytest.raises(SystemExit) as excinfo:
        _run('ensemble', write_config(dict(SMALL_ENSEMBLE, replicas=1)), tmp_path)
    assert excinfo.value.code == 2
    assert _run('ensemble', write_config(SMALL_ENSEMBLE), tmp_path, '--threads', '0') == 2
    odd = dict(SMALL_ENSEMBLE, tower={'base': 3, 'factors': [2]})
    assert _run('ensemble', write_config(odd), tmp_path) == 2


def test_analyze_power_law(tmp_path, write_config) -> None:
    """Tests the decay fit of a synthetic t^(-1/2) table."""
    table = tmp_path / 'synthetic.csv'
    table.write_text('t,re,im\n' + ''.join(f'{k},{k ** -0.5!r},0\n'
                                         for k in range(1, 4097)))
    path = write_config({'command': 'analyze', 'input': str(table)})
    assert _run('analyze', path, tmp_path / 'out') == 0
    summary = _summary(tmp_path / 'out')
    assert summary['kind'] == 'sequence'
    assert summary['kappa_hat'] == pytest.approx(-0.5, abs=0.02)
    profiles = read_table(tmp_path / 'out' / 'lp_profiles.csv')
    assert set(profiles.column('p').tolist()) == {2.0, 4.0}
    plot = read_table(tmp_path / 'out' / 'plot_data.csv')
    assert plot.columns == ('log2_t', 'log2_max')


def test_analyze_errors(tmp_path, write_config, caplog) -> None:
    """Tests exit codes of invalid and degenerate inputs."""
    table = tmp_path / 'input.csv'
    path = write_config({'command': 'analyze', 'input': str(table)})
    table.write_text('')
    assert _run('analyze', path, tmp_path / 'out') == 2
    table.write_text('t,re\n1,1\n2,oops\n')
    with caplog.at_level(logging.CRITICAL):
        assert _run('analyze', path, tmp_path / 'out') == 2
    assert 'line 3' in caplog.text
    table.write_text('t,re\n' + ''.join(f'{k},0\n' for k in range(1, 17)))
    assert _run('analyze', path, tmp_path / 'out') == 3
    missing = write_config({'command': 'analyze', 'input': str(tmp_path / 'none.csv')},
                           'missing.json')
    assert _run('analyze', missing, tmp_path / 'out') == 2


def test_output_dir_variable(tmp_path, write_config, monkeypatch) -> None:
    """Tests the default output directory."""
    monkeypatch.setenv('SALEMSPEC_OUTPUT_DIR', str(tmp_path / 'env'))
    path = write_config({'command': 'riesz', 'measure': 'cantor', 'n_out': 16})
    assert main(['riesz', '--config', path]) == 0
    assert (tmp_path / 'env' / 'summary.json').exists()


def test_version(capsys) -> None:
    """Tests the version flag."""
    with pytest.raises(SystemExit) as excinfo:
        main(['--version'])
    assert excinfo.value.code == 0
    assert capsys.readouterr().out.startswith('salemspec ')
