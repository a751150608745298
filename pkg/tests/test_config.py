"""
Tests for configuration loading.
"""

import logging
from io import StringIO

import pytest
from pytest import MonkeyPatch

from salemspec.config import (AnalyzeConfig, EnsembleConfig, IcebergConfig, RieszConfig,
                              default_output_dir, dump_config, load_config)


_logger = logging.getLogger(__name__)


def test_errors() -> None:
    """Tests for :fun:`load_config`'s failure conditions."""
    with pytest.raises(SystemExit) as excinfo:
        file = StringIO("""
            24
        """)
        load_config(_logger, file, 'riesz')
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit):
        file = StringIO("""
            command: plot
        """)
        load_config(_logger, file)
    with pytest.raises(SystemExit):
        file = StringIO("""
            command: riesz
        """)
        load_config(_logger, file, 'iceberg')
    with pytest.raises(SystemExit):
        file = StringIO("""
            riesz:
              amplitudes: [1.0, 2.0]
              frequencies: [1, 4]
        """)
        load_config(_logger, file, 'riesz')
    with pytest.raises(SystemExit):
        file = StringIO('{"tower": {"base": 2, "factors": [2]}, "replicas": 1}')
        load_config(_logger, file, 'ensemble')
    with pytest.raises(SystemExit):
        file = StringIO('{"tower": {"base": 2, "factors": [2]}, "level": 3}')
        load_config(_logger, file, 'iceberg')
    with pytest.raises(SystemExit):
        file = StringIO('{"input": "x.csv", "p_values": [0.5]}')
        load_config(_logger, file, 'analyze')
    with pytest.raises(SystemExit):
        file = StringIO('{"tower": {"base": 2, "factors": [2]}, "function": 3}')
        load_config(_logger, file, 'iceberg')


def test_load_riesz() -> None:
    """Tests a successful load of a Riesz experiment."""
    file = StringIO("""
        {"command": "riesz",
         "riesz": {"amplitudes": [1, 1], "frequencies": [4, 16]},
         "n_out": 100}
    """)
    config = load_config(_logger, file)
    assert isinstance(config, RieszConfig)
    assert config.riesz.frequencies == (4, 16)
    assert config.method == 'auto'
    assert config.n_out == 100
    assert config.seed is None


def test_load_iceberg() -> None:
    """Tests a successful load of an iceberg experiment."""
    file = StringIO("""
        command: iceberg
        tower:
          base: 2
          factors: [2, 2, 2]
        rotations:
          provenance: morse
        function:
          kind: values
          values: [1, -1]
        export_levels: [2]
    """)
    config = load_config(_logger, file)
    assert isinstance(config, IcebergConfig)
    assert config.level == 4
    assert config.tower.heights == (2, 4, 8, 16)
    assert config.with_seed(5) == config
    assert config.function.build(config.tower).mean_zero


def test_load_ensemble() -> None:
    """Tests defaults and seed overrides of ensemble experiments."""
    file = StringIO('{"tower": {"base": 4, "factors": [4, 6]}, "seed": 7}')
    config = load_config(_logger, file, 'ensemble')
    assert isinstance(config, EnsembleConfig)
    assert config.replicas == 256
    assert config.tests == ('mean-zero', 'recursion', 'moment-bound')
    assert config.with_seed(9).seed == 9


def test_env_var(monkeypatch: MonkeyPatch) -> None:
    """Tests the !env_var tag."""
    monkeypatch.setenv('TEST_INPUT', 'coefficients.csv')
    file = StringIO("""
        input: !env_var TEST_INPUT
        p_values: [2, 4, 6]
        weighted: !env_var TEST_WEIGHTED false
    """)
    config = load_config(_logger, file, 'analyze')
    assert isinstance(config, AnalyzeConfig)
    assert config.input == 'coefficients.csv'
    assert config.p_values == (2.0, 4.0, 6.0)
    assert config.weighted is False
    with pytest.raises(SystemExit):
        file = StringIO("""
            input: !env_var TEST_MISSING
        """)
        load_config(_logger, file, 'analyze')


@pytest.mark.parametrize('document', [
    '{"command": "riesz", "riesz": {"amplitudes": [0.5, 1], "frequencies": [1, 4],'
    ' "phases": [0.25, 3]}, "grid_size": 64, "method": "lacunary"}',
    '{"command": "riesz", "measure": "atomic", "atomic": {"atoms": [[0, 0.5],'
    ' [0.5, 0.5]]}}',
    '{"command": "iceberg", "tower": {"dimension": 2, "base": 2, "factors": [2]},'
    ' "rotations": {"provenance": "explicit", "values": [[[0, 0], [1, 0], [0, 1],'
    ' [1, 1]]]}}',
    '{"command": "ensemble", "tower": {"base": 4, "factors": [4, 6]},'
    ' "control": true, "tests": ["mean-zero"], "alpha_support": "coset"}',
    '{"command": "analyze", "input": "c.csv", "epsilon": 0.25}',
])
def test_round_trip(document) -> None:
    """Tests that parse, serialize, parse is the identity."""
    config = load_config(_logger, StringIO(document))
    text = dump_config(config)
    assert load_config(_logger, StringIO(text)) == config
    assert dump_config(load_config(_logger, StringIO(text))) == text


def test_default_output_dir(monkeypatch: MonkeyPatch) -> None:
    """Tests the output directory variable."""
    monkeypatch.delenv('SALEMSPEC_OUTPUT_DIR', raising=False)
    assert default_output_dir() == '.'
    monkeypatch.setenv('SALEMSPEC_OUTPUT_DIR', '/tmp/results')
    assert default_output_dir() == '/tmp/results'
