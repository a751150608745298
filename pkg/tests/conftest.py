"""
Shared fixtures for the salemspec tests.
"""

import json
import typing as typ

import pytest

from salemspec.iceberg import Tower, TowerSpec, build_tower


@pytest.fixture
def morse_tower() -> Tower:
    """Heights 2, 4, ..., 2^8 with every q_n = 2."""
    return build_tower(TowerSpec(dimension=1, base=2, factors=(2,) * 7))


@pytest.fixture
def desk_tower() -> Tower:
    """Heights 4, 16, 96, 960."""
    return build_tower(TowerSpec(dimension=1, base=4, factors=(4, 6, 10)))


@pytest.fixture
def write_config(tmp_path) -> typ.Callable[[typ.Dict[str, typ.Any]], str]:
    """Writes a configuration document to a temporary file and returns its path."""
    def write(document: typ.Dict[str, typ.Any], name: str = 'config.json') -> str:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)
    return write
