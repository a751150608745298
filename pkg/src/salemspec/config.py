"""
This is the experiment configuration parser for salemspec.

Experiment documents are JSON, or YAML for hand-written files; the YAML loader
reads both.
"""

from __future__ import annotations

import io
import json
import os
import typing as typ
from functools import partial
from logging import Logger
from typing import NamedTuple

import yaml

from salemspec.errors import SalemspecError
from salemspec.iceberg import (ALPHA_SUPPORTS, CylindricFunction, RotationFamily, Tower,
                               cylindric, explicit_rotations, morse_rotations,
                               random_sign_function, sample_rotations,
                               tower_from_document, tower_to_document)
from salemspec.measures import (AtomicMeasure, RieszSpec, atomic_from_document,
                                atomic_to_document, riesz_from_document,
                                riesz_to_document)

OUTPUT_DIR_VARIABLE = 'SALEMSPEC_OUTPUT_DIR'
COMMANDS = ('riesz', 'iceberg', 'ensemble', 'analyze')
MEASURES = ('riesz', 'cantor', 'atomic')
METHODS = ('auto', 'quadrature', 'lacunary')
FUNCTION_KINDS = ('random-sign', 'values')
TESTS = ('mean-zero', 'recursion', 'moment-bound')


class ConfigError(SalemspecError):
    """Raised for a missing or ill-typed configuration entry."""


class ConfigFileLoader(yaml.FullLoader):  # pylint: disable=too-many-ancestors
    """Our YAML loader class, which comes with an attached logger."""
    logger: Logger

    def __init__(self, stream, logger: Logger) -> None:
        super().__init__(stream)
        self.logger = logger
        self.add_constructor('!env_var', ConfigFileLoader._env_var_constructor)

    @staticmethod
    def _env_var_constructor(loader: ConfigFileLoader, node: yaml.nodes.Node) -> str:
        """Load environment variables and embed them into the configuration."""
        value = str(node.value)
        try:
            env, default = value.split(maxsplit=1)
        except ValueError:
            env, default = value, None

        if env in os.environ:
            return os.environ[env]
        if default:
            loader.logger.warning(
                'Environment variable %s not defined, using default value: %s',
                env, default)
            return default
        loader.logger.critical(
            'Environment variable %s not defined and no default value provided', env)
        raise SystemExit(2)


def _int(value: typ.Any, key: str, minimum: typ.Optional[int] = None) -> int:
    if isinstance(value, str):
        try:
            value = int(value.strip())
        except ValueError as exc:
            raise ConfigError(f'{key}: {value!r} is not an integer') from exc
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f'{key}: {value!r} is not an integer')
    if minimum is not None and value < minimum:
        raise ConfigError(f'{key}: {value} is below {minimum}')
    return value


def _float(value: typ.Any, key: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f'{key}: {value!r} is not a number')
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'{key}: {value!r} is not a number') from exc


def _bool(value: typ.Any, key: str) -> bool:
    if isinstance(value, str) and value.lower() in ('true', 'false'):
        return value.lower() == 'true'
    if not isinstance(value, bool):
        raise ConfigError(f'{key}: {value!r} is not a boolean')
    return value


def _choice(value: typ.Any, key: str, choices: typ.Sequence[str]) -> str:
    if value not in choices:
        raise ConfigError(f'{key}: {value!r} is not one of {", ".join(choices)}')
    return value


def _mapping(yml: typ.Mapping[str, typ.Any], key: str) -> typ.Mapping[str, typ.Any]:
    value = yml.get(key)
    if not isinstance(value, dict):
        raise ConfigError(f'{key}: expected a mapping')
    return value


def _seed(value: typ.Any, key: str) -> int:
    seed = _int(value, key, minimum=0)
    if seed >= 2 ** 64:
        raise ConfigError(f'{key}: {seed} is not an unsigned 64-bit integer')
    return seed


class FunctionSpec(NamedTuple):
    """How to build the cylindric test function.

    Attributes:
        kind: 'random-sign' for the mean-zero +-1 function drawn from `seed`,
            'values' for explicit values in row-major order.
        level: The base level n0.
        seed: The seed of a random-sign function.
        values: The explicit values.
    """
    kind: str
    level: int = 1
    seed: typ.Optional[int] = None
    values: typ.Tuple[float, ...] = ()

    def build(self, tower: Tower) -> CylindricFunction:
        """The cylindric function on the given tower."""
        if self.kind == 'random-sign':
            assert self.seed is not None
            return random_sign_function(tower, self.level, self.seed)
        return cylindric(tower, self.level, self.values)

    def to_document(self) -> typ.Dict[str, typ.Any]:
        """The configuration document."""
        if self.kind == 'random-sign':
            return {'kind': self.kind, 'level': self.level, 'seed': self.seed}
        return {'kind': self.kind, 'level': self.level, 'values': list(self.values)}


def _function_spec(yml: typ.Any) -> FunctionSpec:
    if not isinstance(yml, dict):
        raise ConfigError('function: expected a mapping')
    kind = _choice(yml.get('kind', 'random-sign'), 'function.kind', FUNCTION_KINDS)
    level = _int(yml.get('level', 1), 'function.level', minimum=1)
    if kind == 'random-sign':
        return FunctionSpec(kind=kind, level=level,
                            seed=_seed(yml.get('seed', 0), 'function.seed'))
    values = yml.get('values')
    if not isinstance(values, list) or not values:
        raise ConfigError('function.values: expected a nonempty list')
    return FunctionSpec(kind=kind, level=level,
                        values=tuple(_float(v, 'function.values') for v in values))


class RotationSpec(NamedTuple):
    """How to obtain the rotation family.

    Attributes:
        provenance: 'random', 'morse' or 'explicit'.
        seed: The seed of a random family.
        alpha_support: 'full' or 'coset', for random families.
        values: Per-level rotation vectors of an explicit family.
    """
    provenance: str
    seed: typ.Optional[int] = None
    alpha_support: str = 'full'
    values: typ.Tuple[typ.Any, ...] = ()

    def build(self, tower: Tower) -> RotationFamily:
        """The rotation family on the given tower."""
        if self.provenance == 'morse':
            return morse_rotations(tower)
        if self.provenance == 'explicit':
            return explicit_rotations(tower, self.values)
        assert self.seed is not None
        return sample_rotations(tower, self.seed, alpha_support=self.alpha_support)

    def to_document(self) -> typ.Dict[str, typ.Any]:
        """The configuration document."""
        if self.provenance == 'random':
            return {'provenance': self.provenance, 'seed': self.seed,
                    'alpha_support': self.alpha_support}
        if self.provenance == 'explicit':
            return {'provenance': self.provenance, 'values': _lists(self.values)}
        return {'provenance': self.provenance}


def _tuples(value: typ.Any) -> typ.Any:
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def _lists(value: typ.Any) -> typ.Any:
    if isinstance(value, tuple):
        return [_lists(v) for v in value]
    return value


def _rotation_spec(yml: typ.Any) -> RotationSpec:
    if not isinstance(yml, dict):
        raise ConfigError('rotations: expected a mapping')
    provenance = _choice(yml.get('provenance', 'random'), 'rotations.provenance',
                         ('random', 'morse', 'explicit'))
    if provenance == 'random':
        return RotationSpec(
            provenance=provenance, seed=_seed(yml.get('seed', 0), 'rotations.seed'),
            alpha_support=_choice(yml.get('alpha_support', 'full'),
                                  'rotations.alpha_support', ALPHA_SUPPORTS))
    if provenance == 'explicit':
        values = yml.get('values')
        if not isinstance(values, list):
            raise ConfigError('rotations.values: expected a list per level')
        return RotationSpec(provenance=provenance, values=_tuples(values))
    return RotationSpec(provenance=provenance)


class RieszConfig(NamedTuple):
    """Configuration of the `riesz` command.

    Attributes:
        measure: 'riesz', 'cantor' or 'atomic'.
        riesz: The Riesz product, for measure 'riesz'.
        atomic: The atomic measure, for measure 'atomic'.
        method: 'auto', 'quadrature' or 'lacunary'.
        n_out: The largest coefficient index written.
        grid_size: The quadrature grid; the smallest admissible one when None.
        epsilon: The neglected mass of the concentration diagnostic.
        depth: The product depth of the Cantor coefficients.
    """
    measure: str
    riesz: typ.Optional[RieszSpec] = None
    atomic: typ.Optional[AtomicMeasure] = None
    method: str = 'auto'
    n_out: int = 1024
    grid_size: typ.Optional[int] = None
    epsilon: float = 0.5
    depth: int = 64

    @property
    def seed(self) -> typ.Optional[int]:
        """Deterministic measures carry no seed."""
        return None

    def with_seed(self, seed: int) -> RieszConfig:  # pylint: disable=unused-argument
        """Seeds do not apply to deterministic measures."""
        return self

    def to_document(self) -> typ.Dict[str, typ.Any]:
        """The configuration document."""
        document: typ.Dict[str, typ.Any] = {
            'command': 'riesz', 'measure': self.measure, 'method': self.method,
            'n_out': self.n_out, 'epsilon': self.epsilon, 'depth': self.depth,
        }
        if self.grid_size is not None:
            document['grid_size'] = self.grid_size
        if self.riesz is not None:
            document['riesz'] = riesz_to_document(self.riesz)
        if self.atomic is not None:
            document['atomic'] = atomic_to_document(self.atomic)
        return document


def _riesz_config(yml: typ.Mapping[str, typ.Any]) -> RieszConfig:
    measure = _choice(yml.get('measure', 'riesz'), 'measure', MEASURES)
    grid_size = yml.get('grid_size')
    epsilon = _float(yml.get('epsilon', 0.5), 'epsilon')
    if not 0 < epsilon < 1:
        raise ConfigError(f'epsilon: {epsilon} outside (0, 1)')
    return RieszConfig(
        measure=measure,
        riesz=riesz_from_document(_mapping(yml, 'riesz')) if measure == 'riesz' else None,
        atomic=atomic_from_document(_mapping(yml, 'atomic'))
        if measure == 'atomic' else None,
        method=_choice(yml.get('method', 'auto'), 'method', METHODS),
        n_out=_int(yml.get('n_out', 1024), 'n_out', minimum=1),
        grid_size=None if grid_size is None else _int(grid_size, 'grid_size', minimum=1),
        epsilon=epsilon,
        depth=_int(yml.get('depth', 64), 'depth', minimum=1))


class IcebergConfig(NamedTuple):
    """Configuration of the `iceberg` command.

    Attributes:
        tower: The tower.
        rotations: The rotation family.
        function: The cylindric function.
        level: The level the function is lifted to.
        export_levels: Further levels whose correlations are written.
    """
    tower: Tower
    rotations: RotationSpec
    function: FunctionSpec
    level: int
    export_levels: typ.Tuple[int, ...] = ()

    @property
    def seed(self) -> typ.Optional[int]:
        """The seed of a random rotation family."""
        return self.rotations.seed

    def with_seed(self, seed: int) -> IcebergConfig:
        """Replaces the rotation seed of a random family."""
        if self.rotations.provenance != 'random':
            return self
        return self._replace(rotations=self.rotations._replace(seed=seed))

    def to_document(self) -> typ.Dict[str, typ.Any]:
        """The configuration document."""
        return {
            'command': 'iceberg', 'tower': tower_to_document(self.tower.spec),
            'rotations': self.rotations.to_document(),
            'function': self.function.to_document(), 'level': self.level,
            'export_levels': list(self.export_levels),
        }


def _level(yml: typ.Mapping[str, typ.Any], key: str, tower: Tower,
           default: typ.Optional[int] = None) -> int:
    level = _int(yml.get(key, default if default is not None else tower.levels), key,
                 minimum=1)
    if level > tower.levels:
        raise ConfigError(f'{key}: {level} exceeds the {tower.levels} tower levels')
    return level


def _iceberg_config(yml: typ.Mapping[str, typ.Any]) -> IcebergConfig:
    tower = tower_from_document(_mapping(yml, 'tower'))
    function = _function_spec(yml.get('function', {}))
    levels = yml.get('export_levels', [])
    if not isinstance(levels, list):
        raise ConfigError('export_levels: expected a list')
    export_levels = tuple(_int(v, 'export_levels', minimum=1) for v in levels)
    if any(v > tower.levels for v in export_levels):
        raise ConfigError(f'export_levels: a level exceeds {tower.levels}')
    return IcebergConfig(
        tower=tower, rotations=_rotation_spec(yml.get('rotations', {})),
        function=function, level=_level(yml, 'level', tower),
        export_levels=export_levels)


class EnsembleConfig(NamedTuple):
    """Configuration of the `ensemble` command.

    Attributes:
        tower: The tower.
        function: The mean-zero cylindric function shared by all replicas.
        level: The highest level; ensembles run at every level from the
            function's base level up to this one.
        replicas: Replicas per ensemble.
        seed: The ensemble seed.
        alpha_support: 'full' or 'coset'.
        control: Whether to run the white-noise control as well.
        tests: The tests to report.
    """
    tower: Tower
    function: FunctionSpec
    level: int
    replicas: int
    seed: int
    alpha_support: str = 'full'
    control: bool = False
    tests: typ.Tuple[str, ...] = TESTS

    def with_seed(self, seed: int) -> EnsembleConfig:
        """Replaces the ensemble seed."""
        return self._replace(seed=seed)

    def to_document(self) -> typ.Dict[str, typ.Any]:
        """The configuration document."""
        return {
            'command': 'ensemble', 'tower': tower_to_document(self.tower.spec),
            'function': self.function.to_document(), 'level': self.level,
            'replicas': self.replicas, 'seed': self.seed,
            'alpha_support': self.alpha_support, 'control': self.control,
            'tests': list(self.tests),
        }


def _ensemble_config(yml: typ.Mapping[str, typ.Any]) -> EnsembleConfig:
    tower = tower_from_document(_mapping(yml, 'tower'))
    tests = yml.get('tests', list(TESTS))
    if not isinstance(tests, list):
        raise ConfigError('tests: expected a list')
    function = _function_spec(yml.get('function', {}))
    level = _level(yml, 'level', tower)
    if level < function.level:
        raise ConfigError(f'level: {level} is below the function level {function.level}')
    return EnsembleConfig(
        tower=tower, function=function, level=level,
        replicas=_int(yml.get('replicas', 256), 'replicas', minimum=2),
        seed=_seed(yml.get('seed', 0), 'seed'),
        alpha_support=_choice(yml.get('alpha_support', 'full'), 'alpha_support',
                              ALPHA_SUPPORTS),
        control=_bool(yml.get('control', False), 'control'),
        tests=tuple(_choice(t, 'tests', TESTS) for t in tests))


class AnalyzeConfig(NamedTuple):
    """Configuration of the `analyze` command.

    Attributes:
        input: The CSV file to analyze.
        p_values: Exponents of the l^p profiles.
        weighted: Whether the decay fit weights blocks by size.
        epsilon: The neglected mass of the concentration diagnostic of
            correlation inputs; skipped when None.
        bound: The bound of the large-coefficient density.
    """
    input: str
    p_values: typ.Tuple[float, ...] = (2.0, 4.0)
    weighted: bool = False
    epsilon: typ.Optional[float] = None
    bound: float = 0.1

    @property
    def seed(self) -> typ.Optional[int]:
        """Analyses carry no seed."""
        return None

    def with_seed(self, seed: int) -> AnalyzeConfig:  # pylint: disable=unused-argument
        """Seeds do not apply to analyses."""
        return self

    def to_document(self) -> typ.Dict[str, typ.Any]:
        """The configuration document."""
        document: typ.Dict[str, typ.Any] = {
            'command': 'analyze', 'input': self.input, 'p_values': list(self.p_values),
            'weighted': self.weighted, 'bound': self.bound,
        }
        if self.epsilon is not None:
            document['epsilon'] = self.epsilon
        return document


def _analyze_config(yml: typ.Mapping[str, typ.Any]) -> AnalyzeConfig:
    path = yml.get('input')
    if not isinstance(path, str) or not path:
        raise ConfigError('input: expected a file path')
    p_values = yml.get('p_values', [2.0, 4.0])
    if not isinstance(p_values, list) or not p_values:
        raise ConfigError('p_values: expected a nonempty list')
    p_values = tuple(_float(p, 'p_values') for p in p_values)
    if any(not p >= 1 for p in p_values):
        raise ConfigError('p_values: every p must be at least 1')
    epsilon = yml.get('epsilon')
    if epsilon is not None:
        epsilon = _float(epsilon, 'epsilon')
        if not 0 < epsilon < 1:
            raise ConfigError(f'epsilon: {epsilon} outside (0, 1)')
    return AnalyzeConfig(input=path, p_values=p_values,
                         weighted=_bool(yml.get('weighted', False), 'weighted'),
                         epsilon=epsilon, bound=_float(yml.get('bound', 0.1), 'bound'))


ExperimentConfig = typ.Union[RieszConfig, IcebergConfig, EnsembleConfig, AnalyzeConfig]

_PARSERS: typ.Dict[str, typ.Callable[[typ.Mapping[str, typ.Any]], typ.Any]] = {
    'riesz': _riesz_config,
    'iceberg': _iceberg_config,
    'ensemble': _ensemble_config,
    'analyze': _analyze_config,
}


def load_config(logger: Logger, file: io.TextIOBase,
                command: typ.Optional[str] = None) -> ExperimentConfig:
    """Loads an experiment configuration from a JSON or YAML file.

    Args:
        logger: The logger, which receives the reason for a rejected file.
        file: The file handle to load the document from.
        command: The subcommand the document is for; read from the
            document's 'command' entry when None.

    Returns:
        The configuration of the command.
    """
    try:
        yml = yaml.load(
            file, Loader=partial(ConfigFileLoader, logger=logger))  # type: ignore
    except yaml.YAMLError as exc:
        logger.critical('Configuration is not valid JSON or YAML: %s', exc)
        raise SystemExit(2) from exc
    if not isinstance(yml, dict):
        logger.critical('Configuration root node is not a mapping')
        raise SystemExit(2)

    named = yml.get('command')
    if command is None:
        command = named
    elif named is not None and named != command:
        logger.critical('Configuration is for command %s, not %s', named, command)
        raise SystemExit(2)
    if command not in _PARSERS:
        logger.critical('Unknown command: %s', command)
        raise SystemExit(2)

    try:
        config = _PARSERS[command](yml)
    except SalemspecError as exc:
        logger.critical('Invalid %s configuration: %s', command, exc)
        raise SystemExit(2) from exc
    logger.debug('Loaded %s configuration', command)
    return config


def dump_config(config: ExperimentConfig) -> str:
    """Canonical JSON text of a configuration."""
    return json.dumps(config.to_document(), indent=2, sort_keys=True) + '\n'


def default_output_dir() -> str:
    """The output directory when none is given on the command line."""
    return os.environ.get(OUTPUT_DIR_VARIABLE, '.')
