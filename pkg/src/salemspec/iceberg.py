"""
Finite-level approximations of iceberg-type Z^d actions.

Level n of a tower is the torus M_n = (Z/h_n Z)^d, stored as a row-major array
of shape (h_n,)*d. The descent map phi_n: M_{n+1} -> M_n cuts M_{n+1} into the
q_n^d blocks gamma + U_n, U_n = [0, h_n)^d, and sends gamma + u to
(u + alpha_{n,gamma}) mod h_n. Levels are numbered from 1.
"""

from __future__ import annotations

import logging
import typing as typ

import numpy as np

from salemspec.errors import SalemspecError

_logger = logging.getLogger(__name__)

MAX_CELLS = 2 ** 62
SUPPORTED_DIMENSIONS = (1, 2)
MEAN_ZERO_TOLERANCE = 1e-12


class IcebergError(SalemspecError):
    """Raised for invalid towers, rotation families and level functions."""


class TowerError(IcebergError):
    """Raised when a tower specification is inconsistent."""


class RotationError(IcebergError):
    """Raised when a rotation family violates its invariants."""


class UnsupportedDimension(IcebergError):
    """Raised by level operations for d outside `SUPPORTED_DIMENSIONS`.

    Attributes:
        dimension: The rejected dimension.
    """
    dimension: int

    def __init__(self, dimension: int) -> None:
        super().__init__(f'unsupported dimension {dimension}; '
                         f'supported: {", ".join(map(str, SUPPORTED_DIMENSIONS))}')
        self.dimension = dimension


class TowerSpec(typ.NamedTuple):
    """Parameters of the lattice tower Gamma_n = h_n Z^d, h_{n+1} = q_n h_n.

    Attributes:
        dimension: The rank d of the acting group Z^d.
        base: The first height h_1.
        factors: q_1, ..., q_{L-1}, each at least 2.
        strict: Whether q_{n+1} > 2 q_n is enforced.
    """
    dimension: int
    base: int
    factors: typ.Tuple[int, ...]
    strict: bool = False

    @property
    def levels(self) -> int:
        """The number of levels L."""
        return len(self.factors) + 1


class Tower(typ.NamedTuple):
    """A validated tower with materialized heights h_1..h_L."""
    spec: TowerSpec
    heights: typ.Tuple[int, ...]

    @property
    def dimension(self) -> int:
        """The rank d."""
        return self.spec.dimension

    @property
    def levels(self) -> int:
        """The number of levels L."""
        return len(self.heights)

    def height(self, n: int) -> int:
        """h_n."""
        self._check_level(n)
        return self.heights[n - 1]

    def factor(self, n: int) -> int:
        """q_n = h_{n+1}/h_n for 1 <= n < L."""
        if not 1 <= n < self.levels:
            raise IcebergError(f'no factor q_{n} in a {self.levels}-level tower')
        return self.spec.factors[n - 1]

    def shape(self, n: int) -> typ.Tuple[int, ...]:
        """The array shape of M_n."""
        return (self.height(n),) * self.dimension

    def cells(self, n: int) -> int:
        """h_n^d, the number of points of M_n."""
        return self.height(n) ** self.dimension

    def cosets(self, n: int) -> np.ndarray:
        """Representatives {0, h_n, ..., (q_n-1) h_n}^d of Gamma_n/Gamma_{n+1},
        one row per coset in row-major order of the coset index."""
        q = self.factor(n)
        grid = np.indices((q,) * self.dimension).reshape(self.dimension, -1).T
        return grid * self.height(n)

    def level_of_lag(self, lag: int) -> int:
        """The level n whose window (h_{n-1}, h_n] contains `lag` (h_0 = 0)."""
        for n, height in enumerate(self.heights, start=1):
            if lag <= height:
                return n
        return self.levels

    def _check_level(self, n: int) -> None:
        if not 1 <= n <= self.levels:
            raise IcebergError(f'level {n} outside 1..{self.levels}')


def _positive_int(value: typ.Any, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) \
            or value < minimum:
        raise TowerError(f'{name} = {value!r} must be an integer >= {minimum}')
    return int(value)


def build_tower(spec: TowerSpec) -> Tower:
    """Validates a tower specification and materializes its heights.

    Args:
        spec: The tower parameters.

    Returns:
        The `Tower` instance.
    """
    dimension = _positive_int(spec.dimension, 'dimension', 1)
    base = _positive_int(spec.base, 'base height h_1', 1)
    factors = tuple(_positive_int(q, f'factor q_{n}', 2)
                    for n, q in enumerate(spec.factors, start=1))
    if spec.strict:
        for n, (low, high) in enumerate(zip(factors, factors[1:]), start=1):
            if not high > 2 * low:
                raise TowerError(f'strictness violated: q_{n + 1} = {high} '
                                 f'is not greater than 2*q_{n} = {2 * low}')
    heights = [base]
    for q in factors:
        heights.append(heights[-1] * q)
    if heights[-1] ** dimension > MAX_CELLS:
        raise TowerError(f'h_L^d = {heights[-1]}^{dimension} exceeds the exact '
                         'integer range')
    spec = TowerSpec(dimension=dimension, base=base, factors=factors,
                     strict=bool(spec.strict))
    return Tower(spec=spec, heights=tuple(heights))


def tower_to_document(spec: TowerSpec) -> typ.Dict[str, typ.Any]:
    """The JSON document of a tower specification."""
    return {'dimension': spec.dimension, 'base': spec.base,
            'factors': list(spec.factors), 'strict': spec.strict}


def tower_from_document(document: typ.Mapping[str, typ.Any]) -> Tower:
    """Parses and builds the tower described by a JSON document."""
    if not isinstance(document, typ.Mapping):
        raise TowerError('a tower document must be a mapping')
    try:
        spec = TowerSpec(dimension=document.get('dimension', 1),
                         base=document['base'],
                         factors=tuple(document.get('factors', ())),
                         strict=bool(document.get('strict', False)))
    except KeyError as exc:
        raise TowerError(f'tower document lacks key {exc.args[0]!r}') from exc
    except TypeError as exc:
        raise TowerError(f'malformed tower document: {exc}') from exc
    return build_tower(spec)


class Provenance(typ.NamedTuple):
    """Where a rotation family came from.

    Attributes:
        kind: One of 'random', 'morse', 'explicit'.
        seed: The seed of a random family.
        replica: The replica index a random family was derived for.
        alpha_support: 'full' draws alpha from all of M_n; 'coset' draws it from
            the q_n^d points floor(j h_n / q_n).
    """
    kind: str
    seed: typ.Optional[int] = None
    replica: typ.Optional[int] = None
    alpha_support: str = 'full'


ALPHA_SUPPORTS = ('full', 'coset')
PROVENANCES = ('random', 'morse', 'explicit')


class RotationFamily(typ.NamedTuple):
    """The rotation vectors alpha_{n,gamma} of every level of a tower.

    Attributes:
        tower: The tower the family belongs to.
        alphas: One integer array per level n < L, of shape (q_n,)*d + (d,),
            indexed by the coset index j (gamma = j h_n).
        provenance: How the family was produced.
    """
    tower: Tower
    alphas: typ.Tuple[np.ndarray, ...]
    provenance: Provenance

    def alpha(self, n: int, coset: typ.Sequence[int]) -> typ.Tuple[int, ...]:
        """alpha_{n,gamma} for gamma = coset * h_n."""
        return tuple(int(v) for v in self.alphas[n - 1][tuple(coset)])


def _check_seed(seed: typ.Any) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) \
            or not 0 <= seed < 2 ** 64:
        raise RotationError(f'seed {seed!r} is not an unsigned 64-bit integer')
    return int(seed)


def level_generator(seed: int, *key: int) -> np.random.Generator:
    """A Philox generator keyed by `seed` and the integers of `key`.

    Philox is counter-based, so streams for different keys are independent and
    need no particular draw order.
    """
    sequence = np.random.SeedSequence(_check_seed(seed), spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(sequence))


def sample_rotations(tower: Tower, seed: int, *, replica: typ.Optional[int] = None,
                     alpha_support: str = 'full') -> RotationFamily:
    """Draws independent uniform rotation vectors for every level.

    Level n uses the stream keyed by (seed, n), or (seed, replica, n) when a
    replica index is given, so each replica of an ensemble is reproducible on
    its own.
    """
    if alpha_support not in ALPHA_SUPPORTS:
        raise RotationError(f'unknown alpha support {alpha_support!r}')
    seed = _check_seed(seed)
    d = tower.dimension
    alphas = []
    for n in range(1, tower.levels):
        key = (n,) if replica is None else (replica, n)
        rng = level_generator(seed, *key)
        h, q = tower.height(n), tower.factor(n)
        size = (q,) * d + (d,)
        if alpha_support == 'full':
            values = rng.integers(0, h, size=size, dtype=np.int64)
        else:
            values = rng.integers(0, q, size=size, dtype=np.int64) * h // q
        values.setflags(write=False)
        alphas.append(values)
    return RotationFamily(
        tower=tower, alphas=tuple(alphas),
        provenance=Provenance(kind='random', seed=seed, replica=replica,
                              alpha_support=alpha_support))


def _check_morse(tower: Tower) -> None:
    if tower.dimension != 1:
        raise RotationError('the Morse family needs dimension 1')
    if any(q != 2 for q in tower.spec.factors):
        raise RotationError('the Morse family needs every q_n = 2')
    if tower.spec.base % 2:
        raise RotationError('the Morse family needs even heights')


def morse_rotations(tower: Tower) -> RotationFamily:
    """The Morse family (alpha_{n,0}, alpha_{n,1}) = (0, h_n/2)."""
    _check_morse(tower)
    alphas = []
    for n in range(1, tower.levels):
        values = np.array([[0], [tower.height(n) // 2]], dtype=np.int64)
        values.setflags(write=False)
        alphas.append(values)
    return RotationFamily(tower=tower, alphas=tuple(alphas),
                          provenance=Provenance(kind='morse'))


def explicit_rotations(tower: Tower, values: typ.Sequence[typ.Any]) -> RotationFamily:
    """Validates explicitly given rotation vectors.

    Args:
        tower: The tower.
        values: One entry per level n < L holding q_n^d rotation vectors in
            row-major coset order; scalars are accepted for d = 1.

    Returns:
        The `RotationFamily` instance.
    """
    d = tower.dimension
    if len(values) != tower.levels - 1:
        raise RotationError(f'expected rotations for {tower.levels - 1} levels, '
                            f'got {len(values)}')
    alphas = []
    for n, level_values in enumerate(values, start=1):
        h, q = tower.height(n), tower.factor(n)
        try:
            array = np.asarray(level_values)
        except (TypeError, ValueError) as exc:
            raise RotationError(f'level {n} rotations are malformed: {exc}') from exc
        if array.size != q ** d * d or not np.issubdtype(array.dtype, np.integer):
            raise RotationError(f'level {n} needs {q ** d} integer vectors of '
                                f'dimension {d}')
        if np.any(array < 0) or np.any(array >= h):
            raise RotationError(f'level {n} rotation outside [0, {h})')
        array = array.astype(np.int64).reshape((q,) * d + (d,))
        array.setflags(write=False)
        alphas.append(array)
    return RotationFamily(tower=tower, alphas=tuple(alphas),
                          provenance=Provenance(kind='explicit'))


def rotations_to_document(family: RotationFamily) -> typ.Dict[str, typ.Any]:
    """The JSON document of a tower and its rotation family."""
    d = family.tower.dimension
    provenance: typ.Dict[str, typ.Any] = {'kind': family.provenance.kind}
    if family.provenance.kind == 'random':
        provenance.update(seed=family.provenance.seed,
                          replica=family.provenance.replica,
                          alpha_support=family.provenance.alpha_support)
    alphas = [a.reshape(-1, d).tolist() if d > 1 else a.reshape(-1).tolist()
              for a in family.alphas]
    return {'tower': tower_to_document(family.tower.spec),
            'provenance': provenance,
            'alphas': alphas}


def rotations_from_document(document: typ.Mapping[str, typ.Any]) -> RotationFamily:
    """Rebuilds a rotation family from the document of `rotations_to_document`.

    Random families are regenerated from their seed; recorded values, when
    present, must agree with the regenerated ones.
    """
    if not isinstance(document, typ.Mapping) or 'tower' not in document:
        raise RotationError("a rotation document needs a 'tower' entry")
    tower = tower_from_document(document['tower'])
    provenance = document.get('provenance', {'kind': 'explicit'})
    kind = provenance.get('kind')
    if kind == 'morse':
        family = morse_rotations(tower)
    elif kind == 'random':
        family = sample_rotations(
            tower, provenance.get('seed'), replica=provenance.get('replica'),
            alpha_support=provenance.get('alpha_support', 'full'))
    elif kind == 'explicit':
        return explicit_rotations(tower, document.get('alphas', []))
    else:
        raise RotationError(f'unknown provenance {kind!r}')
    recorded = document.get('alphas')
    if recorded is not None:
        expected = explicit_rotations(tower, recorded)
        if any(not np.array_equal(a, b) for a, b in zip(expected.alphas, family.alphas)):
            raise RotationError(f'recorded rotations disagree with the {kind} family')
    return family


class CylindricFunction(typ.NamedTuple):
    """An observable depending only on the coordinate of level `base_level`.

    Attributes:
        base_level: The level n0.
        values: Complex array of shape (h_{n0},)*d.
        mean_zero: Whether the values average to zero.
    """
    base_level: int
    values: np.ndarray
    mean_zero: bool


def cylindric(tower: Tower, level: int, values: typ.Any,
              require_mean_zero: bool = False) -> CylindricFunction:
    """Validates the values of a cylindric function on M_level."""
    shape = tower.shape(level)
    try:
        array = np.array(values, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise IcebergError(f'function values are not numeric: {exc}') from exc
    if array.size != tower.cells(level):
        raise IcebergError(f'level {level} needs {tower.cells(level)} values, '
                           f'got {array.size}')
    array = array.reshape(shape)
    mean_zero = bool(abs(array.sum()) / array.size <= MEAN_ZERO_TOLERANCE)
    if require_mean_zero and not mean_zero:
        raise IcebergError('the function does not have zero mean')
    array.setflags(write=False)
    return CylindricFunction(base_level=level, values=array, mean_zero=mean_zero)


def random_sign_function(tower: Tower, level: int, seed: int) -> CylindricFunction:
    """A mean-zero +-1 function on M_level: half the points +1, half -1, in an
    order fixed by `seed`."""
    cells = tower.cells(level)
    if cells % 2:
        raise IcebergError(f'M_{level} has an odd number of points; '
                           'no mean-zero +-1 function exists')
    signs = np.repeat([1.0, -1.0], cells // 2)
    signs = level_generator(seed, 0).permutation(signs)
    return cylindric(tower, level, signs, require_mean_zero=True)


def _check_dimension(dimension: int) -> None:
    if dimension not in SUPPORTED_DIMENSIONS:
        raise UnsupportedDimension(dimension)


def descent_indices(family: RotationFamily, n: int) -> np.ndarray:
    """phi_n as an index map: entry x (row-major over M_{n+1}) holds the
    row-major index of phi_n(x) in M_n."""
    tower = family.tower
    d = tower.dimension
    _check_dimension(d)
    h = tower.height(n)
    coords = np.indices(tower.shape(n + 1)).reshape(d, -1)
    coset, offset = np.divmod(coords, h)
    alpha = family.alphas[n - 1][tuple(coset)]
    target = np.mod(offset + alpha.T, h)
    return np.ravel_multi_index(tuple(target), tower.shape(n))


def lift(f: CylindricFunction, family: RotationFamily, target_level: int) -> np.ndarray:
    """Lifts f to M_m as f_m = f_{n0} o phi_{n0} o ... o phi_{m-1}.

    Args:
        f: The cylindric function.
        family: The rotation family of the tower.
        target_level: The level m >= n0.

    Returns:
        Read-only array of shape (h_m,)*d.
    """
    tower = family.tower
    _check_dimension(tower.dimension)
    if target_level < f.base_level:
        raise IcebergError(f'cannot lift from level {f.base_level} down to '
                           f'level {target_level}')
    if target_level > tower.levels:
        raise IcebergError(f'level {target_level} outside 1..{tower.levels}')
    if f.values.shape != tower.shape(f.base_level):
        raise IcebergError(f'function shape {f.values.shape} does not match '
                           f'level {f.base_level}')
    values = f.values.reshape(-1)
    for n in range(f.base_level, target_level):
        values = values[descent_indices(family, n)]
    values = values.reshape(tower.shape(target_level))
    values.setflags(write=False)
    return values


def thue_morse(length: int) -> np.ndarray:
    """The +-1 Thue-Morse word: (-1) to the parity of the binary digit sum."""
    index = np.arange(length, dtype=np.int64)
    parity = np.zeros(length, dtype=np.int64)
    while np.any(index):
        parity ^= index & 1
        index >>= 1
    return 1 - 2 * parity


class CorrelationSeq(typ.NamedTuple):
    """The circular correlation R(t) = h^-d sum_x f(x - t) conj(f(x)) on a level.

    Attributes:
        level: The level m, when known.
        values: Complex array indexed by the lag t in M_m.
        norm0: R(0), the mean of |f|^2.
    """
    level: typ.Optional[int]
    values: np.ndarray
    norm0: float


def _level_array(values: typ.Any, tower: typ.Optional[Tower],
                 level: typ.Optional[int]) -> np.ndarray:
    array = np.asarray(values, dtype=complex)
    if array.size == 0:
        raise IcebergError('empty level function')
    _check_dimension(array.ndim)
    if len(set(array.shape)) != 1:
        raise IcebergError(f'level function shape {array.shape} is not a cube')
    if tower is not None and level is not None and array.shape != tower.shape(level):
        raise IcebergError(f'shape {array.shape} does not match level {level} '
                           f'of shape {tower.shape(level)}')
    return array


def correlation(values: typ.Any, *, tower: typ.Optional[Tower] = None,
                level: typ.Optional[int] = None) -> CorrelationSeq:
    """Circular correlation of a level function through the d-dimensional FFT."""
    f = _level_array(values, tower, level)
    spectrum = np.fft.fftn(f)
    corr = np.conj(np.fft.ifftn(np.abs(spectrum) ** 2)) / f.size
    norm0 = float(np.mean(np.abs(f) ** 2))
    corr[(0,) * f.ndim] = norm0
    corr.setflags(write=False)
    return CorrelationSeq(level=level, values=corr, norm0=norm0)


def correlation_direct(values: typ.Any) -> np.ndarray:
    """The same correlation summed lag by lag, for reference."""
    f = _level_array(values, None, None)
    conj = np.conj(f)
    axes = tuple(range(f.ndim))
    out = np.empty(f.shape, dtype=complex)
    for lag in np.ndindex(*f.shape):
        out[lag] = np.mean(np.roll(f, lag, axis=axes) * conj)
    return out


def spectral_density(values: typ.Any, *, tower: typ.Optional[Tower] = None,
                     level: typ.Optional[int] = None) -> np.ndarray:
    """Weights |f_hat(k)|^2 / h^2d on the dual group; they sum to R(0) and
    their forward transform is the correlation."""
    f = _level_array(values, tower, level)
    weights = np.abs(np.fft.fftn(f)) ** 2 / f.size ** 2
    weights.setflags(write=False)
    return weights


def shift_at_level(x: typ.Any, t: typ.Any, height: int) -> typ.Union[int, typ.Tuple[int, ...]]:
    """The finite-level action (x + t) mod h_m, componentwise."""
    shifted = np.mod(np.asarray(x, dtype=np.int64) + np.asarray(t, dtype=np.int64),
                     height)
    if shifted.ndim == 0:
        return int(shifted)
    return tuple(int(v) for v in shifted)
