"""
Monte Carlo ensembles of iceberg systems.

Every replica draws its own rotation family from (seed, replica), lifts one
fixed mean-zero cylindric function to the target level and computes its
correlation. Replicas are reduced to per-lag moments along a fixed binary tree
over replica indices, so results never depend on the number of threads.
"""

from __future__ import annotations

import logging
import typing as typ
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from salemspec.analysis import DecayFit, dyadic_blocks, fit_blocks, radial_envelope
from salemspec.errors import SalemspecError
from salemspec.iceberg import (CylindricFunction, RotationFamily, Tower, correlation,
                               level_generator, lift, sample_rotations)

_logger = logging.getLogger(__name__)

JENSEN_TOLERANCE = 1e-12
Z_MAX = 3.0
MIN_PASSING_FRACTION = 0.95
RATIO_BAND = (0.2, 5.0)
SLOPE_MAX = -0.8
CONSTANT_RATIO = 10.0
WHITE_NOISE_STREAM = 0


class EnsembleError(SalemspecError):
    """Raised when an ensemble cannot be run or tested as requested."""


class EnsembleStats(typ.NamedTuple):
    """Per-lag moments of the correlation over an ensemble.

    Attributes:
        tower: The tower of the experiment.
        level: The level m the correlations live on.
        replicas: The number of replicas R.
        seed: The ensemble seed.
        mean: Complex per-lag mean of R(t).
        power: Per-lag mean of |R(t)|^2.
        m2: Per-lag sum of |R(t) - mean|^2 over replicas.
        power_m2: Per-lag sum of (|R(t)|^2 - power)^2 over replicas.
        source: 'lift' for lifted functions, 'white-noise' for the control.
    """
    tower: Tower
    level: int
    replicas: int
    seed: int
    mean: np.ndarray
    power: np.ndarray
    m2: np.ndarray
    power_m2: np.ndarray
    source: str = 'lift'

    @property
    def variance(self) -> np.ndarray:
        """Unbiased per-lag sample variance of R(t)."""
        return self.m2 / max(self.replicas - 1, 1)

    @property
    def power_variance(self) -> np.ndarray:
        """Unbiased per-lag sample variance of |R(t)|^2."""
        return self.power_m2 / max(self.replicas - 1, 1)

    def merge(self, other: EnsembleStats) -> EnsembleStats:
        """Pools two disjoint sets of replicas (Chan's parallel update)."""
        if (other.tower != self.tower or other.level != self.level
                or other.source != self.source):
            raise EnsembleError('cannot merge statistics of different experiments')
        count = self.replicas + other.replicas
        share = other.replicas / count
        cross = self.replicas * other.replicas / count
        delta = other.mean - self.mean
        power_delta = other.power - self.power
        return self._replace(
            replicas=count,
            mean=self.mean + delta * share,
            power=self.power + power_delta * share,
            m2=self.m2 + other.m2 + np.abs(delta) ** 2 * cross,
            power_m2=self.power_m2 + other.power_m2 + power_delta ** 2 * cross)


def _leaf(tower: Tower, level: int, seed: int, corr: np.ndarray,
          source: str) -> EnsembleStats:
    zeros = np.zeros(corr.shape)
    return EnsembleStats(tower=tower, level=level, replicas=1, seed=seed,
                         mean=np.array(corr), power=np.abs(corr) ** 2,
                         m2=zeros, power_m2=zeros.copy(), source=source)


def _reduce(leaves: typ.Sequence[EnsembleStats]) -> EnsembleStats:
    """Merges leaves along the fixed tree that splits [lo, hi) at the largest
    power of two below its length."""
    if len(leaves) == 1:
        return leaves[0]
    split = 1 << ((len(leaves) - 1).bit_length() - 1)
    return _reduce(leaves[:split]).merge(_reduce(leaves[split:]))


def _check_replicas(replicas: int) -> None:
    if isinstance(replicas, bool) or not isinstance(replicas, (int, np.integer)) \
            or replicas < 2:
        raise EnsembleError(f'replicas < 2 (got {replicas!r})')


def _fan_out(compute: typ.Callable[[int], np.ndarray], indices: range,
             threads: int) -> typ.List[np.ndarray]:
    if threads < 1:
        raise EnsembleError(f'threads must be positive (got {threads})')
    if threads == 1:
        return [compute(r) for r in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(compute, indices))


def run_ensemble(tower: Tower, f: CylindricFunction, level: int, replicas: int,
                 seed: int, *, threads: int = 1, first_replica: int = 0,
                 rotations: typ.Optional[RotationFamily] = None,
                 alpha_support: str = 'full') -> EnsembleStats:
    """Runs R replicas of the lift-and-correlate experiment.

    Args:
        tower: The tower.
        f: A mean-zero cylindric function, shared by all replicas.
        level: The target level m.
        replicas: The number of replicas R >= 2.
        seed: The ensemble seed.
        threads: Worker threads for the replica fan-out.
        first_replica: Index of the first replica; ensembles over disjoint
            replica ranges merge into the ensemble over their union.
        rotations: A fixed family used by every replica instead of random
            draws (a degenerate ensemble, useful as a negative control).
        alpha_support: Passed on to `sample_rotations`.

    Returns:
        The `EnsembleStats` instance.
    """
    _check_replicas(replicas)
    if not f.mean_zero:
        raise EnsembleError('the cylindric function does not have zero mean')
    if not f.base_level <= level <= tower.levels:
        raise EnsembleError(f'level {level} outside {f.base_level}..{tower.levels}')
    if rotations is not None and rotations.tower != tower:
        raise EnsembleError('the fixed rotation family belongs to another tower')

    def compute(replica: int) -> np.ndarray:
        family = rotations if rotations is not None else sample_rotations(
            tower, seed, replica=replica, alpha_support=alpha_support)
        return correlation(lift(f, family, level)).values

    indices = range(first_replica, first_replica + replicas)
    _logger.info('Running %d replicas at level %d on %d thread(s)',
                 replicas, level, threads)
    leaves = [_leaf(tower, level, seed, corr, 'lift')
              for corr in _fan_out(compute, indices, threads)]
    return _reduce(leaves)


def run_white_noise(tower: Tower, level: int, replicas: int, seed: int, *,
                    threads: int = 1, first_replica: int = 0) -> EnsembleStats:
    """The control experiment: a fresh mean-zero +-1 function drawn directly on
    M_level for every replica, with no lift."""
    _check_replicas(replicas)
    cells = tower.cells(level)
    if cells % 2:
        raise EnsembleError(f'M_{level} has an odd number of points')
    signs = np.repeat([1.0, -1.0], cells // 2)

    def compute(replica: int) -> np.ndarray:
        rng = level_generator(seed, replica, WHITE_NOISE_STREAM)
        values = rng.permutation(signs).reshape(tower.shape(level))
        return correlation(values).values

    indices = range(first_replica, first_replica + replicas)
    leaves = [_leaf(tower, level, seed, corr, 'white-noise')
              for corr in _fan_out(compute, indices, threads)]
    return _reduce(leaves)


class TestReport(typ.NamedTuple):
    """The verdict of one statistical test.

    Attributes:
        name: The test name.
        passed: Whether the test passed.
        verdict: 'pass', 'fail' or 'degenerate, vacuous pass'.
        statistic: The headline statistic (fraction, ratio or slope).
        details: Further numbers worth reporting.
        warnings: Human-readable caveats.
    """
    __test__ = False

    name: str
    passed: bool
    verdict: str
    statistic: float
    details: typ.Dict[str, typ.Any]
    warnings: typ.Tuple[str, ...] = ()


def _report(name: str, passed: bool, statistic: float, details: typ.Dict[str, typ.Any],
            warnings: typ.Sequence[str] = (), verdict: typ.Optional[str] = None
            ) -> TestReport:
    for warning in warnings:
        _logger.warning('%s: %s', name, warning)
    return TestReport(name=name, passed=passed,
                      verdict=verdict or ('pass' if passed else 'fail'),
                      statistic=float(statistic), details=details,
                      warnings=tuple(warnings))


def coset_lags(tower: Tower, level: int) -> np.ndarray:
    """The nonzero lags t = h_{n-1} s, s in [0, q_{n-1})^d, of level n, one row
    per lag."""
    if level < 2:
        raise EnsembleError('no eligible lags: level 1 has no parent lattice')
    return tower.cosets(level - 1)[1:]


def _at_lags(values: np.ndarray, lags: np.ndarray) -> np.ndarray:
    return values[tuple(lags.T)]


def test_mean_zero(stats: EnsembleStats, *, z_max: float = Z_MAX,
                   min_fraction: float = MIN_PASSING_FRACTION) -> TestReport:
    """Checks that E R(t) = 0 at the lags t in Gamma_{n-1} minus 0.

    Each lag gets the z-score |mean| / (stddev / sqrt(R)); the test passes when
    at least `min_fraction` of the lags have z <= `z_max`.
    """
    lags = coset_lags(stats.tower, stats.level)
    mean = np.abs(_at_lags(stats.mean, lags))
    stderr = np.sqrt(_at_lags(stats.variance, lags) / stats.replicas)
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(stderr > 0, mean / stderr, np.where(mean > 0, np.inf, 0.0))
    fraction = float(np.mean(z <= z_max))
    return _report('mean-zero', fraction >= min_fraction, fraction, {
        'level': stats.level,
        'lags': int(len(lags)),
        'max_z': float(np.max(z)),
        'z_max': z_max,
    })


def test_recursion(stats: EnsembleStats, parent: EnsembleStats, *,
                   band: typ.Tuple[float, float] = RATIO_BAND) -> TestReport:
    """Checks E|R_n(t)|^2 ~ E|R_{n-1}|^2 / q_{n-1} on Gamma_{n-1} minus 0.

    The numerator averages E|R_n|^2 over the nonzero lags of Gamma_{n-1}; the
    denominator averages E|R_{n-1}|^2 over all of M_{n-1}.
    """
    if stats.tower != parent.tower or stats.source != parent.source:
        raise EnsembleError('mismatched towers')
    if stats.level != parent.level + 1:
        raise EnsembleError(f'levels {parent.level} and {stats.level} are not '
                            'consecutive')
    q = stats.tower.factor(parent.level)
    lags = coset_lags(stats.tower, stats.level)
    powers = _at_lags(stats.power, lags)
    numerator = float(np.mean(powers))
    denominator = float(np.mean(parent.power))
    details: typ.Dict[str, typ.Any] = {
        'level': stats.level, 'q': q, 'numerator': numerator,
        'denominator': denominator, 'band': [band[0] / q, band[1] / q],
    }
    if numerator == 0.0 and denominator == 0.0:
        return _report('recursion', True, 0.0, details,
                       verdict='degenerate, vacuous pass')
    warnings = []
    # replica spread of |R_n|^2, not the standard error of its mean
    stddev = float(np.sqrt(np.mean(_at_lags(stats.power_variance, lags))))
    spread = stddev / numerator if numerator > 0 else np.inf
    details['stddev_over_mean'] = spread
    if numerator > 0 and spread > 1:
        warnings.append(f'insufficient replicas: stddev/mean = {spread:.3g}')
    ratio = numerator / denominator if denominator > 0 else np.inf
    details['scaled_ratio'] = ratio * q
    passed = band[0] / q <= ratio <= band[1] / q
    return _report('recursion', passed, ratio, details, warnings)


def test_moment_bound(stats: EnsembleStats, *, slope_max: float = SLOPE_MAX,
                      constant_ratio: float = CONSTANT_RATIO) -> TestReport:
    """Checks E|R(t)|^2 = O(2^n / t) over the lags h_1 < |t| <= h_m/2.

    The radial envelope P(t) of the second moment is divided by 2^{n(t)}, n(t)
    being the level whose window (h_{n-1}, h_n] contains t. The test passes when
    the dyadic block maxima of that quotient decay with slope <= `slope_max`, or
    when every block constant C_j = max P(t) t / 2^{n(t)} stays within
    `constant_ratio` times the first one.
    """
    tower = stats.tower
    start, stop = tower.height(1) + 1, tower.height(stats.level) // 2
    if start > stop:
        raise EnsembleError('range empty')
    envelope = radial_envelope(stats.power)
    radii = np.arange(len(envelope))
    normalized = envelope / _level_scale(tower, len(envelope))
    blocks = dyadic_blocks(normalized, start, stop)
    if len(blocks) < 3:
        raise EnsembleError(f'range empty: lags {start}..{stop} span fewer '
                            'than 3 dyadic blocks')
    fit = fit_blocks(blocks)
    constants = [b.maximum for b in dyadic_blocks(normalized * radii, start, stop)]
    spread = max(constants) / constants[0] if constants[0] > 0 else np.inf
    passed = fit.kappa_hat <= slope_max or spread <= constant_ratio
    return _report('moment-bound', bool(passed), fit.kappa_hat, {
        'level': stats.level,
        'lags': [start, stop],
        'constants': constants,
        'constant_spread': spread,
        'residual': fit.residual,
    })


class SecondMomentNorms(typ.NamedTuple):
    """Sum over all lags of E|R(t)|^2, raw and divided by the number of lags."""
    total: float
    normalized: float


def second_moment_norms(stats: EnsembleStats) -> SecondMomentNorms:
    """Both readings of the squared l2 norm of the second moment."""
    total = float(np.sum(stats.power))
    return SecondMomentNorms(total=total, normalized=total / stats.power.size)


def jensen_gap(stats: EnsembleStats) -> float:
    """The most negative value of E|R|^2 - |E R|^2 over lags (0 if none)."""
    return float(min(0.0, np.min(stats.power - np.abs(stats.mean) ** 2)))


def _level_scale(tower: Tower, size: int) -> np.ndarray:
    """2^{n(t)} for the radii t = 0..size-1."""
    return np.array([2.0 ** tower.level_of_lag(r) for r in range(size)])


def decay_envelope_fit(stats: EnsembleStats, *, normalized: bool = False) -> DecayFit:
    """Decay of sqrt(E|R(t)|^2) over h_1 < |t| <= h_m/2.

    The raw envelope carries the 2^n growth of the level norms, so on towers
    with small q_n its slope sits well above -1/2 (about -0.3 on 4, 16, 96,
    960). With `normalized` the second moment is first divided by 2^{n(t)}
    as in `test_moment_bound`.
    """
    start, stop = stats.tower.height(1) + 1, stats.tower.height(stats.level) // 2
    if start > stop:
        raise EnsembleError('range empty')
    power = radial_envelope(stats.power)
    if normalized:
        power = power / _level_scale(stats.tower, len(power))
    return fit_blocks(dyadic_blocks(np.sqrt(power), start, stop))
