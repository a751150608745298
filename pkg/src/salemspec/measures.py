"""
Classical singular and atomic measures on [0,1) and their Fourier coefficients.

Every coefficient uses the kernel exp(-2*pi*i*n*x), so that a measure sigma has
coefficients sigma_hat(n) = integral of exp(-2*pi*i*n*x) d sigma(x).
"""

from __future__ import annotations

import logging
import math
import typing as typ

import numpy as np

from salemspec.errors import SalemspecError

_logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
LACUNARY_RATIO = 3
CANTOR_DEPTH = 64
NORMALIZATION_TOLERANCE = 1e-12


class MeasureError(SalemspecError):
    """Raised for invalid measure parameters."""


class GridTooCoarse(MeasureError):
    """Raised when a quadrature grid cannot resolve a trigonometric product.

    Attributes:
        grid_size: The rejected grid size.
        required: The smallest admissible grid size.
    """
    grid_size: int
    required: int

    def __init__(self, grid_size: int, required: int) -> None:
        super().__init__(
            f'grid size {grid_size} is below the Nyquist margin; '
            f'use a power of two >= {required}')
        self.grid_size = grid_size
        self.required = required


class LacunarityViolation(MeasureError):
    """Raised when the closed-form pathway is asked for a non-lacunary product.

    Attributes:
        index: The 1-based index n with k_{n+1}/k_n <= 3.
        ratio: The offending ratio k_{n+1}/k_n.
    """
    index: int
    ratio: float

    def __init__(self, index: int, ratio: float) -> None:
        super().__init__(
            f'lacunarity violated at index {index}: '
            f'k_{index + 1}/k_{index} = {ratio:.6g} <= {LACUNARY_RATIO}')
        self.index = index
        self.ratio = ratio


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class FourierSeq(typ.NamedTuple):
    """Fourier coefficients of a real measure on a symmetric index range.

    Attributes:
        max_index: The largest index N; coefficients exist for -N <= n <= N.
        coeffs: Complex array of length 2N+1; ``coeffs[n + N]`` is the
            coefficient of index n.
    """
    max_index: int
    coeffs: np.ndarray

    @property
    def indices(self) -> np.ndarray:
        """The indices -N..N aligned with `coeffs`."""
        return np.arange(-self.max_index, self.max_index + 1)

    def at(self, n: int) -> complex:
        """The coefficient of index n."""
        if abs(n) > self.max_index:
            raise IndexError(f'index {n} outside [-{self.max_index}, {self.max_index}]')
        return complex(self.coeffs[n + self.max_index])

    def nonnegative(self) -> np.ndarray:
        """Coefficients for n = 0..N."""
        return self.coeffs[self.max_index:]

    def magnitudes(self) -> np.ndarray:
        """|c_t| for t = 1..N, the input expected by decay estimators."""
        return np.abs(self.coeffs[self.max_index + 1:])

    def is_hermitian(self, atol: float = 0.0) -> bool:
        """Whether c(-n) equals the conjugate of c(n) within `atol`."""
        mirrored = np.conj(self.coeffs[::-1])
        return bool(np.all(np.abs(self.coeffs - mirrored) <= atol))


def hermitian_seq(nonnegative: np.ndarray) -> FourierSeq:
    """Builds a `FourierSeq` from the coefficients of n = 0..N by conjugate
    mirroring, which makes hermitian symmetry exact."""
    half = np.asarray(nonnegative, dtype=complex).copy()
    half[0] = half[0].real
    coeffs = np.concatenate((np.conj(half[:0:-1]), half))
    return FourierSeq(max_index=len(half) - 1, coeffs=_frozen(coeffs))


class GridDensity(typ.NamedTuple):
    """A probability density sampled on the uniform grid of [0,1)^d.

    Attributes:
        dimension: The dimension d.
        grid_size: Samples per axis, a power of two.
        samples: Nonnegative array of shape (grid_size,)*d with mean 1.
    """
    dimension: int
    grid_size: int
    samples: np.ndarray

    def cell_masses(self) -> np.ndarray:
        """The probability carried by each grid cell."""
        return self.samples / self.samples.size


def grid_density(samples: np.ndarray) -> GridDensity:
    """Validates an array of density samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim < 1 or len(set(samples.shape)) != 1:
        raise MeasureError('density samples must form a square grid')
    if not _is_power_of_two(samples.shape[0]):
        raise MeasureError(f'grid size {samples.shape[0]} is not a power of two')
    if np.any(samples < 0):
        raise MeasureError('density samples must be nonnegative')
    if abs(float(np.mean(samples)) - 1.0) > NORMALIZATION_TOLERANCE:
        raise MeasureError(f'density mean {np.mean(samples)!r} differs from 1')
    return GridDensity(dimension=samples.ndim, grid_size=samples.shape[0],
                       samples=_frozen(samples.copy()))


class RieszSpec(typ.NamedTuple):
    """A truncated classical Riesz product prod_n (1 + a_n cos(2 pi k_n x + phi_n)).

    Attributes:
        amplitudes: a_n in (0,1].
        frequencies: Strictly increasing positive integers k_n.
        phases: phi_n reduced into [0, 2 pi).
    """
    amplitudes: typ.Tuple[float, ...]
    frequencies: typ.Tuple[int, ...]
    phases: typ.Tuple[float, ...]

    @property
    def level(self) -> int:
        """The truncation level N."""
        return len(self.frequencies)

    @property
    def lacunary(self) -> bool:
        """Whether k_{n+1}/k_n > 3 for every n."""
        return lacunarity_violation(self) is None

    @property
    def degree(self) -> int:
        """The trigonometric degree of the product, sum of k_n."""
        return sum(self.frequencies)


def riesz_spec(amplitudes: typ.Sequence[float], frequencies: typ.Sequence[int],
               phases: typ.Optional[typ.Sequence[float]] = None) -> RieszSpec:
    """Validates Riesz product parameters.

    Args:
        amplitudes: a_n, each in (0,1].
        frequencies: k_n, positive and strictly increasing.
        phases: phi_n in radians; zeros when omitted. Reduced modulo 2 pi.

    Returns:
        The `RieszSpec` instance.
    """
    if phases is None:
        phases = [0.0] * len(frequencies)
    if not len(amplitudes) == len(frequencies) == len(phases):
        raise MeasureError('amplitudes, frequencies and phases differ in length')
    if not frequencies:
        raise MeasureError('a Riesz product needs at least one factor')
    for n, amp in enumerate(amplitudes, start=1):
        if not 0.0 < float(amp) <= 1.0:
            raise MeasureError(f'amplitude a_{n} = {amp!r} outside (0, 1]')
    ints = []
    for n, freq in enumerate(frequencies, start=1):
        if isinstance(freq, bool) or int(freq) != freq or int(freq) < 1:
            raise MeasureError(f'frequency k_{n} = {freq!r} is not a positive integer')
        ints.append(int(freq))
    if any(b <= a for a, b in zip(ints, ints[1:])):
        raise MeasureError('frequencies must be strictly increasing')
    if not all(math.isfinite(float(p)) for p in phases):
        raise MeasureError('phases must be finite')
    return RieszSpec(
        amplitudes=tuple(float(a) for a in amplitudes),
        frequencies=tuple(ints),
        phases=tuple(float(p) % TWO_PI for p in phases))


def lacunarity_violation(spec: RieszSpec) -> typ.Optional[LacunarityViolation]:
    """The first ratio k_{n+1}/k_n <= 3, or None for a lacunary product."""
    for n, (low, high) in enumerate(zip(spec.frequencies, spec.frequencies[1:]), start=1):
        if high <= LACUNARY_RATIO * low:
            return LacunarityViolation(n, high / low)
    return None


def riesz_energy(spec: RieszSpec) -> np.ndarray:
    """Partial sums of a_n^2; their divergence signals a singular limit."""
    return np.cumsum(np.square(spec.amplitudes))


def min_grid_size(spec: RieszSpec) -> int:
    """The smallest power-of-two grid that resolves `spec` exactly.

    The grid must reach 4*k_N and exceed twice the trigonometric degree, so
    that no coefficient with |n| <= grid/2 aliases.
    """
    need = max(4 * spec.frequencies[-1], 2 * spec.degree + 1)
    return 1 << (need - 1).bit_length()


def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def _check_grid(spec: RieszSpec, grid_size: int) -> None:
    required = min_grid_size(spec)
    if not _is_power_of_two(grid_size) or grid_size < required:
        raise GridTooCoarse(grid_size, required)


def _check_n_out(n_out: int) -> None:
    if isinstance(n_out, bool) or int(n_out) != n_out or n_out < 1:
        raise MeasureError(f'output range N_out = {n_out!r} must be a positive integer')


def riesz_density(spec: RieszSpec, grid_size: int) -> GridDensity:
    """Samples rho_N on the uniform grid of [0,1).

    Args:
        spec: The Riesz product.
        grid_size: A power of two at least `min_grid_size(spec)`.

    Returns:
        The density; each factor has mean 1 over a period, so the samples do too.
    """
    _check_grid(spec, grid_size)
    index = np.arange(grid_size, dtype=np.int64)
    samples = np.ones(grid_size)
    for amp, freq, phase in zip(spec.amplitudes, spec.frequencies, spec.phases):
        # Reduce k*i modulo the grid before scaling so large k lose no precision.
        angle = TWO_PI * np.mod(freq * index, grid_size) / grid_size + phase
        samples *= 1.0 + amp * np.cos(angle)
    _logger.debug('Sampled a %d-factor Riesz product on %d points', spec.level, grid_size)
    return GridDensity(dimension=1, grid_size=grid_size, samples=_frozen(samples))


def riesz_coeffs_quadrature(spec: RieszSpec, grid_size: int, n_out: int) -> FourierSeq:
    """Fourier coefficients of rho_N by discrete Fourier transform.

    rho_N is a trigonometric polynomial whose degree the grid resolves, so the
    transform is exact up to rounding.
    """
    _check_n_out(n_out)
    if n_out > grid_size // 2:
        raise MeasureError(f'N_out = {n_out} exceeds half the grid size {grid_size}')
    density = riesz_density(spec, grid_size)
    spectrum = np.fft.rfft(density.samples) / grid_size
    return hermitian_seq(spectrum[:n_out + 1])


def riesz_coeffs_lacunary(spec: RieszSpec, n_out: int) -> FourierSeq:
    """Closed-form Fourier coefficients of a lacunary Riesz product.

    Under k_{n+1}/k_n > 3 every m has at most one representation
    m = sum eps_n k_n with eps_n in {-1, 0, 1}; the coefficient is then the
    product of (a_n/2) exp(i eps_n phi_n) over the nonzero eps_n, and 0 when no
    representation exists.
    """
    _check_n_out(n_out)
    violation = lacunarity_violation(spec)
    if violation is not None:
        raise violation
    remainder = np.arange(n_out + 1, dtype=np.int64)
    coeffs = np.ones(n_out + 1, dtype=complex)
    # Greedy from the top: lower frequencies sum to less than k_n/2.
    for amp, freq, phase in reversed(list(zip(spec.amplitudes, spec.frequencies,
                                              spec.phases))):
        eps = np.where(2 * np.abs(remainder) > freq, np.sign(remainder), 0)
        factor = np.where(eps != 0, 0.5 * amp * np.exp(1j * eps * phase), 1.0)
        coeffs *= factor
        remainder = remainder - eps * freq
    coeffs[remainder != 0] = 0.0
    return hermitian_seq(coeffs)


def cantor_coeffs(n_out: int, depth: int = CANTOR_DEPTH) -> FourierSeq:
    """Fourier coefficients of the Cantor-Lebesgue measure.

    Uses the product over k = 1..depth of exp(-2 pi i n 3^-k) cos(2 pi n 3^-k).
    Each n 3^-k is reduced modulo 1 with integer arithmetic first, which makes
    mu_hat(3n) and mu_hat(n) agree to rounding of the last factor.
    """
    _check_n_out(n_out)
    if isinstance(depth, bool) or int(depth) != depth or depth < 1:
        raise MeasureError(f'Cantor depth {depth!r} must be at least 1')
    n = np.arange(n_out + 1, dtype=np.int64)
    coeffs = np.ones(n_out + 1, dtype=complex)
    for k in range(1, depth + 1):
        period = 3 ** k
        if period < 2 ** 62:
            frac = np.mod(n, period) / period
        else:
            frac = n / float(period)
        angle = TWO_PI * frac
        coeffs *= np.exp(-1j * angle) * np.cos(angle)
    return hermitian_seq(coeffs)


def cantor_samples(count: int, seed: int, digits: int = 48) -> np.ndarray:
    """Draws points of the Cantor set from the Cantor-Lebesgue measure by the
    random ternary series sum 2 eps_k 3^-k with fair eps_k in {0, 1}."""
    if count < 1 or digits < 1:
        raise MeasureError('sample count and digit count must be positive')
    rng = np.random.Generator(np.random.Philox(seed))
    points = np.zeros(count)
    for k in range(1, digits + 1):
        points += rng.integers(0, 2, size=count) * (2.0 / 3.0 ** k)
    return points


def empirical_coeffs(samples: np.ndarray, n_out: int) -> FourierSeq:
    """Fourier coefficients of the empirical measure of `samples`."""
    _check_n_out(n_out)
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise MeasureError('no samples')
    coeffs = np.empty(n_out + 1, dtype=complex)
    for n in range(n_out + 1):
        coeffs[n] = np.mean(np.exp(-1j * TWO_PI * np.mod(n * samples, 1.0)))
    return hermitian_seq(coeffs)


def lebesgue_coeffs(n_out: int) -> FourierSeq:
    """Fourier coefficients of the Lebesgue measure: 1 at n = 0, else 0."""
    _check_n_out(n_out)
    coeffs = np.zeros(n_out + 1, dtype=complex)
    coeffs[0] = 1.0
    return hermitian_seq(coeffs)


class AtomicMeasure(typ.NamedTuple):
    """A finite sum of point masses.

    Attributes:
        atoms: (location, mass) pairs with distinct locations in [0,1) and
            masses summing to 1.
    """
    atoms: typ.Tuple[typ.Tuple[float, float], ...]

    @property
    def max_mass(self) -> float:
        """The heaviest atom."""
        return max(mass for _, mass in self.atoms)


def atomic_measure(atoms: typ.Iterable[typ.Tuple[float, float]]) -> AtomicMeasure:
    """Validates a list of (location, mass) pairs."""
    pairs = tuple((float(loc), float(mass)) for loc, mass in atoms)
    if not pairs:
        raise MeasureError('an atomic measure needs at least one atom')
    for loc, mass in pairs:
        if not 0.0 <= loc < 1.0:
            raise MeasureError(f'atom location {loc!r} outside [0, 1)')
        if not mass > 0.0:
            raise MeasureError(f'atom mass {mass!r} is not positive')
    if len({loc for loc, _ in pairs}) != len(pairs):
        raise MeasureError('atom locations must be distinct')
    total = math.fsum(mass for _, mass in pairs)
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise MeasureError(f'atom masses sum to {total!r}, not 1')
    return AtomicMeasure(atoms=pairs)


def atomic_coeffs(measure: AtomicMeasure, n_out: int) -> FourierSeq:
    """Fourier coefficients sum_j m_j exp(-2 pi i n x_j) of an atomic measure."""
    _check_n_out(n_out)
    if not measure.atoms:
        raise MeasureError('an atomic measure needs at least one atom')
    locations = np.array([loc for loc, _ in measure.atoms])
    masses = np.array([mass for _, mass in measure.atoms])
    n = np.arange(n_out + 1, dtype=float)
    phase = np.mod(np.outer(n, locations), 1.0)
    coeffs = np.exp(-1j * TWO_PI * phase) @ masses
    return hermitian_seq(coeffs)


def riesz_to_document(spec: RieszSpec) -> typ.Dict[str, typ.Any]:
    """The JSON document of a Riesz product."""
    return {
        'amplitudes': list(spec.amplitudes),
        'frequencies': list(spec.frequencies),
        'phases': list(spec.phases),
    }


def riesz_from_document(document: typ.Mapping[str, typ.Any]) -> RieszSpec:
    """Parses the JSON document written by `riesz_to_document`."""
    if not isinstance(document, typ.Mapping):
        raise MeasureError('a Riesz document must be a mapping')
    try:
        amplitudes = document['amplitudes']
        frequencies = document['frequencies']
    except KeyError as exc:
        raise MeasureError(f'Riesz document lacks key {exc.args[0]!r}') from exc
    return riesz_spec(amplitudes, frequencies, document.get('phases'))


def atomic_to_document(measure: AtomicMeasure) -> typ.Dict[str, typ.Any]:
    """The JSON document of an atomic measure."""
    return {'atoms': [[loc, mass] for loc, mass in measure.atoms]}


def atomic_from_document(document: typ.Mapping[str, typ.Any]) -> AtomicMeasure:
    """Parses the JSON document written by `atomic_to_document`."""
    if not isinstance(document, typ.Mapping) or 'atoms' not in document:
        raise MeasureError("an atomic document needs an 'atoms' list")
    try:
        return atomic_measure((loc, mass) for loc, mass in document['atoms'])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, MeasureError):
            raise
        raise MeasureError(f'malformed atom list: {exc}') from exc
