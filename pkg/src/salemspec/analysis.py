"""
Decay-exponent estimation and measure diagnostics for coefficient sequences.
"""

from __future__ import annotations

import logging
import math
import typing as typ

import numpy as np

from salemspec.errors import NumericalFailure, SalemspecError
from salemspec.measures import FourierSeq, GridDensity

_logger = logging.getLogger(__name__)

MIN_SEQUENCE_LENGTH = 8
CUMULATIVE_TOLERANCE = 1e-12
LARGE_COEFFICIENT_BOUND = 0.1
ZERO_BLOCK_TOLERANCE = 1e-12


class AnalysisError(SalemspecError):
    """Raised for invalid analysis parameters."""


class Block(typ.NamedTuple):
    """The maximum magnitude over lags start <= t < stop.

    Attributes:
        index: j, with [start, stop) inside [2^j, 2^{j+1}).
        start: First lag of the block.
        stop: One past the last lag of the block.
        maximum: The largest magnitude in the block.
    """
    index: int
    start: int
    stop: int
    maximum: float

    @property
    def count(self) -> int:
        """The number of lags in the block."""
        return self.stop - self.start


class DecayFit(typ.NamedTuple):
    """A least-squares fit of log2 M_j = kappa_hat * j + intercept.

    Attributes:
        kappa_hat: The fitted decay exponent.
        intercept: The fitted intercept.
        blocks: The nonzero blocks the fit used.
        dropped: The number of zero blocks left out.
        residual: Root-mean-square residual of the fit, in log2 units.
    """
    kappa_hat: float
    intercept: float
    blocks: typ.Tuple[Block, ...]
    dropped: int
    residual: float


def dyadic_blocks(values: typ.Any, start: int = 1,
                  stop: typ.Optional[int] = None) -> typ.List[Block]:
    """Dyadic block maxima of |values[t]| for start <= t <= stop.

    Args:
        values: Array indexed by the lag t.
        start: The first lag, at least 1.
        stop: The last lag, included; defaults to the last index.

    Returns:
        One `Block` per dyadic range meeting [start, stop], in increasing order.
    """
    magnitudes = np.abs(np.asarray(values))
    if stop is None:
        stop = len(magnitudes) - 1
    if start < 1 or stop >= len(magnitudes):
        raise AnalysisError(f'lags {start}..{stop} outside 1..{len(magnitudes) - 1}')
    blocks = []
    j = start.bit_length() - 1
    while (1 << j) <= stop:
        low, high = max(1 << j, start), min((1 << (j + 1)) - 1, stop)
        blocks.append(Block(index=j, start=low, stop=high + 1,
                            maximum=float(np.max(magnitudes[low:high + 1]))))
        j += 1
    return blocks


def fit_blocks(blocks: typ.Sequence[Block], weighted: bool = False) -> DecayFit:
    """Fits log2 of the block maxima against the block index.

    Blocks whose maximum is below `ZERO_BLOCK_TOLERANCE` times the largest one
    are dropped and counted.

    Args:
        blocks: The blocks, as returned by `dyadic_blocks`.
        weighted: Whether to weight each block by its number of lags.

    Returns:
        The `DecayFit` instance.
    """
    largest = max((b.maximum for b in blocks), default=0.0)
    # Rounding residue of exact zeros counts as zero.
    nonzero = tuple(b for b in blocks if b.maximum > ZERO_BLOCK_TOLERANCE * largest)
    dropped = len(blocks) - len(nonzero)
    if not nonzero:
        raise NumericalFailure('all blocks zero')
    if len(nonzero) < 2:
        raise NumericalFailure('fewer than two nonzero blocks to fit')
    x = np.array([b.index for b in nonzero], dtype=float)
    y = np.log2([b.maximum for b in nonzero])
    weights = np.sqrt([b.count for b in nonzero]) if weighted else None
    slope, intercept = np.polyfit(x, y, 1, w=weights)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    if not (math.isfinite(slope) and math.isfinite(intercept)):
        raise NumericalFailure('non-finite decay fit')
    if dropped:
        _logger.debug('Dropped %d zero block(s) from the decay fit', dropped)
    return DecayFit(kappa_hat=float(slope), intercept=float(intercept),
                    blocks=nonzero, dropped=dropped, residual=residual)


def _magnitudes(seq: typ.Any) -> np.ndarray:
    """|c_t| for t = 1..T, from a FourierSeq or a plain sequence starting at t = 1."""
    if isinstance(seq, FourierSeq):
        return seq.magnitudes()
    return np.abs(np.asarray(seq)).reshape(-1)


def kappa_estimate(seq: typ.Any, weighted: bool = False) -> DecayFit:
    """Estimates the decay exponent of |c_t| over t = 1..T from dyadic block
    maxima.

    Args:
        seq: A `FourierSeq` (its nonnegative side is used) or the magnitudes
            |c_1|, ..., |c_T|.
        weighted: Whether to weight blocks by their size.

    Returns:
        The `DecayFit` instance.
    """
    magnitudes = _magnitudes(seq)
    if len(magnitudes) < MIN_SEQUENCE_LENGTH:
        raise AnalysisError(f'T = {len(magnitudes)} is below {MIN_SEQUENCE_LENGTH}; '
                            'at least 3 dyadic blocks are needed')
    values = np.concatenate(([0.0], magnitudes))
    return fit_blocks(dyadic_blocks(values, 1, len(magnitudes)), weighted=weighted)


def plot_data(fit: DecayFit) -> typ.List[typ.Tuple[float, float]]:
    """(log2 t, log2 block maximum) rows of the blocks behind a fit."""
    return [(math.log2(b.start), math.log2(b.maximum)) for b in fit.blocks]


def wiener_average(seq: FourierSeq, max_index: int) -> float:
    """(1/(2N+1)) sum_{|n|<=N} |c_n|^2."""
    if not 0 <= max_index <= seq.max_index:
        raise AnalysisError(f'N = {max_index} exceeds the range 0..{seq.max_index}')
    window = seq.coeffs[seq.max_index - max_index:seq.max_index + max_index + 1]
    return float(np.mean(np.abs(window) ** 2))


def lp_norm_profile(seq: typ.Any, p: float,
                    stop: typ.Optional[int] = None) -> typ.List[typ.Tuple[int, float]]:
    """Partial sums S_p(T') = sum_{1<=t<=T'} |c_t|^p at T' = 1, 2, 4, ... and T.

    Args:
        seq: A `FourierSeq` or the magnitudes |c_1|, ..., |c_T|.
        p: The exponent, at least 1.
        stop: T; defaults to the sequence length.

    Returns:
        (T', S_p(T')) pairs with increasing T'.
    """
    if not p >= 1:
        raise AnalysisError(f'p = {p} must be at least 1')
    magnitudes = _magnitudes(seq)
    stop = len(magnitudes) if stop is None else stop
    if not 1 <= stop <= len(magnitudes):
        raise AnalysisError(f'T = {stop} outside 1..{len(magnitudes)}')
    sums = np.cumsum(magnitudes[:stop] ** p)
    points = [1 << j for j in range(stop.bit_length()) if (1 << j) <= stop]
    if points[-1] != stop:
        points.append(stop)
    return [(t, float(sums[t - 1])) for t in points]


def mass_concentration(density: typ.Any, epsilon: float) -> float:
    """The smallest fraction of cells carrying at least 1 - epsilon of the mass.

    Args:
        density: A `GridDensity` or an array of nonnegative weights, e.g. a
            spectral density; weights are normalized to total mass 1.
        epsilon: The neglected mass, in (0, 1).
    """
    if not 0 < epsilon < 1:
        raise AnalysisError(f'epsilon = {epsilon} outside (0, 1)')
    if isinstance(density, GridDensity):
        masses = density.cell_masses()
    else:
        masses = np.asarray(density, dtype=float).reshape(-1)
    if np.any(masses < 0):
        raise AnalysisError('negative cell mass')
    total = masses.sum()
    if not total > 0:
        raise AnalysisError('the density has no mass')
    cumulative = np.cumsum(np.sort(masses / total)[::-1])
    cells = int(np.searchsorted(cumulative, 1 - epsilon - CUMULATIVE_TOLERANCE)) + 1
    return min(cells, masses.size) / masses.size


def radial_envelope(values: typ.Any) -> np.ndarray:
    """max |values[t]| over the lags of each circular sup-norm radius r.

    Args:
        values: Array over a level, shape (h,)*d.

    Returns:
        Array indexed by r = 0..h//2.
    """
    magnitudes = np.abs(np.asarray(values))
    height = magnitudes.shape[0]
    coords = np.indices(magnitudes.shape)
    radius = np.max(np.minimum(coords, height - coords), axis=0)
    envelope = np.zeros(height // 2 + 1)
    np.maximum.at(envelope, radius.reshape(-1), magnitudes.reshape(-1))
    return envelope


def large_coefficient_density(seq: FourierSeq, bound: float, max_index: int) -> float:
    """The fraction of |n| <= N with |c_n| > bound."""
    if not 0 <= max_index <= seq.max_index:
        raise AnalysisError(f'N = {max_index} exceeds the range 0..{seq.max_index}')
    window = seq.coeffs[seq.max_index - max_index:seq.max_index + max_index + 1]
    return float(np.mean(np.abs(window) > bound))


def convolution_square(seq: FourierSeq) -> FourierSeq:
    """Coefficients of the convolution of a measure with itself."""
    coeffs = seq.coeffs ** 2
    coeffs.setflags(write=False)
    return FourierSeq(max_index=seq.max_index, coeffs=coeffs)


class MeasureDiagnostics(typ.NamedTuple):
    """Finite-range indicators of continuity and decay.

    Attributes:
        wiener: (N, Wiener average) at N = 1, 2, 4, ...
        tail_sup: (N, max_{|n|>=N} |c_n|) at the same N.
        large_density: (N, fraction of |n| <= N with |c_n| > bound).
        l2_profile: The p = 2 profile of the nonnegative side.
        bound: The bound used for `large_density`.
    """
    wiener: typ.Tuple[typ.Tuple[int, float], ...]
    tail_sup: typ.Tuple[typ.Tuple[int, float], ...]
    large_density: typ.Tuple[typ.Tuple[int, float], ...]
    l2_profile: typ.Tuple[typ.Tuple[int, float], ...]
    bound: float


def measure_diagnostics(seq: FourierSeq,
                        bound: float = LARGE_COEFFICIENT_BOUND) -> MeasureDiagnostics:
    """Collects Wiener averages, tail suprema and large-coefficient densities at
    dyadic N. No verdict on singularity is drawn."""
    if seq.max_index < 1:
        raise AnalysisError('diagnostics need coefficients beyond n = 0')
    sizes = [1 << j for j in range(seq.max_index.bit_length())]
    magnitudes = np.abs(seq.coeffs)
    folded = np.maximum(magnitudes[seq.max_index:], magnitudes[seq.max_index::-1])
    tail = np.maximum.accumulate(folded[::-1])[::-1]
    return MeasureDiagnostics(
        wiener=tuple((n, wiener_average(seq, n)) for n in sizes),
        tail_sup=tuple((n, float(tail[n])) for n in sizes),
        large_density=tuple((n, large_coefficient_density(seq, bound, n))
                            for n in sizes),
        l2_profile=tuple(lp_norm_profile(seq, 2)),
        bound=bound)
