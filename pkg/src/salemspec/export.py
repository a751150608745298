"""
CSV and JSON files written and read by the command-line program.

CSV files are UTF-8, comma-separated, with a header row and LF line endings.
Floats are written with 17 significant digits so every double reads back
exactly. JSON documents are indented with sorted keys.
"""

from __future__ import annotations

import csv
import json
import math
import os
import typing as typ

import numpy as np

from salemspec.analysis import DecayFit, radial_envelope
from salemspec.ensemble import EnsembleStats, TestReport
from salemspec.errors import SalemspecError
from salemspec.measures import FourierSeq, GridDensity, hermitian_seq

PathLike = typ.Union[str, 'os.PathLike[str]']


class MalformedTable(SalemspecError):
    """Raised when an input CSV file cannot be parsed.

    Attributes:
        line: The 1-based line number of the offending row.
    """
    line: int

    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f'malformed table at line {line}: {reason}')
        self.line = line


def format_number(value: typ.Any) -> str:
    """Renders an integer as is and a float with 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f'{float(value):.17g}'


def write_csv(path: PathLike, header: typ.Sequence[str],
              rows: typ.Iterable[typ.Sequence[typ.Any]]) -> None:
    """Writes rows of numbers below a header row."""
    with open(path, 'w', newline='', encoding='utf-8') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def _jsonable(value: typ.Any) -> typ.Any:
    if isinstance(value, typ.Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [_jsonable(value.real), _jsonable(value.imag)]
    return value


def dumps_json(document: typ.Any) -> str:
    """Canonical JSON text; non-finite floats become the strings 'inf' and 'nan'."""
    return json.dumps(_jsonable(document), indent=2, sort_keys=True) + '\n'


def write_json(path: PathLike, document: typ.Any) -> None:
    """Writes a JSON document."""
    with open(path, 'w', newline='\n', encoding='utf-8') as file:
        file.write(dumps_json(document))


def _lag_header(dimension: int, name: str) -> typ.List[str]:
    return [name] if dimension == 1 else [f'{name}{axis + 1}' for axis in range(dimension)]


def _array_rows(values: np.ndarray) -> typ.Iterator[typ.List[typ.Any]]:
    for index in np.ndindex(*values.shape):
        value = values[index]
        if np.iscomplexobj(values):
            yield [*index, value.real, value.imag, abs(value)]
        else:
            yield [*index, value]


def write_fourier_csv(path: PathLike, seq: FourierSeq) -> None:
    """Columns n, re, im, abs over -N..N."""
    write_csv(path, ['n', 're', 'im', 'abs'],
              ([n, c.real, c.imag, abs(c)] for n, c in zip(seq.indices, seq.coeffs)))


def write_density_csv(path: PathLike, density: GridDensity) -> None:
    """Grid indices and density samples."""
    write_csv(path, _lag_header(density.dimension, 'i') + ['density'],
              _array_rows(density.samples))


def write_array_csv(path: PathLike, values: np.ndarray, name: str) -> None:
    """An array over a level: index columns, then re, im and abs (or one value
    column for real arrays)."""
    values = np.asarray(values)
    tail = ['re', 'im', 'abs'] if np.iscomplexobj(values) else ['value']
    write_csv(path, _lag_header(values.ndim, name) + tail, _array_rows(values))


def write_stats_csv(path: PathLike, stats: EnsembleStats) -> None:
    """Per-lag moments of an ensemble."""
    header = _lag_header(stats.mean.ndim, 't') + [
        'mean_re', 'mean_im', 'power', 'variance', 'power_variance']
    variance, power_variance = stats.variance, stats.power_variance

    def rows() -> typ.Iterator[typ.List[typ.Any]]:
        for lag in np.ndindex(*stats.mean.shape):
            mean = stats.mean[lag]
            yield [*lag, mean.real, mean.imag, stats.power[lag], variance[lag],
                   power_variance[lag]]
    write_csv(path, header, rows())


def write_pairs_csv(path: PathLike, header: typ.Sequence[str],
                    pairs: typ.Iterable[typ.Sequence[typ.Any]]) -> None:
    """Two-column (or wider) tables such as plot data and profiles."""
    write_csv(path, header, pairs)


def fit_document(fit: DecayFit) -> typ.Dict[str, typ.Any]:
    """The JSON document of a decay fit."""
    return {
        'kappa_hat': fit.kappa_hat,
        'intercept': fit.intercept,
        'residual': fit.residual,
        'dropped_blocks': fit.dropped,
        'blocks': [{'j': b.index, 'start': b.start, 'stop': b.stop,
                    'maximum': b.maximum} for b in fit.blocks],
    }


def report_document(report: TestReport) -> typ.Dict[str, typ.Any]:
    """The JSON document of a test verdict."""
    return {
        'name': report.name,
        'passed': report.passed,
        'verdict': report.verdict,
        'statistic': report.statistic,
        'details': report.details,
        'warnings': list(report.warnings),
    }


def stats_document(stats: EnsembleStats) -> typ.Dict[str, typ.Any]:
    """Summary of an ensemble; per-lag moments go to the CSV file."""
    return {
        'level': stats.level,
        'replicas': stats.replicas,
        'seed': stats.seed,
        'source': stats.source,
        'lags': int(stats.mean.size),
        'norm0': float(stats.mean.reshape(-1)[0].real),
        'max_abs_mean': float(np.max(np.abs(stats.mean.reshape(-1)[1:]), initial=0.0)),
    }


class Table(typ.NamedTuple):
    """A parsed numeric CSV file.

    Attributes:
        columns: The header names.
        rows: Float array with one row per data line.
        lines: The file line number of every data row.
    """
    columns: typ.Tuple[str, ...]
    rows: np.ndarray
    lines: typ.Tuple[int, ...]

    def column(self, name: str) -> np.ndarray:
        """The values of one column."""
        return self.rows[:, self.columns.index(name)]


def read_table(path: PathLike) -> Table:
    """Reads a numeric CSV file with a header row."""
    with open(path, newline='', encoding='utf-8') as file:
        reader = csv.reader(file)
        header: typ.Optional[typ.Tuple[str, ...]] = None
        rows: typ.List[typ.List[float]] = []
        lines: typ.List[int] = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if header is None:
                header = tuple(cell.strip() for cell in row)
                if len(set(header)) != len(header) or not all(header):
                    raise MalformedTable(line, 'invalid header')
                continue
            if len(row) != len(header):
                raise MalformedTable(line, f'expected {len(header)} fields, '
                                           f'got {len(row)}')
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise MalformedTable(line, str(exc)) from exc
            if not all(math.isfinite(v) for v in values):
                raise MalformedTable(line, 'non-finite value')
            rows.append(values)
            lines.append(line)
    if header is None:
        raise MalformedTable(1, 'empty file')
    if not rows:
        raise MalformedTable(2, 'no data rows')
    return Table(columns=header, rows=np.array(rows), lines=tuple(lines))


class AnalysisInput(typ.NamedTuple):
    """A sequence to analyze.

    Attributes:
        magnitudes: |c_t| for t = 1..T.
        seq: The coefficients, when the input was a Fourier coefficient table.
        kind: 'fourier', 'sequence' or 'correlation'.
    """
    magnitudes: np.ndarray
    seq: typ.Optional[FourierSeq]
    kind: str


def _complex_column(table: Table) -> np.ndarray:
    if 're' not in table.columns:
        raise MalformedTable(1, "missing column 're'")
    values = table.column('re').astype(complex)
    if 'im' in table.columns:
        values += 1j * table.column('im')
    return values


def _integer_column(table: Table, name: str) -> np.ndarray:
    values = table.column(name)
    for value, line in zip(values, table.lines):
        if value != int(value):
            raise MalformedTable(line, f'{name} = {value!r} is not an integer')
    return values.astype(np.int64)


def _fourier_input(table: Table) -> AnalysisInput:
    indices = _integer_column(table, 'n')
    values = _complex_column(table)
    max_index = int(np.max(np.abs(indices)))
    half = np.full(max_index + 1, np.nan, dtype=complex)
    negative: typ.Dict[int, complex] = {}
    for n, value, line in zip(indices, values, table.lines):
        if n >= 0:
            if not np.isnan(half[n]):
                raise MalformedTable(line, f'duplicate index {n}')
            half[n] = value
        else:
            negative[int(-n)] = value
    missing = np.flatnonzero(np.isnan(half))
    if missing.size:
        raise MalformedTable(table.lines[-1], f'index {int(missing[0])} missing')
    seq = hermitian_seq(half)
    if negative:
        seq = FourierSeq(max_index=max_index, coeffs=seq.coeffs.copy())
        for n, value in negative.items():
            seq.coeffs[max_index - n] = value
        seq.coeffs.setflags(write=False)
    return AnalysisInput(magnitudes=seq.magnitudes(), seq=seq, kind='fourier')


def _lag_input(table: Table) -> AnalysisInput:
    names = [name for name in ('t', 't1', 't2') if name in table.columns]
    lags = np.stack([_integer_column(table, name) for name in names], axis=1)
    values = _complex_column(table)
    first = int(lags[0].max()) if lags.size else 0
    if names == ['t'] and first != 0:
        order = lags[:, 0]
        expected = np.arange(first, first + len(order))
        if first != 1 or not np.array_equal(order, expected):
            bad = int(np.flatnonzero(order != expected)[0]) if first == 1 else 0
            raise MalformedTable(table.lines[bad], 'lags must run 1, 2, 3, ...')
        return AnalysisInput(magnitudes=np.abs(values), seq=None, kind='sequence')
    if np.any(lags < 0):
        bad = int(np.flatnonzero(np.any(lags < 0, axis=1))[0])
        raise MalformedTable(table.lines[bad], 'negative lag')
    height = int(lags.max()) + 1
    grid = np.full((height,) * lags.shape[1], np.nan, dtype=complex)
    grid[tuple(lags.T)] = values
    if np.any(np.isnan(grid)) or len(values) != grid.size:
        raise MalformedTable(table.lines[-1], 'correlation table does not cover '
                                              'a full period')
    envelope = radial_envelope(grid)
    return AnalysisInput(magnitudes=envelope[1:], seq=None, kind='correlation')


def read_analysis_input(path: PathLike) -> AnalysisInput:
    """Reads a coefficient or correlation table for analysis.

    Tables with an 'n' column are Fourier coefficients; negative indices
    are mirrored when absent. Tables with a 't' column starting at 1 are
    plain sequences. Tables with lags starting at 0 ('t', or 't1' and
    't2') cover a full period of a circular correlation and are folded to
    their radial envelope.
    """
    table = read_table(path)
    if 'n' in table.columns:
        return _fourier_input(table)
    if 't' in table.columns or 't1' in table.columns:
        return _lag_input(table)
    raise MalformedTable(1, "expected an 'n' or 't' column")
