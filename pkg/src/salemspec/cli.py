"""
This is the entry point for the `salemspec` command-line program.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import typing as typ

import numpy as np

from salemspec import __version__
from salemspec import ensemble as ens
from salemspec.analysis import (AnalysisError, kappa_estimate, lp_norm_profile,
                                mass_concentration, measure_diagnostics, plot_data,
                                radial_envelope)
from salemspec.config import (AnalyzeConfig, EnsembleConfig, ExperimentConfig,
                              IcebergConfig, RieszConfig, default_output_dir,
                              dump_config, load_config)
from salemspec.errors import NumericalFailure, SalemspecError
from salemspec.export import (fit_document, read_analysis_input, report_document,
                              stats_document, write_array_csv, write_density_csv,
                              write_fourier_csv, write_json, write_pairs_csv,
                              write_stats_csv)
from salemspec.iceberg import (correlation, lift, rotations_to_document,
                               spectral_density)
from salemspec.measures import (FourierSeq, atomic_coeffs, cantor_coeffs,
                                lacunarity_violation, min_grid_size, riesz_coeffs_lacunary,
                                riesz_coeffs_quadrature, riesz_density, riesz_energy)

__author__ = "salemspec developers"
__license__ = "MIT"

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


class Context(typ.NamedTuple):
    """Options shared by all subcommands.

    Attributes:
        out: The output directory.
        threads: Worker threads for ensembles.
    """
    out: str
    threads: int

    def path(self, name: str) -> str:
        """A file in the output directory."""
        return os.path.join(self.out, name)


def _decay_fit(magnitudes: np.ndarray) -> typ.Optional[typ.Dict[str, typ.Any]]:
    try:
        return fit_document(kappa_estimate(magnitudes))
    except (AnalysisError, NumericalFailure) as exc:
        _logger.info('Skipping the decay fit: %s', exc)
        return None


def _measure_coeffs(config: RieszConfig, summary: typ.Dict[str, typ.Any],
                    ctx: Context) -> FourierSeq:
    if config.measure == 'cantor':
        return cantor_coeffs(config.n_out, config.depth)
    if config.measure == 'atomic':
        assert config.atomic is not None
        summary['max_mass'] = config.atomic.max_mass
        return atomic_coeffs(config.atomic, config.n_out)

    spec = config.riesz
    assert spec is not None
    violation = lacunarity_violation(spec)
    if config.method == 'lacunary' and violation is not None:
        raise violation
    grid_size = config.grid_size or max(min_grid_size(spec),
                                        1 << (2 * config.n_out - 1).bit_length())
    density = riesz_density(spec, grid_size)
    write_density_csv(ctx.path('density.csv'), density)
    summary.update(grid_size=grid_size, lacunary=violation is None,
                   energy=float(riesz_energy(spec)[-1]),
                   concentration=mass_concentration(density, config.epsilon))

    pathways: typ.Dict[str, FourierSeq] = {}
    if config.method in ('auto', 'quadrature'):
        pathways['quadrature'] = riesz_coeffs_quadrature(spec, grid_size, config.n_out)
    if config.method == 'lacunary' or (config.method == 'auto' and violation is None):
        pathways['lacunary'] = riesz_coeffs_lacunary(spec, config.n_out)
    for name, seq in pathways.items():
        write_fourier_csv(ctx.path(f'coefficients_{name}.csv'), seq)
    if len(pathways) == 2:
        difference = float(np.max(np.abs(pathways['quadrature'].coeffs
                                          - pathways['lacunary'].coeffs)))
        summary['pathway_difference'] = difference
        _logger.info('Quadrature and closed form differ by at most %.3g', difference)
    summary['pathways'] = sorted(pathways)
    return pathways.get('lacunary', pathways.get('quadrature'))


def cmd_riesz(config: RieszConfig, ctx: Context) -> typ.Dict[str, typ.Any]:
    """Coefficients, density and decay fit of a Riesz product, the Cantor
    measure or an atomic measure."""
    summary: typ.Dict[str, typ.Any] = {'measure': config.measure, 'n_out': config.n_out}
    seq = _measure_coeffs(config, summary, ctx)
    if config.measure != 'riesz':
        write_fourier_csv(ctx.path('coefficients.csv'), seq)
    fit = _decay_fit(seq.magnitudes())
    summary['kappa_hat'] = None if fit is None else fit['kappa_hat']
    if fit is not None:
        write_json(ctx.path('decay_fit.json'), fit)
    return summary


def cmd_iceberg(config: IcebergConfig, ctx: Context) -> typ.Dict[str, typ.Any]:
    """Lifts a cylindric function and writes its correlation and spectral
    density."""
    tower = config.tower
    family = config.rotations.build(tower)
    f = config.function.build(tower)
    write_json(ctx.path('rotations.json'), rotations_to_document(family))

    values = lift(f, family, config.level)
    corr = correlation(values, tower=tower, level=config.level)
    write_array_csv(ctx.path('function.csv'), values, 'x')
    write_array_csv(ctx.path('correlation.csv'), corr.values, 't')
    weights = spectral_density(values)
    write_array_csv(ctx.path('spectral_density.csv'), weights, 'k')
    for level in config.export_levels:
        lifted = lift(f, family, level)
        write_array_csv(ctx.path(f'correlation_level{level}.csv'),
                        correlation(lifted).values, 't')

    summary: typ.Dict[str, typ.Any] = {
        'level': config.level, 'height': tower.height(config.level),
        'norm0': corr.norm0, 'provenance': family.provenance.kind,
    }
    if corr.norm0 > 0:
        summary['spectral_concentration'] = mass_concentration(weights, 0.5)
    fit = _decay_fit(radial_envelope(corr.values)[1:])
    summary['kappa_hat'] = None if fit is None else fit['kappa_hat']
    if fit is not None:
        write_json(ctx.path('decay_fit.json'), fit)
    return summary


def _moment_bound(stats: ens.EnsembleStats) -> typ.Dict[str, typ.Any]:
    try:
        return report_document(ens.test_moment_bound(stats))
    except (ens.EnsembleError, NumericalFailure) as exc:
        return {'name': 'moment-bound', 'verdict': 'skipped', 'reason': str(exc)}


def _envelope_slope(stats: ens.EnsembleStats,
                    normalized: bool = False) -> typ.Optional[float]:
    try:
        return ens.decay_envelope_fit(stats, normalized=normalized).kappa_hat
    except (ens.EnsembleError, NumericalFailure):
        return None


def cmd_ensemble(config: EnsembleConfig, ctx: Context) -> typ.Dict[str, typ.Any]:
    """Runs the ensembles level by level and reports the statistical tests."""
    tower = config.tower
    f = config.function.build(tower)
    results = []
    parent: typ.Optional[ens.EnsembleStats] = None
    for level in range(f.base_level, config.level + 1):
        stats = ens.run_ensemble(tower, f, level, config.replicas, config.seed,
                                 threads=ctx.threads, alpha_support=config.alpha_support)
        write_stats_csv(ctx.path(f'moments_level{level}.csv'), stats)
        tests = []
        if level > f.base_level:
            if 'mean-zero' in config.tests:
                tests.append(report_document(ens.test_mean_zero(stats)))
            if 'recursion' in config.tests and parent is not None:
                tests.append(report_document(ens.test_recursion(stats, parent)))
            if 'moment-bound' in config.tests:
                tests.append(_moment_bound(stats))
        norms = ens.second_moment_norms(stats)
        results.append({'stats': stats_document(stats), 'tests': tests,
                        'norms': norms._asdict(),
                        'envelope_slope': _envelope_slope(stats),
                        'normalized_envelope_slope': _envelope_slope(stats, True)})
        for test in tests:
            _logger.info('Level %d %s: %s', level, test['name'], test['verdict'])
        parent = stats

    document: typ.Dict[str, typ.Any] = {'config': config.to_document(), 'levels': results}
    if config.control:
        control = ens.run_white_noise(tower, config.level, config.replicas, config.seed,
                                      threads=ctx.threads)
        write_stats_csv(ctx.path('control_moments.csv'), control)
        document['control'] = {
            'stats': stats_document(control),
            'tests': [dict(_moment_bound(control), expected_control=True)],
            'envelope_slope': _envelope_slope(control),
            'normalized_envelope_slope': _envelope_slope(control, True),
        }
    write_json(ctx.path('ensemble.json'), document)
    verdicts = [t['verdict'] for level in results for t in level['tests']]
    return {'levels': len(results), 'verdicts': verdicts,
            'failed': sum(v == 'fail' for v in verdicts)}


def cmd_analyze(config: AnalyzeConfig, ctx: Context) -> typ.Dict[str, typ.Any]:
    """Decay fit, l^p profiles and diagnostics of a coefficient table."""
    data = read_analysis_input(config.input)
    fit = kappa_estimate(data.magnitudes, weighted=config.weighted)
    write_json(ctx.path('decay_fit.json'), fit_document(fit))
    write_pairs_csv(ctx.path('plot_data.csv'), ['log2_t', 'log2_max'], plot_data(fit))
    write_pairs_csv(ctx.path('lp_profiles.csv'), ['p', 'T', 'sum'],
                    ([p, t, s] for p in config.p_values
                     for t, s in lp_norm_profile(data.magnitudes, p)))
    summary: typ.Dict[str, typ.Any] = {'kind': data.kind, 'kappa_hat': fit.kappa_hat,
                                       'T': int(len(data.magnitudes))}
    if data.seq is not None:
        diagnostics = measure_diagnostics(data.seq, config.bound)
        write_pairs_csv(ctx.path('wiener.csv'), ['N', 'average'], diagnostics.wiener)
        write_json(ctx.path('diagnostics.json'), diagnostics._asdict())
        third = data.seq.max_index // 3
        write_pairs_csv(ctx.path('self_similarity.csv'),
                        ['n', 'abs_c_n', 'abs_c_3n', 'difference'],
                        ([n, abs(data.seq.at(n)), abs(data.seq.at(3 * n)),
                          abs(data.seq.at(3 * n) - data.seq.at(n))]
                         for n in range(1, third + 1)))
    if config.epsilon is not None:
        summary['concentration'] = mass_concentration(data.magnitudes ** 2,
                                                      config.epsilon)
    return summary


_COMMANDS: typ.Dict[str, typ.Callable[[typ.Any, Context], typ.Dict[str, typ.Any]]] = {
    'riesz': cmd_riesz,
    'iceberg': cmd_iceberg,
    'ensemble': cmd_ensemble,
    'analyze': cmd_analyze,
}


def parse_args(args: typ.List[str]) -> argparse.Namespace:
    """Parse command line parameters.

    Args:
      args (List[str]): command line parameters as list of strings
          (for example  ``["riesz", "--config", "riesz.json"]``).

    Returns:
      :obj:`argparse.Namespace`: command line parameters namespace.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        dest="config",
        help="path to the experiment configuration (JSON or YAML)",
        type=argparse.FileType("r"),
        required=True,
        metavar="PATH"
    )
    common.add_argument(
        "--out",
        dest="out",
        help="output directory (default: $SALEMSPEC_OUTPUT_DIR or the current one)",
        metavar="DIR"
    )
    common.add_argument(
        "--seed",
        dest="seed",
        help="seed overriding the configuration",
        type=int,
        metavar="U64"
    )
    common.add_argument(
        "--threads",
        dest="threads",
        help="worker threads for ensembles (never changes results)",
        type=int,
        default=1,
        metavar="N"
    )
    common.add_argument(
        "-v",
        "--verbose",
        dest="loglevel",
        help="set loglevel to INFO",
        action="store_const",
        const=logging.INFO,
        default=logging.WARNING,
    )
    common.add_argument(
        "-vv",
        "--very-verbose",
        dest="loglevel",
        help="set loglevel to DEBUG",
        action="store_const",
        const=logging.DEBUG,
    )

    parser = argparse.ArgumentParser(
        description="Fourier decay experiments for singular measures")
    parser.add_argument(
        "--version",
        action="version",
        version=f"salemspec {__version__}"
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    riesz = commands.add_parser(
        "riesz", parents=[common],
        help="coefficients of Riesz products, the Cantor measure or atoms")
    riesz.add_argument(
        "--method",
        dest="method",
        choices=("auto", "quadrature", "lacunary"),
        help="coefficient pathway"
    )
    riesz.add_argument(
        "--n-out",
        dest="n_out",
        type=int,
        help="largest coefficient index",
        metavar="N"
    )
    commands.add_parser("iceberg", parents=[common],
                        help="lift a cylindric function and correlate it")
    commands.add_parser("ensemble", parents=[common],
                        help="Monte Carlo tests over random rotation families")
    commands.add_parser("analyze", parents=[common],
                        help="decay fit and diagnostics of a coefficient table")
    return parser.parse_args(args)


def setup_logging(loglevel: int) -> None:
    """Setup basic logging.

    Args:
      loglevel (int): Minimum loglevel for emitting messages.
    """
    logformat = "[%(asctime)s] %(levelname)s:%(name)s:%(message)s"
    logging.basicConfig(
        level=loglevel, stream=sys.stderr, format=logformat, datefmt="%Y-%m-%d %H:%M:%S"
    )


def _apply_overrides(config: ExperimentConfig, pargs: argparse.Namespace
                     ) -> ExperimentConfig:
    if pargs.seed is not None:
        if not 0 <= pargs.seed < 2 ** 64:
            raise SalemspecError(f'--seed {pargs.seed} is not an unsigned 64-bit integer')
        config = config.with_seed(pargs.seed)
    if isinstance(config, RieszConfig):
        if getattr(pargs, 'method', None) is not None:
            config = config._replace(method=pargs.method)
        if getattr(pargs, 'n_out', None) is not None:
            if pargs.n_out < 1:
                raise SalemspecError(f'--n-out {pargs.n_out} must be positive')
            config = config._replace(n_out=pargs.n_out)
    return config


def main(args: typ.List[str]) -> int:
    """Loads the configuration given on the command line and runs the
    subcommand.

    Args:
      args (List[str]): command line parameters as list of strings
          (for example  ``["iceberg", "--config", "morse.json", "-v"]``).

    Returns:
      The exit code: 0 on success, 2 for invalid input, 3 for numerical failure.
    """
    pargs = parse_args(args)
    setup_logging(pargs.loglevel)

    with pargs.config:
        config = load_config(_logger, pargs.config, pargs.command)
    try:
        config = _apply_overrides(config, pargs)
        if pargs.threads < 1:
            raise SalemspecError(f'--threads {pargs.threads} must be positive')
        ctx = Context(out=pargs.out or default_output_dir(), threads=pargs.threads)
        os.makedirs(ctx.out, exist_ok=True)
        _logger.debug('Effective configuration:\n%s', dump_config(config))
        summary = _COMMANDS[pargs.command](config, ctx)
    except NumericalFailure as exc:
        _logger.critical('Numerical failure: %s', exc)
        return EXIT_NUMERICAL
    except SalemspecError as exc:
        _logger.critical('%s', exc)
        return EXIT_INVALID
    except OSError as exc:
        _logger.critical('Cannot read or write files: %s', exc)
        return EXIT_INVALID
    summary['command'] = pargs.command
    write_json(ctx.path('summary.json'), summary)
    _logger.info('Wrote results to %s', ctx.out)
    return EXIT_OK


def run() -> None:
    """Calls :func:`main` passing the CLI arguments extracted from :obj:`sys.argv`.

    This function can be used as entry point to create console scripts with setuptools.
    """
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run()
