"""lingauss: Gaussian probabilities of linearly constrained domains.

Subcommands:

    integrate   estimate log Z of a problem file (nestings, then HDR)
    nestings    construct the nested domains by subset simulation
    sample      draw from the truncated Gaussian by LinESS
    gradient    derivatives of log Z w.r.t. the problem's mean and covariance
    repro       run a preset experiment (see `repro --list`)

Exit status is 0 on success, 1 on a usage or problem error, and 2 on a
numerical failure (stall, zero count, Cholesky).

"""
import argparse
import itertools
import json
import logging
import math
import os
import pathlib
import sys
import time
import typing
from dataclasses import dataclass

import numpy as np
import yaml
from cachetools import LRUCache
from descriptors import classonlymethod

from lingauss import io, problems
from lingauss.__about__ import __version__
from lingauss.constraints import GaussianProblem, whiten
from lingauss.derivatives import DEFAULT_MOMENT_SAMPLES, gradient
from lingauss.exc import NumericalError, ProblemError
from lingauss.hdr import DEFAULT_SAMPLES_PER_NESTING, integrate
from lingauss.liness import (
    ChainConfig,
    DEFAULT_DELTA_THETA,
    HDR_THINNING,
    NESTING_THINNING,
    sample_chain,
)
from lingauss.nestings import DEFAULT_N_PER_LEVEL, DEFAULT_RHO, build_sequence
from lingauss.streams import SeedTree


logger = logging.getLogger(__name__)


THREADS_ENV = 'LINGAUSS_THREADS'

PRESETS_PATH = pathlib.Path(__file__).with_name('presets.yaml')


#
# reports
#

@dataclass
class RunReport:
    """Document written by every subcommand: the subcommand's results
    together with its provenance.

    Timings are None where omitted (--no-timing), so that fixed-seed
    reports are bit-identical across runs.

    """
    subcommand: str
    config: dict
    results: dict
    problem_fingerprint: typing.Optional[str] = None
    wall_seconds: typing.Optional[float] = None
    cpu_seconds: typing.Optional[float] = None
    version: str = __version__

    PROVENANCE = ('subcommand', 'problem_fingerprint', 'config', 'version',
                  'wall_seconds', 'cpu_seconds')

    @classonlymethod
    def from_mapping(cls, document):
        results = {key: value for (key, value) in document.items()
                   if key not in cls.PROVENANCE}

        return cls(
            document['subcommand'],
            document['config'],
            results,
            document.get('problem_fingerprint'),
            document.get('wall_seconds'),
            document.get('cpu_seconds'),
            document['version'],
        )

    def to_mapping(self):
        document = dict(self.results)

        document.update(
            subcommand=self.subcommand,
            problem_fingerprint=self.problem_fingerprint,
            config=self.config,
            version=self.version,
        )

        if self.wall_seconds is not None:
            document['wall_seconds'] = self.wall_seconds

        if self.cpu_seconds is not None:
            document['cpu_seconds'] = self.cpu_seconds

        return document


class Stopwatch:
    """Wall and CPU seconds of a block."""

    def __enter__(self):
        self._wall_ = time.perf_counter()
        self._cpu_ = time.process_time()

        self.wall_seconds = self.cpu_seconds = None

        return self

    def __exit__(self, *exc_info):
        self.wall_seconds = time.perf_counter() - self._wall_
        self.cpu_seconds = time.process_time() - self._cpu_


def _report(args, results, config, problem_fingerprint=None, watch=None):
    timed = watch is not None and not args.no_timing

    return RunReport(
        args.subcommand,
        dict(_defaults(args), **config),
        results,
        problem_fingerprint,
        watch.wall_seconds if timed else None,
        watch.cpu_seconds if timed else None,
    )


def _defaults(args):
    return {
        'seed': args.seed,
        'threads': args.threads,
        'nesting_thinning': NESTING_THINNING,
        'hdr_thinning': HDR_THINNING,
        'delta_theta': DEFAULT_DELTA_THETA,
    }


def _write_report(path, report):
    io.write_json(path, report.to_mapping())

    if str(path) != '-':
        logger.info('wrote %s', path)


#
# logging
#

class JsonFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record):
        document = {
            'time': self.formatTime(record),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
        }

        if record.exc_info:
            document['exc_info'] = self.formatException(record.exc_info)

        return json.dumps(document)


_handler = None


def configure_logging(quiet=False, json_logs=False, stream=None):
    """Install the (single) stderr handler of the package's loggers."""
    global _handler

    package_logger = logging.getLogger('lingauss')

    if _handler is not None:
        package_logger.removeHandler(_handler)

    _handler = logging.StreamHandler(sys.stderr if stream is None else stream)

    _handler.setFormatter(JsonFormatter() if json_logs
                          else logging.Formatter('%(levelname)s %(name)s: %(message)s'))

    package_logger.addHandler(_handler)
    package_logger.setLevel(logging.WARNING if quiet else logging.INFO)

    return _handler


#
# subcommands
#

def _load(args):
    problem = io.load_problem(args.problem)

    return (problem, whiten(problem), io.file_fingerprint(args.problem))


def run_integrate(args):
    (problem, whitened, problem_fingerprint) = _load(args)

    if args.nestings is None:
        sequence = None
    else:
        sequence = io.load_sequence(args.nestings)
        sequence.validate(whitened.constraints)

    with Stopwatch() as watch:
        integral = integrate(whitened.constraints,
                             args.samples_per_nesting,
                             n_per_level=args.nesting_samples,
                             rho=args.rho,
                             seed=args.seed,
                             repeats=args.repeats,
                             sequence=sequence,
                             max_workers=args.threads)

    estimate = integral.estimate
    z = math.exp(estimate.mean_log_z)

    results = {
        'log_z': estimate.mean_log_z,
        'log2_z': estimate.mean_log2_z,
        'z': z,
        'z_underflow': z == 0.0,
        'stddev_log2_z': estimate.stddev_log2_z,
        'rho_hats': list(estimate.per_run[0].rho_hats),
        'gammas': list(integral.sequence.gammas),
        'excluded': estimate.excluded,
        'failures': estimate.to_mapping()['failures'],
        'runs': [run.to_mapping() for run in estimate.per_run],
    }

    if sequence is None:
        results['nestings'] = integral.sequence.to_mapping()

    config = {
        'samples_per_nesting': args.samples_per_nesting,
        'n_per_level': args.nesting_samples,
        'rho': args.rho,
        'repeats': args.repeats,
        'nestings': None if args.nestings is None else io.file_fingerprint(args.nestings),
    }

    logger.info('log2 Z = %.6g (Z = %.6g) over %d nestings',
                estimate.mean_log2_z, z, len(integral.sequence))

    _write_report(args.output, _report(args, results, config, problem_fingerprint, watch))


def run_nestings(args):
    (_problem, whitened, problem_fingerprint) = _load(args)

    with Stopwatch() as watch:
        sequence = build_sequence(whitened.constraints,
                                  args.nesting_samples,
                                  args.rho,
                                  ChainConfig(thinning=NESTING_THINNING, seed=args.seed))

    config = {'n_per_level': args.nesting_samples, 'rho': args.rho}

    _write_report(args.output,
                  _report(args, sequence.to_mapping(), config, problem_fingerprint, watch))


def run_sample(args):
    (problem, whitened, problem_fingerprint) = _load(args)

    with Stopwatch() as watch:
        if args.x0 is None:
            sequence = build_sequence(whitened.constraints,
                                      args.nesting_samples,
                                      args.rho,
                                      ChainConfig(thinning=NESTING_THINNING, seed=args.seed))

            # feasible at zero shift, hence at any non-negative shift
            u0 = sequence.seeds[-1]
        else:
            u0 = whitened.transform.inverse(np.array(io.parse_point(args.x0, problem.dim)))

        config = ChainConfig(thinning=args.thinning, seed=args.seed)

        samples = sample_chain(whitened.constraints, args.gamma, args.n, u0, config,
                               rng=SeedTree(args.seed).spawn('sample').generator())

    io.write_samples(args.output, whitened.transform.forward(samples))

    logger.info('drew %d samples in %d dimensions', args.n, problem.dim)

    if args.report is not None:
        config = {
            'n': args.n,
            'gamma': args.gamma,
            'thinning': args.thinning,
            'x0': args.x0,
            'n_per_level': args.nesting_samples,
            'rho': args.rho,
        }

        _write_report(args.report,
                      _report(args, {'samples': str(args.output)}, config,
                              problem_fingerprint, watch))


def run_gradient(args):
    (problem, _whitened, problem_fingerprint) = _load(args)

    for (value, key) in ((problem.mean, 'mean'), (problem.covariance, 'cov')):
        if value is None:
            raise ProblemError('gradients require the problem to specify "mean" and "cov"',
                               key)

    with Stopwatch() as watch:
        estimate = gradient(problem,
                            args.n,
                            seed=args.seed,
                            n_per_level=args.nesting_samples,
                            rho=args.rho,
                            samples_per_nesting=args.samples_per_nesting,
                            chains=args.chains)

    for warning in estimate.warnings:
        logger.warning(warning)

    config = {
        'n': args.n,
        'chains': args.chains,
        'samples_per_nesting': args.samples_per_nesting,
        'n_per_level': args.nesting_samples,
        'rho': args.rho,
    }

    _write_report(args.output,
                  _report(args, estimate.to_mapping(), config, problem_fingerprint, watch))


#
# repro
#

def load_presets(path=PRESETS_PATH):
    with open(path, encoding='utf-8') as stream:
        return yaml.safe_load(stream)


def _sweep(preset):
    """(swept values, builder, builder arguments, pipeline parameters) per
    row group of the preset.

    A sweep is one parameter or a list of them; a list spans their grid,
    the last parameter varying fastest.

    """
    arguments = dict(preset['problem'])
    builder = arguments.pop('builder')

    parameters = {
        'samples_per_nesting': preset.get('samples_per_nesting', DEFAULT_SAMPLES_PER_NESTING),
        'n_per_level': preset.get('n_per_level', DEFAULT_N_PER_LEVEL),
        'rho': preset.get('rho', DEFAULT_RHO),
    }

    sweeps = _sweep_parameters(preset)

    for values in itertools.product(*(sweep['values'] for sweep in sweeps)):
        point = {sweep['parameter']: value for (sweep, value) in zip(sweeps, values)}

        yield (point,
               builder,
               dict(arguments, **{name: value for (name, value) in point.items()
                                  if name in arguments}),
               dict(parameters, **{name: value for (name, value) in point.items()
                                   if name not in arguments}))


def _sweep_parameters(preset):
    sweep = preset.get('sweep')

    if sweep is None:
        return []

    if isinstance(sweep, dict):
        return [sweep]

    return list(sweep)


class _SequenceCache:
    """Nestings of repro rows, shared by rows differing only in HDR
    parameters.

    """
    __slots__ = ('sequences',)

    def __init__(self, maxsize=64):
        self.sequences = LRUCache(maxsize=maxsize)

    def get(self, constraints, parameters, seed):
        key = (id(constraints), parameters['n_per_level'], parameters['rho'], seed)

        try:
            return self.sequences[key]
        except KeyError:
            pass

        sequence = build_sequence(constraints,
                                  parameters['n_per_level'],
                                  parameters['rho'],
                                  ChainConfig(thinning=NESTING_THINNING, seed=seed))

        self.sequences[key] = sequence

        return sequence


def _repro_row(stage, constraints, parameters, seed, threads, cache=None):
    sequence = (cache or _SequenceCache(1)).get(constraints, parameters, seed)

    if stage == 'nestings':
        return {'nestings': len(sequence), 'biased_log2_z': sequence.biased_log2_z}

    integral = integrate(constraints,
                         parameters['samples_per_nesting'],
                         seed=seed,
                         sequence=sequence,
                         max_workers=threads)

    return {
        'nestings': len(sequence),
        'biased_log2_z': sequence.biased_log2_z,
        'log2_z': integral.estimate.mean_log2_z,
        'rho_hats': list(integral.estimate.per_run[0].rho_hats),
    }


def _summarize(rows, key):
    values = np.array([row[key] for row in rows if key in row])

    if values.size == 0:
        return {'mean': None, 'stddev': None, 'count': 0}

    return {
        'mean': float(values.mean()),
        'stddev': float(values.std(ddof=1)) if values.size > 1 else None,
        'count': int(values.size),
    }


def _summarize_levels(rows):
    """Per-level mean of the conditional probabilities over rows (levels
    missing from shorter sequences are skipped).

    """
    columns = [row['rho_hats'] for row in rows if 'rho_hats' in row]

    depth = max((len(rho_hats) for rho_hats in columns), default=0)

    return [float(np.mean([rho_hats[level] for rho_hats in columns if len(rho_hats) > level]))
            for level in range(depth)]


def _format(value):
    if value is None:
        return '-'

    if isinstance(value, float):
        return f'{value:.4f}'

    return str(value)


def run_repro(args):
    presets = load_presets()

    if args.list or args.preset is None:
        for (name, preset) in presets.items():
            print(f'{name:<14} {preset.get("description", "")}')

        return

    preset = presets[args.preset]
    stage = preset.get('stage', 'integrate')
    seeds = preset['seeds'] if args.seeds is None else list(range(args.seeds))
    names = tuple(sweep['parameter'] for sweep in _sweep_parameters(preset))

    columns = ('nestings', 'biased_log2_z') if stage == 'nestings' else ('nestings', 'log2_z')

    print('\t'.join((names or ('preset',)) + ('seed',) + columns + ('reference_log2_z',)))

    def label(point):
        return tuple(point.values()) if names else (args.preset,)

    groups = []
    rows = []
    cache = _SequenceCache()

    with Stopwatch() as watch:
        built = {}

        for (point, builder, arguments, parameters) in _sweep(preset):
            key = json.dumps(arguments, sort_keys=True)

            if key not in built:
                problem = problems.build(builder, **arguments)
                constraints = (problem.whiten().constraints if isinstance(problem, GaussianProblem)
                               else problem)
                built[key] = (constraints, problems.reference_log2_mass(builder, **arguments))

            (constraints, reference) = built[key]

            group = []

            for seed in seeds:
                row = dict(point, seed=seed, reference_log2_z=reference)

                try:
                    row.update(_repro_row(stage, constraints, parameters, seed, args.threads,
                                          cache))
                except NumericalError as exc:
                    logger.warning('%s seed %d: %s',
                                   ' '.join(_format(entry) for entry in label(point)), seed, exc)
                    row['error'] = str(exc)

                print('\t'.join(_format(entry) for entry in
                                label(point) + (seed,)
                                + tuple(row.get(column) for column in columns)
                                + (reference,)))

                group.append(row)

            summary = dict(point,
                           reference_log2_z=reference,
                           nestings=_summarize(group, 'nestings'),
                           **{columns[1]: _summarize(group, columns[1])})

            if stage == 'integrate':
                summary['rho_hats'] = _summarize_levels(group)

            groups.append(summary)

            rows.extend(group)

    for summary in groups:
        point = {name: summary[name] for name in names}

        logger.info('%s: mean %s = %s (stddev %s) against %s',
                    ' '.join(f'{name}={_format(value)}' for (name, value) in point.items())
                    or args.preset,
                    columns[1],
                    _format(summary[columns[1]]['mean']),
                    _format(summary[columns[1]]['stddev']),
                    _format(summary['reference_log2_z']))

    if args.output is not None:
        config = dict(preset, preset=args.preset, seeds=seeds)

        _write_report(args.output,
                      _report(args, {'rows': rows, 'summary': groups}, config, watch=watch))


#
# command line
#

class ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser reporting usage errors with exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f'{self.prog}: error: {message}\n')


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid integer: {text!r}') from None

    if value < 1:
        raise argparse.ArgumentTypeError(f'expected a positive integer not {value}')

    return value


def _non_negative_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid number: {text!r}') from None

    if not value >= 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f'expected a non-negative number not {text}')

    return value


def _fraction(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid number: {text!r}') from None

    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f'expected a fraction in (0, 1) not {text}')

    return value


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid seed: {text!r}') from None

    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f'seed out of range: {value}')

    return value


def build_parser():
    common = ArgumentParser(add_help=False)

    common.add_argument('--quiet', action='store_true',
                        help='log warnings and errors only')
    common.add_argument('--json-logs', action='store_true',
                        help='log one JSON object per record')
    common.add_argument('--threads', type=_positive_int,
                        help=f'worker threads of repeated runs (default: ${THREADS_ENV} or 1)')
    common.add_argument('--no-timing', action='store_true',
                        help='omit timings from reports (bit-identical results)')
    common.add_argument('--seed', type=_seed, default=0,
                        help='master seed (default: %(default)s)')

    nesting = ArgumentParser(add_help=False)

    nesting.add_argument('--nesting-samples', '--n-per-level', dest='nesting_samples',
                         type=_positive_int, default=DEFAULT_N_PER_LEVEL,
                         help='kept samples per nesting level (default: %(default)s)')
    nesting.add_argument('--rho', type=_fraction, default=DEFAULT_RHO,
                         help='conditional probability targeted per nesting '
                              '(default: %(default)s)')

    problem = ArgumentParser(add_help=False)

    problem.add_argument('--problem', required=True, type=pathlib.Path,
                         help='problem file (JSON, or YAML by suffix)')

    parser = ArgumentParser(prog='lingauss', description=__doc__.split('\n\n')[0])

    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    subparsers = parser.add_subparsers(dest='subcommand', required=True, metavar='SUBCOMMAND')

    integrate_parser = subparsers.add_parser('integrate', parents=[common, problem, nesting],
                                             help='estimate log Z of a problem')
    integrate_parser.add_argument('--nestings', type=pathlib.Path,
                                  help='nestings file (default: built by subset simulation)')
    integrate_parser.add_argument('--samples-per-nesting', type=_positive_int,
                                  default=DEFAULT_SAMPLES_PER_NESTING,
                                  help='HDR samples per nesting (default: %(default)s)')
    integrate_parser.add_argument('--repeats', type=_positive_int, default=1,
                                  help='independent HDR runs (default: %(default)s)')
    integrate_parser.add_argument('--output', default='-',
                                  help='result file (default: stdout)')
    integrate_parser.set_defaults(func=run_integrate)

    nestings_parser = subparsers.add_parser('nestings', parents=[common, problem, nesting],
                                            help='construct nested domains')
    nestings_parser.add_argument('--n', dest='nesting_samples', type=_positive_int,
                                 default=DEFAULT_N_PER_LEVEL,
                                 help='kept samples per nesting level (default: %(default)s)')
    nestings_parser.add_argument('--output', default='-',
                                 help='nestings file (default: stdout)')
    nestings_parser.set_defaults(func=run_nestings)

    sample_parser = subparsers.add_parser('sample', parents=[common, problem, nesting],
                                          help='sample the truncated Gaussian')
    sample_parser.add_argument('--n', type=_positive_int, required=True,
                               help='number of samples')
    sample_parser.add_argument('--gamma', type=_non_negative_float, default=0.0,
                               help='shift of the domain (default: %(default)s)')
    sample_parser.add_argument('--x0',
                               help='comma-separated feasible start (default: found by nestings)')
    sample_parser.add_argument('--thinning', type=_positive_int, default=1,
                               help='keep every n-th state (default: %(default)s)')
    sample_parser.add_argument('--output', default='-',
                               help='samples CSV (default: stdout)')
    sample_parser.add_argument('--report',
                               help='also write a run report to this file')
    sample_parser.set_defaults(func=run_sample)

    gradient_parser = subparsers.add_parser('gradient', parents=[common, problem, nesting],
                                            help='derivatives of log Z w.r.t. mean and cov')
    gradient_parser.add_argument('--n', type=_positive_int, default=DEFAULT_MOMENT_SAMPLES,
                                 help='moment samples (default: %(default)s)')
    gradient_parser.add_argument('--chains', type=_positive_int, default=1,
                                 help='independent moment chains (default: %(default)s)')
    gradient_parser.add_argument('--samples-per-nesting', type=_positive_int,
                                 default=DEFAULT_SAMPLES_PER_NESTING,
                                 help='HDR samples per nesting (default: %(default)s)')
    gradient_parser.add_argument('--output', default='-',
                                 help='gradient file (default: stdout)')
    gradient_parser.set_defaults(func=run_gradient)

    repro_parser = subparsers.add_parser('repro', parents=[common],
                                         help='run a preset experiment')
    repro_parser.add_argument('preset', nargs='?', choices=tuple(load_presets()),
                              help='preset name')
    repro_parser.add_argument('--list', action='store_true',
                              help='list the presets')
    repro_parser.add_argument('--seeds', type=_positive_int,
                              help='use seeds 0..N-1 (default: those of the preset)')
    repro_parser.add_argument('--output',
                              help='also write a report to this file')
    repro_parser.set_defaults(func=run_repro)

    return parser


def _default_threads(parser):
    text = os.environ.get(THREADS_ENV)

    if text is None:
        return 1

    try:
        return _positive_int(text)
    except argparse.ArgumentTypeError as exc:
        parser.error(f'{THREADS_ENV}: {exc}')


def main(argv=None):
    parser = build_parser()

    try:
        args = parser.parse_args(argv)

        if args.threads is None:
            args.threads = _default_threads(parser)
    except SystemExit as exc:
        return exc.code

    configure_logging(args.quiet, args.json_logs)

    try:
        args.func(args)
    except NumericalError as exc:
        logger.error('%s', exc)
        return 2
    except ValueError as exc:
        # ProblemError, InfeasibleStateError and invalid parameters
        logger.error('%s', exc)
        return 1
    except OSError as exc:
        logger.error('%s', exc)
        return 1

    return 0
