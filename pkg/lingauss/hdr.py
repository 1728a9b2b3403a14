"""Holmes–Diaconis–Ross estimation of log Z over nested domains.

Given shifts γ₁ > … > γ_T = 0, Z factors into conditional probabilities

    Z = ∏_t P(L_t | L_{t−1}),    L₀ = ℝ^D

each estimated by the fraction ρ̂_t of N samples from L_{t−1} falling
into L_t. The estimate is accumulated in log space,

    log Ẑ = Σ_t log ρ̂_t

so that masses far below the smallest double (Z ≈ 10⁻³⁸ is routine)
remain representable.

"""
import concurrent.futures
import logging
import math
import sys
import typing
from dataclasses import dataclass

import numpy as np

from lingauss.exc import EstimationError, NumericalError, ZeroCountError
from lingauss.liness import ChainConfig, HDR_THINNING, NESTING_THINNING, sample_chain
from lingauss.nestings import DEFAULT_N_PER_LEVEL, DEFAULT_RHO, build_sequence
from lingauss.streams import SeedTree


logger = logging.getLogger(__name__)


DEFAULT_SAMPLES_PER_NESTING = 512

LN2 = math.log(2)


_frozen_dataclass = (
    dataclass(frozen=True,
              slots=True)
    if sys.version_info >= (3, 10) else
    dataclass(frozen=True)
)


@_frozen_dataclass
class LogZEstimate:
    """Per-nesting log conditional probabilities (natural log) and their
    sum log Ẑ.

    counts: (inside, total) per nesting
    config_echo: the run's parameters (samples per nesting, seed, run
                 index, thinning, delta_theta, sequence fingerprint)

    """
    log_rho_hats: tuple
    counts: tuple
    log_z: float
    config_echo: dict

    @property
    def log2_z(self):
        return self.log_z / LN2

    @property
    def rho_hats(self):
        return tuple(inside / total for (inside, total) in self.counts)

    @property
    def z(self):
        """Ẑ itself, 0.0 where it underflows."""
        return math.exp(self.log_z)

    @property
    def z_underflow(self):
        return self.z == 0.0

    def to_mapping(self):
        return {
            'log_z': self.log_z,
            'log2_z': self.log2_z,
            'z': self.z,
            'z_underflow': self.z_underflow,
            'log_rho_hats': list(self.log_rho_hats),
            'rho_hats': list(self.rho_hats),
            'counts': [list(count) for count in self.counts],
            'config': dict(self.config_echo),
        }


def estimate_log_z(constraints, sequence, n=DEFAULT_SAMPLES_PER_NESTING, config=None, *, run=0):
    """Estimate log Z of constraints over the given ShiftSequence.

    Nesting 1 counts n i.i.d. N(0, 1) samples inside L₁. Each subsequent
    nesting t runs a chain in L_{t−1} (thinned, by default every 2nd
    state), seeded by the deepest sample of nesting t − 1 inside L_{t−1},
    and counts its n kept states inside L_t. The seed itself is never
    among the counted states.

    run selects an independent stream of config.seed (see
    estimate_log_z_repeated).

    Raises ZeroCountError where no sample falls into the next domain:
    clamping would silently bias log Z.

    """
    if n < 2:
        raise ValueError(f'expected at least 2 samples per nesting not {n}')

    if config is None:
        config = ChainConfig(thinning=HDR_THINNING)

    streams = SeedTree(config.seed).spawn('hdr', run)

    samples = streams.spawn(0).generator().standard_normal((n, constraints.dim))

    log_rho_hats = []
    counts = []

    min_slack = None
    previous = None

    for (level, gamma) in enumerate(sequence.gammas):
        if level:
            seed = samples[int(np.argmax(min_slack))]

            samples = sample_chain(constraints, previous, n, seed, config,
                                   rng=streams.spawn(level).generator())

        min_slack = constraints.min_slack(samples)

        inside = int(np.count_nonzero(min_slack + gamma > 0))

        if inside == 0:
            raise ZeroCountError(level + 1, n)

        log_rho_hats.append(math.log(inside) - math.log(n))
        counts.append((inside, n))

        previous = gamma

    log_z = sum(log_rho_hats)

    estimate = LogZEstimate(
        tuple(log_rho_hats),
        tuple(counts),
        log_z,
        {
            'samples_per_nesting': n,
            'seed': config.seed,
            'run': run,
            'thinning': config.thinning,
            'delta_theta': config.delta_theta,
            'sequence': sequence.fingerprint,
        },
    )

    logger.debug('run %d: log2 Z = %.4f over %d nestings', run, estimate.log2_z, len(counts))

    return estimate


@_frozen_dataclass
class RepeatedLogZ:
    """Statistics of independent HDR runs.

    stddev_log2_z is None where fewer than two runs succeeded.
    failures: (run index, diagnostic) of every excluded run

    """
    mean_log2_z: float
    stddev_log2_z: typing.Optional[float]
    per_run: tuple
    failures: tuple = ()

    @property
    def excluded(self):
        return len(self.failures)

    @property
    def mean_log_z(self):
        return self.mean_log2_z * LN2

    def to_mapping(self):
        return {
            'mean_log2_z': self.mean_log2_z,
            'stddev_log2_z': self.stddev_log2_z,
            'excluded': self.excluded,
            'failures': [{'run': run, 'error': error} for (run, error) in self.failures],
            'runs': [estimate.to_mapping() for estimate in self.per_run],
        }


def estimate_log_z_repeated(constraints,
                            sequence,
                            n=DEFAULT_SAMPLES_PER_NESTING,
                            config=None,
                            repeats=1,
                            *,
                            max_workers=1):
    """Run estimate_log_z repeats times on independent streams.

    Run r draws from stream r of config.seed, so results are independent
    of scheduling (and of repeats: run 0 is always the single run).
    Runs may execute concurrently on up to max_workers threads.

    Failed runs are excluded and recorded; EstimationError is raised
    only if every run fails.

    """
    if repeats < 1:
        raise ValueError(f'expected at least 1 repeat not {repeats}')

    def attempt(run):
        try:
            return estimate_log_z(constraints, sequence, n, config, run=run)
        except NumericalError as exc:
            return exc

    if max_workers == 1:
        outcomes = [attempt(run) for run in range(repeats)]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers) as pool:
            outcomes = list(pool.map(attempt, range(repeats)))

    per_run = []
    failures = []

    for (run, outcome) in enumerate(outcomes):
        if isinstance(outcome, NumericalError):
            logger.warning('run %d excluded: %s', run, outcome)
            failures.append((run, str(outcome)))
        else:
            per_run.append(outcome)

    if not per_run:
        raise EstimationError(failures)

    log2s = np.array([estimate.log2_z for estimate in per_run])

    result = RepeatedLogZ(
        float(log2s.mean()),
        float(log2s.std(ddof=1)) if log2s.size > 1 else None,
        tuple(per_run),
        tuple(failures),
    )

    logger.info('log2 Z = %.4f over %d runs (%d excluded)',
                result.mean_log2_z, len(per_run), result.excluded)

    return result


class Integral(typing.NamedTuple):
    """Outcome of integrate."""

    sequence: object
    estimate: RepeatedLogZ


def integrate(constraints,
              n=DEFAULT_SAMPLES_PER_NESTING,
              *,
              n_per_level=DEFAULT_N_PER_LEVEL,
              rho=DEFAULT_RHO,
              seed=0,
              repeats=1,
              sequence=None,
              max_workers=1):
    """Build nestings (unless a sequence is given) and estimate log Z."""
    if sequence is None:
        sequence = build_sequence(constraints, n_per_level, rho,
                                  ChainConfig(thinning=NESTING_THINNING, seed=seed))

    estimate = estimate_log_z_repeated(constraints, sequence, n,
                                       ChainConfig(thinning=HDR_THINNING, seed=seed),
                                       repeats, max_workers=max_workers)

    return Integral(sequence, estimate)
