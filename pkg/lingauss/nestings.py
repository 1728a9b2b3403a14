"""Construction of nested domains by subset simulation.

The shifts γ₁ > γ₂ > … > γ_T = 0 define nested domains

    L_t = {x : minₘ(aₘᵀx + bₘ) + γ_t > 0}

each chosen such that a fraction ρ of the samples drawn from the previous
domain falls into the next. Level 0 samples N(0, 1) directly; each
subsequent level runs a LinESS chain seeded by the deepest sample of the
previous level inside the new domain (all other samples are discarded).

Subset simulation also yields the estimate

    log Ẑ_ss = (T − 1) log ρ + log ρ̂_T

which is *biased* (the same samples place the levels and measure them).
It is reported as such; use hdr to estimate Z.

"""
import hashlib
import logging
import math
import sys
import typing
from dataclasses import dataclass

import numpy as np
from descriptors import classonlymethod

from lingauss.exc import InfeasibleStateError, LevelLimitError, StallError
from lingauss.liness import ChainConfig, NESTING_THINNING, sample_chain
from lingauss.streams import SeedTree


logger = logging.getLogger(__name__)


DEFAULT_N_PER_LEVEL = 16

# maximizes the entropy of falling in- or outside the next domain
DEFAULT_RHO = 0.5

DEFAULT_MAX_LEVELS = 10_000

# shifts closer than this to their predecessor make no progress
STALL_ATOL = 1e-12


_frozen_dataclass = (
    dataclass(frozen=True,
              eq=False,
              slots=True)
    if sys.version_info >= (3, 10) else
    dataclass(frozen=True,
              eq=False)
)


class FoundShift(typing.NamedTuple):
    """Outcome of find_shift."""

    gamma: float
    rho_hat: float
    needed: np.ndarray


def target_count(rho, n):
    """⌊ρN⌋ (robust to the representation error of ρ)."""
    return math.floor(rho * n * (1 + 1e-12))


def find_shift(rho, samples, constraints, level=0):
    """Shift admitting a fraction rho of the samples.

    The needed shift of sample xₙ is γₙ = −minₘ(aₘᵀxₙ + bₘ). With k = ⌊ρN⌋
    (at most N − 1) the returned shift is the midpoint of the k-th and
    (k+1)-th smallest needed shifts, and rho_hat the realized fraction of
    samples inside (γₙ < γ), which differs from ρ only under ties.

    A shift ≤ 0 signals that the domain itself admits the fraction.

    """
    if not 0 < rho < 1:
        raise ValueError(f'rho must lie in (0, 1) not {rho!r}')

    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]

    if n < 2:
        raise ValueError(f'expected at least 2 samples not {n}')

    # at least one sample stays outside for the upper midpoint
    k = min(target_count(rho, n), n - 1)

    if k < 1:
        raise ValueError(f'rho={rho} of {n} samples admits none')

    needed = np.sort(-constraints.min_slack(samples))

    gamma = float((needed[k - 1] + needed[k]) / 2)

    inside = int(np.count_nonzero(needed < gamma))

    if inside == 0:
        raise StallError(level, f'all {k + 1} smallest needed shifts tie at {gamma!r}')

    return FoundShift(gamma, inside / n, needed)


@_frozen_dataclass
class ShiftSequence:
    """Decreasing shifts γ₁ > … > γ_T = 0 of the nested domains.

    Sequences built by subset simulation also carry each level's
    realized fraction, a feasible seed per level and the biased
    subset-simulation estimate of log Z (natural log). User-supplied
    sequences (from_gammas) carry the shifts alone.

    """
    gammas: tuple
    rho_hats: tuple = ()
    seeds: tuple = ()
    biased_log_z: float = None

    def __post_init__(self):
        gammas = tuple(float(gamma) for gamma in self.gammas)

        if not gammas:
            raise ValueError('shift sequence is empty')

        if gammas[-1] != 0:
            raise ValueError(f'shift sequence must end at 0 not {gammas[-1]!r}')

        if not all(math.isfinite(gamma) for gamma in gammas):
            raise ValueError('shifts must be finite')

        if any(later >= earlier for (earlier, later) in zip(gammas, gammas[1:])):
            raise ValueError(f'shifts must decrease strictly: {gammas!r}')

        rho_hats = tuple(float(rho_hat) for rho_hat in self.rho_hats)

        if rho_hats and len(rho_hats) != len(gammas):
            raise ValueError(f'expected {len(gammas)} fractions not {len(rho_hats)}')

        if not all(0 < rho_hat <= 1 for rho_hat in rho_hats):
            raise ValueError(f'fractions must lie in (0, 1]: {rho_hats!r}')

        seeds = tuple(np.array(seed, dtype=float) for seed in self.seeds)

        if seeds and len(seeds) != len(gammas):
            raise ValueError(f'expected {len(gammas)} seeds not {len(seeds)}')

        for seed in seeds:
            seed.flags.writeable = False

        object.__setattr__(self, 'gammas', gammas)
        object.__setattr__(self, 'rho_hats', rho_hats)
        object.__setattr__(self, 'seeds', seeds)

    @classonlymethod
    def from_gammas(cls, gammas):
        """User-supplied shifts, which must decrease strictly to 0."""
        return cls(tuple(gammas))

    @classonlymethod
    def from_mapping(cls, document):
        """Read the seq.json document written by to_mapping."""
        biased_log2_z = document.get('biased_log2_z')

        return cls(
            tuple(document['gammas']),
            tuple(document.get('rho_hats', ())),
            tuple(document.get('seeds', ())),
            None if biased_log2_z is None else biased_log2_z * math.log(2),
        )

    def to_mapping(self):
        return {
            'gammas': list(self.gammas),
            'rho_hats': list(self.rho_hats),
            'biased_log2_z': self.biased_log2_z,
            'seeds': [seed.tolist() for seed in self.seeds],
        }

    def __len__(self):
        return len(self.gammas)

    def __repr__(self):
        return f'<{self.__class__.__name__} T={len(self)}>'

    def __eq__(self, other):
        if not isinstance(other, ShiftSequence):
            return NotImplemented

        return (self.gammas == other.gammas
                and self.rho_hats == other.rho_hats
                and self.biased_log_z == other.biased_log_z
                and len(self.seeds) == len(other.seeds)
                and all(np.array_equal(s0, s1) for (s0, s1) in zip(self.seeds, other.seeds)))

    __hash__ = None

    @property
    def biased_log2_z(self):
        if self.biased_log_z is None:
            return None

        return self.biased_log_z / math.log(2)

    @property
    def fingerprint(self):
        return hashlib.sha256(np.array(self.gammas).tobytes()).hexdigest()

    def validate(self, constraints):
        """Check that every seed lies strictly inside its nested domain."""
        for (gamma, seed) in zip(self.gammas, self.seeds):
            min_slack = float(constraints.min_slack(seed))

            if not min_slack + gamma > 0:
                raise InfeasibleStateError(min_slack, gamma)


def _deepest(samples, min_slack):
    return samples[int(np.argmax(min_slack))].copy()


def build_sequence(constraints,
                   n_per_level=DEFAULT_N_PER_LEVEL,
                   rho=DEFAULT_RHO,
                   config=None,
                   *,
                   max_levels=DEFAULT_MAX_LEVELS):
    """Construct the ShiftSequence of constraints by subset simulation.

    Each level gathers n_per_level *kept* chain states (thinned by
    config.thinning, by default every 10th).

    Raises StallError if a level fails to decrease the shift and
    LevelLimitError once max_levels levels are exceeded.

    """
    if n_per_level < 2:
        raise ValueError(f'expected at least 2 samples per level not {n_per_level}')

    if config is None:
        config = ChainConfig(thinning=NESTING_THINNING)

    streams = SeedTree(config.seed).spawn('nestings')

    samples = streams.spawn(0).generator().standard_normal((n_per_level, constraints.dim))

    gammas = []
    rho_hats = []
    seeds = []

    for level in range(max_levels):
        found = find_shift(rho, samples, constraints, level)
        min_slack = constraints.min_slack(samples)

        if found.gamma <= 0:
            inside = int(np.count_nonzero(min_slack > 0))

            if inside == 0:
                raise StallError(level, 'no sample falls inside the domain at zero shift')

            gammas.append(0.0)
            rho_hats.append(inside / n_per_level)
            seeds.append(_deepest(samples, min_slack))

            break

        if gammas and not found.gamma < gammas[-1] - STALL_ATOL:
            raise StallError(level, f'shift {found.gamma!r} did not decrease '
                                    f'from {gammas[-1]!r}')

        gammas.append(found.gamma)
        rho_hats.append(found.rho_hat)

        seed = _deepest(samples, min_slack)
        seeds.append(seed)

        logger.debug('nesting %d: gamma=%.6g rho_hat=%.3g', level, found.gamma, found.rho_hat)

        samples = sample_chain(constraints, found.gamma, n_per_level, seed, config,
                               rng=streams.spawn(level + 1).generator())
    else:
        raise LevelLimitError(max_levels, f'last shift {gammas[-1]!r}')

    sequence = ShiftSequence(tuple(gammas),
                             tuple(rho_hats),
                             tuple(seeds),
                             float(sum(math.log(rho_hat) for rho_hat in rho_hats)))

    logger.info('built %d nestings (biased log2 Z = %.4f)',
                len(sequence), sequence.biased_log2_z)

    return sequence
