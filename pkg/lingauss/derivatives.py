"""Derivatives of constrained Gaussian probabilities by moments.

For Z(μ, Σ) = ∫ N(f; μ, Σ) ℓ(f) df, derivatives w.r.t. the parameters are
expectations under the integrand:

    ∂Z/∂λ = ∫ ∂N/∂λ ℓ(f) df = Z · E[∂ log N(f; μ, Σ)/∂λ]

the latter expectation under the *normalized* truncated density, which
is exactly what LinESS samples. The 1/Z prefactor of ∂ log Z/∂λ thus
cancels, and

    ∂ log Z/∂μ     = Σ⁻¹ E[f − μ]
    ∂ log Z/∂Σ     = ½ (Σ⁻¹ E[(f − μ)(f − μ)ᵀ] Σ⁻¹ − Σ⁻¹)
    ∂² log Z/∂μ∂μᵀ = 2 ∂ log Z/∂Σ − (∂ log Z/∂μ)(∂ log Z/∂μ)ᵀ

Ẑ is needed only for the unnormalized ∂Z/∂λ.

The probability that representer point i is the minimizer of a Gaussian
vector f ~ N(μ, Σ) over n_r representers,

    p_min(i) = ∫ N(f; μ, Σ) ∏_{j≠i} Θ(f_j − f_i) df

is such a constrained probability (see pmin_problem).

"""
import functools
import logging
import math
import sys
from dataclasses import dataclass

import numpy as np
from descriptors import classonlymethod
from scipy.linalg import cho_solve

from lingauss.cache import cholesky
from lingauss.constraints import GaussianProblem, LinearConstraints, whiten
from lingauss.exc import DimensionError
from lingauss.hdr import DEFAULT_SAMPLES_PER_NESTING, integrate
from lingauss.liness import ChainConfig, HDR_THINNING, sample_chain
from lingauss.nestings import DEFAULT_N_PER_LEVEL, DEFAULT_RHO
from lingauss.streams import SeedTree


logger = logging.getLogger(__name__)


DEFAULT_MOMENT_SAMPLES = 100_000

# batches of the batch-means standard error (per chain)
DEFAULT_BATCHES = 20

# covariances worse conditioned than this are flagged
CONDITION_LIMIT = 1e12


_frozen_dataclass = (
    dataclass(frozen=True,
              eq=False,
              slots=True)
    if sys.version_info >= (3, 10) else
    dataclass(frozen=True,
              eq=False)
)


#
# probability of minimum
#

def pmin_constraint_matrix(i, n_r):
    """(n_r − 1) × n_r matrix M with (Mf)_j = f_j − f_i for j ≠ i.

    Representers are indexed 1, …, n_r. Rows follow j ascending, skipping
    i; Mf > 0 component-wise iff f_i is the strict minimum.

    """
    if n_r < 2:
        raise ValueError(f'expected at least 2 representers not {n_r}')

    if not 1 <= i <= n_r:
        raise IndexError(f'representer index {i} out of range 1..{n_r}')

    matrix = np.delete(np.eye(n_r), i - 1, axis=0)
    matrix[:, i - 1] = -1.0

    return matrix


def pmin_problem(i, mu, sigma):
    """GaussianProblem whose probability is p_min of representer i."""
    mu = np.asarray(mu, dtype=float)
    n_r = mu.shape[0]

    constraints = LinearConstraints(pmin_constraint_matrix(i, n_r), np.zeros(n_r - 1))

    return GaussianProblem(n_r, constraints, mu, sigma)


def pmin_to_standard(i, n_r, mu, sigma):
    """Constraints over u ~ N(0, 1) of p_min(i): rows of M·L (L the
    Cholesky factor of sigma) and offsets M·μ.

    """
    if np.shape(mu) != (n_r,):
        raise DimensionError(f'expected {n_r} means not shape {np.shape(mu)}', 'mean')

    return whiten(pmin_problem(i, mu, sigma)).constraints


#
# moments
#

@_frozen_dataclass
class MomentEstimates:
    """Moments of f − μ under the truncated density.

    first_moment: E[f − μ]
    second_moment: E[(f − μ)(f − μ)ᵀ], symmetrized
    batch_first_moments: E[f − μ] per contiguous batch of the chain(s),
                         for batch-means standard errors
    log_p_hat: log Ẑ of the constrained mass where known

    """
    first_moment: np.ndarray
    second_moment: np.ndarray
    n_samples: int
    batch_first_moments: np.ndarray
    log_p_hat: float = None

    @classonlymethod
    def from_samples(cls, centered, batches=DEFAULT_BATCHES, log_p_hat=None):
        """Moments of the (N, D) centered samples f − μ."""
        n_samples = centered.shape[0]

        second = centered.T @ centered / n_samples

        return cls(
            centered.mean(axis=0),
            (second + second.T) / 2,
            n_samples,
            np.array([batch.mean(axis=0)
                      for batch in np.array_split(centered, min(batches, n_samples))]),
            log_p_hat,
        )

    @property
    def p_hat(self):
        return None if self.log_p_hat is None else math.exp(self.log_p_hat)

    def combine(self, other):
        """Moments of the union of both sample sets.

        Associative up to floating point; reduce in a fixed order for
        reproducible results.

        """
        total = self.n_samples + other.n_samples

        (w0, w1) = (self.n_samples / total, other.n_samples / total)

        second = w0 * self.second_moment + w1 * other.second_moment

        return self.__class__(
            w0 * self.first_moment + w1 * other.first_moment,
            (second + second.T) / 2,
            total,
            np.concatenate((self.batch_first_moments, other.batch_first_moments)),
            self.log_p_hat if self.log_p_hat is not None else other.log_p_hat,
        )


def estimate_moments(constraints,
                     transform,
                     n=DEFAULT_MOMENT_SAMPLES,
                     config=None,
                     seed_point=None,
                     *,
                     chains=1,
                     batches=DEFAULT_BATCHES,
                     log_p_hat=None):
    """Estimate MomentEstimates of f = L·u + μ from chains over the
    whitened constraints (u-space), started at the feasible seed_point.

    n samples are split over independent chains (streams of config.seed),
    whose moments are combined in chain order.

    """
    if seed_point is None:
        raise ValueError('a feasible seed point is required (see nestings.build_sequence)')

    if n < chains:
        raise ValueError(f'expected at least one sample per chain not {n} for {chains}')

    if config is None:
        config = ChainConfig(thinning=HDR_THINNING)

    streams = SeedTree(config.seed).spawn('moments')

    parts = []

    for (chain, count) in enumerate(len(part) for part in np.array_split(np.arange(n), chains)):
        samples = sample_chain(constraints, 0.0, count, seed_point, config,
                               rng=streams.spawn(chain).generator())

        parts.append(MomentEstimates.from_samples(transform.linear(samples), batches, log_p_hat))

    moments = functools.reduce(MomentEstimates.combine, parts)

    logger.debug('estimated moments from %d samples over %d chains', n, chains)

    return moments


#
# gradients
#

@_frozen_dataclass
class GradientEstimate:
    """Derivatives of log Z w.r.t. μ and Σ.

    stderr_d_mu: batch-means standard error of d_mu
    warnings: diagnostics, e.g. an ill-conditioned Σ
    dz_dmu, dz_dsigma: unnormalized derivatives of Z (where Ẑ is known)

    """
    d_mu: np.ndarray
    d_sigma: np.ndarray
    hessian_mu: np.ndarray
    stderr_d_mu: np.ndarray
    log_p_hat: float = None
    warnings: tuple = ()

    @property
    def dz_dmu(self):
        if self.log_p_hat is None:
            return None

        return math.exp(self.log_p_hat) * self.d_mu

    @property
    def dz_dsigma(self):
        if self.log_p_hat is None:
            return None

        return math.exp(self.log_p_hat) * self.d_sigma

    def to_mapping(self):
        return {
            'p_hat_log': self.log_p_hat,
            'd_mu': self.d_mu.tolist(),
            'd_sigma': self.d_sigma.tolist(),
            'hessian_mu': self.hessian_mu.tolist(),
            'stderr_d_mu': self.stderr_d_mu.tolist(),
            'warnings': list(self.warnings),
        }


def grad_log_pmin(moments, mu, sigma):
    """Gradient of log Z w.r.t. μ and Σ and its Hessian w.r.t. μ from
    moments estimated at the same (μ, Σ).

    Σ⁻¹ is applied by triangular solves with the Cholesky factor, never
    formed by inversion.

    """
    sigma = np.asarray(sigma, dtype=float)
    dim = sigma.shape[0]

    if np.shape(mu) != (dim,) or moments.first_moment.shape != (dim,):
        raise DimensionError(f'expected mean and moments of dimension {dim}', 'mean')

    factor = (cholesky(sigma), True)

    def solve(rhs):
        return cho_solve(factor, rhs)

    warnings = []

    condition = np.linalg.cond(sigma)

    if condition > CONDITION_LIMIT:
        message = f'covariance is ill-conditioned (condition number {condition:.3g})'
        logger.warning(message)
        warnings.append(message)

    d_mu = solve(moments.first_moment)

    precision = solve(np.eye(dim))
    precision = (precision + precision.T) / 2

    # Σ⁻¹ S Σ⁻¹ (S symmetric)
    inner = solve(solve(moments.second_moment).T)

    d_sigma = (inner - precision) / 2
    d_sigma = (d_sigma + d_sigma.T) / 2

    hessian_mu = 2 * d_sigma - np.outer(d_mu, d_mu)

    batch_d_mu = solve(moments.batch_first_moments.T).T
    n_batches = batch_d_mu.shape[0]

    if n_batches > 1:
        stderr_d_mu = batch_d_mu.std(axis=0, ddof=1) / math.sqrt(n_batches)
    else:
        stderr_d_mu = np.full(dim, np.nan)

    return GradientEstimate(d_mu, d_sigma, hessian_mu, stderr_d_mu,
                            moments.log_p_hat, tuple(warnings))


def gradient(problem,
             n=DEFAULT_MOMENT_SAMPLES,
             *,
             seed=0,
             n_per_level=DEFAULT_N_PER_LEVEL,
             rho=DEFAULT_RHO,
             samples_per_nesting=DEFAULT_SAMPLES_PER_NESTING,
             chains=1):
    """Estimate log Z of the (correlated) problem and its derivatives.

    Nestings over the whitened constraints supply the chain's seed point
    and HDR supplies Ẑ.

    """
    whitened = whiten(problem)

    integral = integrate(whitened.constraints, samples_per_nesting,
                         n_per_level=n_per_level, rho=rho, seed=seed)

    moments = estimate_moments(whitened.constraints,
                               whitened.transform,
                               n,
                               ChainConfig(thinning=HDR_THINNING, seed=seed),
                               integral.sequence.seeds[-1],
                               chains=chains,
                               log_p_hat=integral.estimate.mean_log_z)

    mean = np.zeros(problem.dim) if problem.mean is None else problem.mean
    covariance = np.eye(problem.dim) if problem.covariance is None else problem.covariance

    return grad_log_pmin(moments, mean, covariance)
