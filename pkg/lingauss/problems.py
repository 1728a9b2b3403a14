"""Benchmark problems with known (or symmetric) solutions."""
import math

import numpy as np
from scipy.special import log_ndtr

from lingauss.constraints import GaussianProblem, LinearConstraints
from lingauss.derivatives import pmin_problem
from lingauss.streams import SeedTree


LN2 = math.log(2)


def shifted_orthant(dim, offset=1.0):
    """x_d + offset > 0 for all d; mass Φ(offset)^dim under N(0, 1)."""
    return LinearConstraints.orthant(dim, offset)


def halfspace(beta, dim=1):
    """x₁ > beta; mass Φ(−beta) under N(0, 1)."""
    a_matrix = np.zeros((1, dim))
    a_matrix[0, 0] = 1.0

    return LinearConstraints(a_matrix, [-float(beta)])


def quadrant():
    """Positive quadrant of the plane; mass 1/4 under N(0, 1)."""
    return LinearConstraints.orthant(2, 0.0)


def random_covariance(dim, seed=0):
    """Random symmetric positive-definite matrix of unit-order diagonal:
    (1 + GGᵀ/dim) / 2 with G standard normal.

    """
    rng = SeedTree(seed).spawn('covariance', dim).generator()
    factor = rng.standard_normal((dim, dim))

    covariance = (np.eye(dim) + factor @ factor.T / dim) / 2

    return (covariance + covariance.T) / 2


def random_correlated_orthant(dim, seed=0, offset=1.0):
    """Shifted orthant of a zero-mean Gaussian of random covariance."""
    return GaussianProblem(dim,
                           LinearConstraints.orthant(dim, offset),
                           np.zeros(dim),
                           random_covariance(dim, seed))


def exchangeable_pmin(n_r, offset=0.0, correlation=0.0, i=1):
    """p_min problem of representer i among n_r exchangeable representers,
    representer i's mean raised by offset.

    With offset 0 every representer is the minimum with probability 1/n_r.

    """
    mu = np.zeros(n_r)
    mu[i - 1] = offset

    sigma = (1 - correlation) * np.eye(n_r) + correlation * np.ones((n_r, n_r))

    return pmin_problem(i, mu, sigma)


#
# exact log₂ masses (under N(0, 1)) where known
#

def shifted_orthant_log2_mass(dim, offset=1.0):
    return dim * float(log_ndtr(offset)) / LN2


def halfspace_log2_mass(beta, dim=1):
    return float(log_ndtr(-beta)) / LN2


def quadrant_log2_mass():
    return -2.0


REFERENCES = {
    'shifted_orthant': shifted_orthant_log2_mass,
    'halfspace': halfspace_log2_mass,
    'quadrant': quadrant_log2_mass,
}

BUILDERS = {
    'shifted_orthant': shifted_orthant,
    'halfspace': halfspace,
    'quadrant': quadrant,
    'random_correlated_orthant': random_correlated_orthant,
    'exchangeable_pmin': exchangeable_pmin,
}


def build(name, **arguments):
    """Problem (constraints or GaussianProblem) of the named builder."""
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ValueError(f'unknown problem builder {name!r}') from None

    return builder(**arguments)


def reference_log2_mass(name, **arguments):
    """Exact log₂ mass of the named problem or None where unknown."""
    try:
        reference = REFERENCES[name]
    except KeyError:
        return None

    return reference(**arguments)
