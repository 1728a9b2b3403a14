"""Linear domain constraints and the whitening of correlated Gaussians.

A domain L is given by M linear constraints over x in ℝ^D:

    ℓ(x) = ∏ₘ Θ(aₘᵀx + bₘ)

LinearConstraints stores the aₘᵀ as the *rows* of an M × D matrix (the
transpose of the column-wise D × M convention of the literature) because
every hot loop iterates over constraints computing aₘᵀx.

The nested domains of the estimators are shifts of L:

    L_γ = {x : minₘ(aₘᵀx + bₘ) + γ > 0}

"""
import logging
import sys
import typing
from dataclasses import dataclass

import numpy as np
from descriptors import classonlymethod
from scipy.linalg import solve_triangular

from lingauss.cache import cholesky, fingerprint
from lingauss.exc import DimensionError, ProblemError


logger = logging.getLogger(__name__)


#
# relative tolerance within which a covariance counts as symmetric
#
# (admits matrices round-tripped through decimal serialization)
#
SYMMETRY_RTOL = 1e-10


_frozen_dataclass = (
    dataclass(frozen=True,
              eq=False,
              slots=True)
    if sys.version_info >= (3, 10) else
    dataclass(frozen=True,
              eq=False)
)


def _frozen_array(value, ndim, name):
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemError(f'expected real array: {exc}', name) from None

    if array.ndim != ndim:
        raise DimensionError(f'expected {ndim}-d array not shape {array.shape}', name)

    if not np.isfinite(array).all():
        (index, *_rest) = np.argwhere(~np.isfinite(array))
        raise ProblemError('entries must be finite',
                           name + ''.join(f'[{i}]' for i in index))

    array.flags.writeable = False
    return array


class ShiftedMembership(typing.NamedTuple):
    """Outcome of evaluate_shifted."""

    min_slack: float
    inside: bool


@_frozen_dataclass
class LinearConstraints:
    """The pair (A, b) defining ℓ(x) = ∏ₘ Θ(aₘᵀx + bₘ).

    a_matrix: M × D, row m holding aₘᵀ
    b_vector: M offsets bₘ

    Zero rows are rejected: with bₘ > 0 they are vacuous and with bₘ ≤ 0
    they render the domain empty. Either way they signal a modeling error.

    Instances are immutable (their arrays are read-only) and may be
    shared freely across threads.

    """
    a_matrix: np.ndarray
    b_vector: np.ndarray

    def __post_init__(self):
        a_matrix = _frozen_array(self.a_matrix, 2, 'A')
        b_vector = _frozen_array(self.b_vector, 1, 'b')

        (n_constraints, dim) = a_matrix.shape

        if n_constraints < 1 or dim < 1:
            raise DimensionError(f'expected at least one constraint over at least one '
                                 f'dimension not shape {a_matrix.shape}', 'A')

        if b_vector.shape != (n_constraints,):
            raise DimensionError(f'expected {n_constraints} offsets not {b_vector.shape[0]}',
                                 'b')

        zero_rows = np.flatnonzero(~a_matrix.any(axis=1))
        if zero_rows.size:
            row = int(zero_rows[0])
            kind = 'vacuous' if b_vector[row] > 0 else 'infeasible'
            raise ProblemError(f'zero constraint row ({kind})', f'A[{row}]')

        object.__setattr__(self, 'a_matrix', a_matrix)
        object.__setattr__(self, 'b_vector', b_vector)

    @classonlymethod
    def orthant(cls, dim, offset=0.0):
        """Axis-aligned constraints x_d + offset > 0 for every d."""
        return cls(np.eye(dim), np.full(dim, float(offset)))

    @property
    def n_constraints(self):
        return self.a_matrix.shape[0]

    @property
    def dim(self):
        return self.a_matrix.shape[1]

    @property
    def fingerprint(self):
        return fingerprint(self.a_matrix, self.b_vector)

    def __repr__(self):
        return f'<{self.__class__.__name__} M={self.n_constraints} D={self.dim}>'

    def __eq__(self, other):
        if not isinstance(other, LinearConstraints):
            return NotImplemented

        return (np.array_equal(self.a_matrix, other.a_matrix)
                and np.array_equal(self.b_vector, other.b_vector))

    def __hash__(self):
        return hash(self.fingerprint)

    def _check_points_(self, x):
        x = np.asarray(x, dtype=float)

        if x.ndim not in (1, 2) or x.shape[-1] != self.dim:
            raise DimensionError(f'expected point(s) of dimension {self.dim} '
                                 f'not shape {x.shape}', 'x')

        return x

    def slack(self, x):
        """aₘᵀx + bₘ for every constraint.

        Accepts a single point (D,) -> (M,) or a batch (N, D) -> (N, M).

        """
        x = self._check_points_(x)
        return x @ self.a_matrix.T + self.b_vector

    def min_slack(self, x):
        """minₘ(aₘᵀx + bₘ) of a point, or per point of a batch.

        Its negation is the shift *needed* to admit the point.

        """
        return self.slack(x).min(axis=-1)

    def evaluate_shifted(self, x, gamma=0.0):
        """Membership of x in L_γ.

        Returns the minimal slack minₘ(aₘᵀx + bₘ), which permits testing
        any shift without re-evaluation, together with whether
        min_slack + gamma > 0.

        """
        if not gamma >= 0:
            raise ValueError(f'shift must be non-negative not {gamma!r}')

        x = self._check_points_(x)

        if x.ndim != 1:
            raise DimensionError(f'expected a single point not shape {x.shape}', 'x')

        min_slack = float(self.min_slack(x))

        return ShiftedMembership(min_slack, min_slack + gamma > 0)

    def shifted(self, gamma):
        """Constraints of the nested domain L_γ (offsets b + γ)."""
        return self.__class__(self.a_matrix, self.b_vector + gamma)


evaluate_shifted = LinearConstraints.evaluate_shifted


@_frozen_dataclass
class AffineTransform:
    """The map u ↦ L·u + μ from the whitened to the original space.

    factor: lower-triangular L (None for identity)
    shift: μ (None for zero)

    """
    dim: int
    factor: np.ndarray = None
    shift: np.ndarray = None

    @property
    def is_identity(self):
        return self.factor is None and self.shift is None

    def linear(self, u):
        """L·u (the centered image x − μ) for a point or a batch."""
        x = np.array(u, dtype=float)

        if self.factor is not None:
            x = x @ self.factor.T

        return x

    def forward(self, u):
        """x = L·u + μ for a point (D,) or a batch (N, D)."""
        x = self.linear(u)

        if self.shift is not None:
            x = x + self.shift

        return x

    def inverse(self, x):
        """u = L⁻¹(x − μ) for a point (D,) or a batch (N, D)."""
        u = np.array(x, dtype=float)

        if self.shift is not None:
            u = u - self.shift

        if self.factor is not None:
            u = solve_triangular(self.factor, u.T, lower=True).T

        return u


@_frozen_dataclass
class WhitenedProblem:
    """Standard-normal form of a GaussianProblem."""

    constraints: LinearConstraints
    transform: AffineTransform


@_frozen_dataclass
class GaussianProblem:
    """Mass of N(μ, Σ) inside the domain given by constraints over the
    original (correlated) variable.

    mean absent ⇒ zero; covariance absent ⇒ identity.

    """
    dim: int
    constraints: LinearConstraints
    mean: np.ndarray = None
    covariance: np.ndarray = None

    def __post_init__(self):
        if isinstance(self.dim, bool) or not isinstance(self.dim, (int, np.integer)):
            raise ProblemError(f'dimension must be an integer not {self.dim!r}', 'dim')

        if self.dim < 1:
            raise ProblemError(f'dimension must be positive not {self.dim}', 'dim')

        object.__setattr__(self, 'dim', int(self.dim))

        if self.constraints.dim != self.dim:
            raise DimensionError(f'constraints over {self.constraints.dim} dimensions '
                                 f'in problem of dimension {self.dim}', 'A')

        if self.mean is not None:
            mean = _frozen_array(self.mean, 1, 'mean')

            if mean.shape != (self.dim,):
                raise DimensionError(f'expected {self.dim} entries not {mean.shape[0]}', 'mean')

            object.__setattr__(self, 'mean', mean)

        if self.covariance is not None:
            covariance = _frozen_array(self.covariance, 2, 'cov')

            if covariance.shape != (self.dim, self.dim):
                raise DimensionError(f'expected {self.dim}x{self.dim} matrix '
                                     f'not {covariance.shape}', 'cov')

            scale = np.abs(covariance).max()
            asymmetry = np.abs(covariance - covariance.T).max()

            if asymmetry > SYMMETRY_RTOL * scale:
                raise ProblemError(f'matrix is not symmetric (max deviation {asymmetry:.3g})',
                                   'cov')

            object.__setattr__(self, 'covariance', covariance)

    @classonlymethod
    def from_mapping(cls, document):
        """Construct from the problem document's keys: dim, A, b and
        optionally mean and cov.

        """
        constraints = LinearConstraints(document['A'], document['b'])

        return cls(document['dim'],
                   constraints,
                   document.get('mean'),
                   document.get('cov'))

    def to_mapping(self):
        document = {
            'dim': self.dim,
            'A': self.constraints.a_matrix.tolist(),
            'b': self.constraints.b_vector.tolist(),
        }

        if self.mean is not None:
            document['mean'] = self.mean.tolist()

        if self.covariance is not None:
            document['cov'] = self.covariance.tolist()

        return document

    @property
    def fingerprint(self):
        arrays = [self.constraints.a_matrix, self.constraints.b_vector]

        for optional in (self.mean, self.covariance):
            arrays.append(np.empty(0) if optional is None else optional)

        return fingerprint(*arrays)

    def whiten(self):
        return whiten(self)


def whiten(problem):
    """Reduce a GaussianProblem to linear constraints over u ~ N(0, 1).

    With x = L·u + μ, L the lower Cholesky factor of Σ:

        aₘᵀx + bₘ = (Lᵀaₘ)ᵀu + (aₘᵀμ + bₘ)

    Any square root of Σ yields the same probability; the Cholesky factor
    is cheapest to apply and deterministic.

    """
    constraints = problem.constraints

    factor = None if problem.covariance is None else cholesky(problem.covariance)

    transform = AffineTransform(problem.dim, factor, problem.mean)

    if transform.is_identity:
        return WhitenedProblem(constraints, transform)

    a_matrix = constraints.a_matrix
    b_vector = constraints.b_vector

    if factor is not None:
        a_matrix = a_matrix @ factor

    if problem.mean is not None:
        b_vector = b_vector + constraints.a_matrix @ problem.mean

    logger.debug('whitened problem with %d constraints in %d dimensions',
                 constraints.n_constraints, problem.dim)

    return WhitenedProblem(LinearConstraints(a_matrix, b_vector), transform)

