"""Rejection-free elliptical slice sampling of linearly constrained
standard normals.

Given a state x₀ inside the domain and an auxiliary ν ~ N(0, 1), the
ellipse

    x(θ) = x₀ cos θ + ν sin θ

meets each hyperplane aₘᵀx + b̃ₘ = 0 in closed form:

    aₘᵀx₀ cos θ + aₘᵀν sin θ + b̃ₘ = r cos(θ − φ) + b̃ₘ = 0

with r = |(aₘᵀx₀, aₘᵀν)| and φ its polar angle. The angular brackets
on which every constraint holds are assembled from those roots at which
the domain indicator actually switches, and the next state is drawn
uniformly from them: no proposal is ever rejected.

Angles are normalized to [0, 2π). A bracket wrapping through 2π is a
single Bracket whose start exceeds its end.

"""
import dataclasses
import logging
import math
import sys
import typing
from dataclasses import dataclass

import numpy as np

from lingauss.exc import DimensionError, InfeasibleStateError
from lingauss.streams import SeedTree


logger = logging.getLogger(__name__)


TWO_PI = 2.0 * math.pi

DEFAULT_DELTA_THETA = 1e-7

#
# thinning of chains constructing nestings and of chains estimating
# conditional probabilities (HDR)
#
NESTING_THINNING = 10
HDR_THINNING = 2

#
# |b̃ₘ| within this (relative) distance of r is a tangent: no crossing
#
TANGENT_RTOL = 1e-12


_frozen_dataclass = (
    dataclass(frozen=True,
              slots=True)
    if sys.version_info >= (3, 10) else
    dataclass(frozen=True)
)


@_frozen_dataclass
class ChainConfig:
    """Chain parameters.

    thinning: keep every k-th chain state
    delta_theta: angular offset probing the domain indicator on either
                 side of an intersection
    seed: 64-bit seed of the chain's stream

    """
    thinning: int = 1
    delta_theta: float = DEFAULT_DELTA_THETA
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.thinning, bool) or not isinstance(self.thinning, (int, np.integer)):
            raise TypeError(f'thinning must be an integer not {self.thinning!r}')

        if self.thinning < 1:
            raise ValueError(f'thinning must be at least 1 not {self.thinning}')

        if not 0 < self.delta_theta < 1e-3:
            raise ValueError(f'delta_theta must lie in (0, 1e-3) not {self.delta_theta!r}')

        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f'seed must be a 64-bit unsigned integer not {self.seed!r}')

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


class Intersection(typing.NamedTuple):
    """The two angles at which the ellipse crosses constraint m."""

    index: int
    theta1: float
    theta2: float


class TaggedAngle(typing.NamedTuple):

    theta: float
    index: int


class Bracket(typing.NamedTuple):
    """Angular interval [start, end] on which every constraint holds.

    start > end denotes an interval wrapping through 2π.

    """
    start: float
    end: float

    @property
    def length(self):
        if self.end > self.start:
            return self.end - self.start

        return self.end + TWO_PI - self.start

    def contains(self, theta):
        theta = theta % TWO_PI

        if self.start <= self.end:
            return self.start <= theta <= self.end

        return theta >= self.start or theta <= self.end

    def midpoint(self):
        return (self.start + self.length / 2) % TWO_PI


FULL_CIRCLE = Bracket(0.0, TWO_PI)


#
# geometry
#
# the helpers below operate on projections of x₀ (g0 = Ax₀) and of
# ν (g1 = Aν) and on effective offsets (b̃ = b + γ), such that the
# chain may maintain its projections by recurrence
#

def _roots(g0, g1, offsets):
    """Indices of crossing constraints and their two roots each (k, 2)."""
    radius = np.hypot(g0, g1)

    crossing = np.flatnonzero(radius - np.abs(offsets) > TANGENT_RTOL * radius)

    phase = np.arctan2(g1[crossing], g0[crossing])
    half = np.arccos(-offsets[crossing] / radius[crossing])

    thetas = np.mod(np.stack((phase - half, phase + half), axis=1), TWO_PI)

    # np.mod may round tiny negative angles up to 2π itself
    thetas[thetas >= TWO_PI] = 0.0

    return (crossing, thetas)


def _inside(thetas, g0, g1, offsets):
    slack = np.outer(np.cos(thetas), g0) + np.outer(np.sin(thetas), g1) + offsets
    return (slack > 0).all(axis=1)


def _brackets_by_jumps(angles, g0, g1, offsets, delta_theta):
    """Brackets from the roots at which ℓ(x(θ ± δ)) jumps.

    Returns None if the jumps do not alternate, deferring to
    _brackets_by_arcs.

    """
    before = _inside(angles - delta_theta, g0, g1, offsets)
    after = _inside(angles + delta_theta, g0, g1, offsets)

    active = before != after

    if not active.any():
        # the domain contains the full ellipse
        return (FULL_CIRCLE,)

    ends = angles[active]
    rising = after[active]

    if ends.size % 2 or (rising[1:] == rising[:-1]).any():
        return None

    if not rising[0]:
        # first jump switches off: the first bracket wraps
        ends = np.roll(ends, 1)

    return tuple(Bracket(float(start), float(end))
                 for (start, end) in zip(ends[::2], ends[1::2]))


def _brackets_by_arcs(angles, g0, g1, offsets):
    """Brackets from ℓ evaluated at the midpoint of every arc between
    consecutive roots.

    """
    bounds = np.append(angles, angles[0] + TWO_PI)
    inside = _inside((bounds[:-1] + bounds[1:]) / 2, g0, g1, offsets)

    if inside.all():
        return (FULL_CIRCLE,)

    count = angles.size
    first_out = int(np.argmin(inside))

    brackets = []
    run_start = None

    for step in range(1, count + 1):
        arc = (first_out + step) % count

        if inside[arc]:
            if run_start is None:
                run_start = arc
        elif run_start is not None:
            brackets.append(Bracket(float(angles[run_start]), float(angles[arc])))
            run_start = None

    return tuple(brackets)


def _brackets(g0, g1, offsets, delta_theta):
    (crossing, thetas) = _roots(g0, g1, offsets)

    if not crossing.size:
        return (FULL_CIRCLE,)

    #
    # constraints which do not cross the ellipse hold on all of it
    # (they hold at θ = 0) and so never switch ℓ: restrict to the rest
    #
    g0 = g0[crossing]
    g1 = g1[crossing]
    offsets = offsets[crossing]

    angles = np.sort(thetas.ravel())
    gaps = np.diff(angles, append=angles[0] + TWO_PI)

    if gaps.min() > 2 * delta_theta:
        brackets = _brackets_by_jumps(angles, g0, g1, offsets, delta_theta)

        if brackets is not None:
            return brackets

    return _brackets_by_arcs(angles, g0, g1, offsets)


def _angle_at(brackets, u):
    """Map u in [0, total length) onto the brackets (in order, each
    allotted its length).

    """
    for bracket in brackets:
        length = bracket.length

        if u < length:
            return (bracket.start + u) % TWO_PI

        u -= length

    # u rounded past the total length: stay clear of the boundary
    return brackets[-1].midpoint()


def _check_state(constraints, x0):
    x0 = np.array(x0, dtype=float)

    if x0.shape != (constraints.dim,):
        raise DimensionError(f'expected state of dimension {constraints.dim} '
                             f'not shape {x0.shape}', 'x0')

    return x0


def _require_inside(g0, offsets, b_vector, gamma):
    if not (g0 + offsets).min() > 0:
        raise InfeasibleStateError(float((g0 + b_vector).min()), gamma)


#
# operations
#

def intersection_angles(constraints, x0, nu, gamma=0.0):
    """Angles at which the ellipse x₀ cos θ + ν sin θ crosses each
    shifted constraint.

    Constraints of constant sign on the ellipse (no crossing, a tangent,
    or vanishing projections of both x₀ and ν) are omitted.

    """
    x0 = _check_state(constraints, x0)
    nu = _check_state(constraints, nu)

    g0 = constraints.a_matrix @ x0
    g1 = constraints.a_matrix @ nu

    (crossing, thetas) = _roots(g0, g1, constraints.b_vector + gamma)

    return [Intersection(int(index), float(theta1), float(theta2))
            for (index, (theta1, theta2)) in zip(crossing, thetas)]


@_frozen_dataclass
class EllipseSlice:
    """Geometry of one chain step."""

    x0: np.ndarray
    nu: np.ndarray
    intersections: tuple
    brackets: tuple

    @property
    def total_length(self):
        return sum(bracket.length for bracket in self.brackets)

    def point(self, theta):
        return self.x0 * math.cos(theta) + self.nu * math.sin(theta)

    def angle_at(self, u):
        """Angle for u in [0, total_length): uniform u yields θ uniform
        over the brackets.

        """
        return _angle_at(self.brackets, u)


def slice_ellipse(constraints, x0, nu, gamma=0.0, delta_theta=DEFAULT_DELTA_THETA):
    """Construct the EllipseSlice through x0 (feasible at gamma) and nu."""
    x0 = _check_state(constraints, x0)
    nu = _check_state(constraints, nu)

    offsets = constraints.b_vector + gamma

    g0 = constraints.a_matrix @ x0
    g1 = constraints.a_matrix @ nu

    _require_inside(g0, offsets, constraints.b_vector, gamma)

    (crossing, thetas) = _roots(g0, g1, offsets)

    intersections = sorted(
        TaggedAngle(float(theta), int(index))
        for (index, pair) in zip(crossing, thetas)
        for theta in pair
    )

    return EllipseSlice(x0, nu, tuple(intersections), _brackets(g0, g1, offsets, delta_theta))


def active_brackets(constraints, x0, nu, gamma=0.0, delta_theta=DEFAULT_DELTA_THETA):
    """Angular intervals of the ellipse through x0 and nu lying inside the
    domain shifted by gamma.

    x0 must be strictly feasible at gamma.

    """
    return list(slice_ellipse(constraints, x0, nu, gamma, delta_theta).brackets)


class LinESS:
    """Elliptical slice sampler for N(0, 1) restricted to a (shifted)
    linearly constrained domain.

    A chain is a sequential, stateful object. Independent chains (with
    independent generators) may run concurrently over shared constraints.

    The projections Aᵀx of the state are carried along by the recurrence

        Ax(θ) = Ax₀ cos θ + Aν sin θ

    such that a step costs a single product with A (that of ν).

    """
    __slots__ = ('constraints', 'gamma', 'config', 'state', 'steps',
                 '_offsets_', '_projection_', '_rng_')

    def __init__(self, constraints, x0, gamma=0.0, config=None, rng=None):
        self.constraints = constraints
        self.gamma = gamma
        self.config = ChainConfig() if config is None else config

        self.state = _check_state(constraints, x0)
        self.steps = 0

        self._offsets_ = constraints.b_vector + gamma
        self._projection_ = self._project_(self.state)

        _require_inside(self._projection_, self._offsets_, constraints.b_vector, gamma)

        self._rng_ = SeedTree(self.config.seed).generator() if rng is None else rng

    def __repr__(self):
        return (f'<{self.__class__.__name__} over {self.constraints!r} '
                f'gamma={self.gamma!r} steps={self.steps}>')

    def _project_(self, vector):
        return self.constraints.a_matrix @ vector

    def step(self):
        """Advance the chain by a single ellipse and return the new state."""
        nu = self._rng_.standard_normal(self.constraints.dim)
        projection = self._project_(nu)

        brackets = _brackets(self._projection_, projection, self._offsets_,
                             self.config.delta_theta)

        total = sum(bracket.length for bracket in brackets)
        theta = _angle_at(brackets, self._rng_.uniform(0.0, total))

        (cos, sin) = (math.cos(theta), math.sin(theta))

        self.state = self.state * cos + nu * sin
        self._projection_ = self._projection_ * cos + projection * sin

        self.steps += 1

        return self.state

    def sample(self, n):
        """Collect n states, keeping every config.thinning-th."""
        samples = np.empty((n, self.constraints.dim))

        for index in range(n):
            for _ in range(self.config.thinning):
                self.step()

            samples[index] = self.state

        logger.debug('chain at gamma=%.6g drew %d states (%d steps)',
                     self.gamma, n, self.steps)

        return samples


def sample_chain(constraints, gamma, n, x0, config=None, rng=None):
    """n thinned chain states inside the domain shifted by gamma, starting
    from the feasible x0.

    The generator defaults to the stream of config.seed.

    """
    return LinESS(constraints, x0, gamma, config, rng).sample(n)
