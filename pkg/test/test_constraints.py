import math

import numpy as np
import pytest
from scipy.stats import norm

from lingauss.cache import FactorCache
from lingauss.constraints import (
    AffineTransform,
    GaussianProblem,
    LinearConstraints,
    evaluate_shifted,
    whiten,
)
from lingauss.exc import CholeskyError, DimensionError, ProblemError
from lingauss.hdr import integrate


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def halfline():
    return LinearConstraints([[1.0]], [0.0])


def test_evaluate_shifted_inside(halfline):
    assert evaluate_shifted(halfline, [2.0], 0.0) == (2.0, True)


def test_evaluate_shifted_outside(halfline):
    (min_slack, inside) = evaluate_shifted(halfline, [-1.0], 0.5)

    assert min_slack == -1.0
    assert not inside


def test_evaluate_shifted_orthant():
    constraints = LinearConstraints.orthant(2, 1.0)

    (min_slack, inside) = constraints.evaluate_shifted([-0.5, -0.2])

    assert min_slack == pytest.approx(0.5)
    assert inside


def test_evaluate_shifted_errors(halfline):
    with pytest.raises(DimensionError):
        halfline.evaluate_shifted([1.0, 2.0])

    with pytest.raises(ValueError):
        halfline.evaluate_shifted([1.0], -0.1)


def test_evaluate_shifted_monotone(rng):
    constraints = LinearConstraints(rng.standard_normal((5, 3)), rng.standard_normal(5))

    for x in rng.standard_normal((100, 3)):
        (min_slack, inside) = constraints.evaluate_shifted(x, 0.0)

        # the slack suffices to test any shift
        for gamma in (0.1, 1.0, 10.0):
            assert constraints.evaluate_shifted(x, gamma).inside == (min_slack + gamma > 0)

            if inside:
                assert constraints.evaluate_shifted(x, gamma).inside


def test_evaluate_shifted_pure(rng):
    constraints = LinearConstraints(rng.standard_normal((4, 4)), rng.standard_normal(4))
    x = rng.standard_normal(4)

    (first, second) = (constraints.evaluate_shifted(x, 0.3), constraints.evaluate_shifted(x, 0.3))

    assert first.min_slack.hex() == second.min_slack.hex()
    assert first.inside == second.inside


def test_slack_batch(rng):
    constraints = LinearConstraints(rng.standard_normal((3, 2)), rng.standard_normal(3))
    points = rng.standard_normal((7, 2))

    slack = constraints.slack(points)

    assert slack.shape == (7, 3)
    assert np.allclose(slack[4], constraints.slack(points[4]))
    assert np.allclose(constraints.min_slack(points), slack.min(axis=1))


def test_shifted():
    constraints = LinearConstraints.orthant(2, 1.0).shifted(0.5)

    assert np.array_equal(constraints.b_vector, [1.5, 1.5])


def test_zero_row():
    with pytest.raises(ProblemError) as info:
        LinearConstraints([[1.0, 0.0], [0.0, 0.0]], [0.0, 1.0])

    assert info.value.field == 'A[1]'
    assert 'vacuous' in info.value.message

    with pytest.raises(ProblemError, match='infeasible'):
        LinearConstraints([[0.0, 0.0]], [-1.0])


def test_non_finite():
    with pytest.raises(ProblemError) as info:
        LinearConstraints([[1.0, 0.0], [math.nan, 1.0]], [0.0, 0.0])

    assert info.value.field == 'A[1][0]'

    with pytest.raises(ProblemError) as info:
        LinearConstraints([[1.0]], [math.inf])

    assert info.value.field == 'b[0]'


def test_shapes():
    with pytest.raises(DimensionError):
        LinearConstraints(np.empty((0, 2)), [])

    with pytest.raises(DimensionError):
        LinearConstraints([[1.0, 0.0]], [0.0, 0.0])

    with pytest.raises(DimensionError):
        GaussianProblem(3, LinearConstraints.orthant(2))

    with pytest.raises(DimensionError):
        GaussianProblem(2, LinearConstraints.orthant(2), mean=[0.0])

    with pytest.raises(ProblemError):
        GaussianProblem(0, LinearConstraints.orthant(1))


def test_immutable():
    constraints = LinearConstraints.orthant(2)

    with pytest.raises(ValueError):
        constraints.a_matrix[0, 0] = 2.0

    with pytest.raises(AttributeError):
        constraints.b_vector = np.ones(2)


def test_equality():
    assert LinearConstraints.orthant(2, 1.0) == LinearConstraints(np.eye(2), [1.0, 1.0])
    assert LinearConstraints.orthant(2, 1.0) != LinearConstraints.orthant(2, 0.0)

    assert len({LinearConstraints.orthant(2), LinearConstraints.orthant(2)}) == 1


def test_asymmetric_covariance():
    with pytest.raises(ProblemError) as info:
        GaussianProblem(2, LinearConstraints.orthant(2), covariance=[[1.0, 0.5], [0.4, 1.0]])

    assert info.value.field == 'cov'

    # admits round-trip serialization error
    GaussianProblem(2, LinearConstraints.orthant(2),
                    covariance=[[1.0, 0.5], [0.5 * (1 + 1e-14), 1.0]])


def test_whiten_identity():
    constraints = LinearConstraints.orthant(3, 1.0)

    whitened = whiten(GaussianProblem(3, constraints))

    assert whitened.constraints is constraints
    assert whitened.transform.is_identity


def test_whiten_univariate():
    problem = GaussianProblem(1, LinearConstraints([[1.0]], [0.0]), [3.0], [[4.0]])

    whitened = problem.whiten()

    assert np.allclose(whitened.constraints.a_matrix, [[2.0]])
    assert np.allclose(whitened.constraints.b_vector, [3.0])

    integral = integrate(whitened.constraints, 2048, seed=1, repeats=4)

    assert math.exp(integral.estimate.mean_log_z) == pytest.approx(norm.cdf(1.5), rel=0.05)


def test_whiten_diagonal():
    problem = GaussianProblem(2,
                              LinearConstraints(np.eye(2), [0.5, -0.25]),
                              covariance=np.diag([4.0, 9.0]))

    whitened = whiten(problem)

    assert np.allclose(whitened.constraints.a_matrix, np.diag([2.0, 3.0]))
    assert np.allclose(whitened.constraints.b_vector, [0.5, -0.25])


def test_whiten_membership(rng):
    root = rng.standard_normal((4, 4))
    covariance = root @ root.T + np.eye(4)

    problem = GaussianProblem(4,
                              LinearConstraints(rng.standard_normal((6, 4)),
                                                rng.standard_normal(6)),
                              rng.standard_normal(4),
                              covariance)

    whitened = whiten(problem)

    u = rng.standard_normal((1000, 4))
    x = whitened.transform.forward(u)

    original = problem.constraints.min_slack(x)
    reduced = whitened.constraints.min_slack(u)

    assert np.allclose(original, reduced, rtol=0, atol=1e-9)

    clear = np.abs(original) > 1e-9
    assert np.array_equal((original > 0)[clear], (reduced > 0)[clear])

    assert np.allclose(whitened.transform.inverse(x), u)


def test_transform_batch():
    transform = AffineTransform(2, np.array([[2.0, 0.0], [1.0, 1.0]]), np.array([1.0, -1.0]))

    assert np.allclose(transform.forward([1.0, 1.0]), [3.0, 1.0])
    assert np.allclose(transform.forward([[1.0, 1.0], [0.0, 0.0]]), [[3.0, 1.0], [1.0, -1.0]])
    assert np.allclose(transform.inverse([3.0, 1.0]), [1.0, 1.0])


def test_whiten_not_positive_definite(monkeypatch):
    monkeypatch.setattr('lingauss.cache.factors', FactorCache())

    problem = GaussianProblem(3,
                              LinearConstraints.orthant(3),
                              covariance=[[1.0, 0.0, 0.0],
                                          [0.0, 1.0, 2.0],
                                          [0.0, 2.0, 1.0]])

    with pytest.raises(CholeskyError) as info:
        whiten(problem)

    assert info.value.minor == 3


def test_mapping():
    problem = GaussianProblem.from_mapping({
        'dim': 2,
        'A': [[1, 0], [0, 1]],
        'b': [0, 0],
        'mean': [0.5, 0.5],
    })

    assert problem.covariance is None
    assert problem.to_mapping() == {
        'dim': 2,
        'A': [[1.0, 0.0], [0.0, 1.0]],
        'b': [0.0, 0.0],
        'mean': [0.5, 0.5],
    }

    assert GaussianProblem.from_mapping(problem.to_mapping()).fingerprint == problem.fingerprint
