import math

import numpy as np
import pytest
from scipy.stats import norm

from lingauss.constraints import LinearConstraints
from lingauss.exc import EstimationError, ZeroCountError
from lingauss.hdr import (
    LogZEstimate,
    estimate_log_z,
    estimate_log_z_repeated,
    integrate,
)
from lingauss.liness import ChainConfig, HDR_THINNING, NESTING_THINNING
from lingauss.nestings import ShiftSequence, build_sequence
from lingauss.problems import halfspace, shifted_orthant

from .util.oracles import log2_phi


def config(seed):
    return ChainConfig(thinning=HDR_THINNING, seed=seed)


def test_vacuous():
    constraints = LinearConstraints.orthant(2, 1e6)

    estimate = estimate_log_z(constraints, ShiftSequence.from_gammas([0.0]), 256, config(0))

    assert estimate.log_z == 0.0
    assert estimate.z == 1.0
    assert estimate.counts == ((256, 256),)


def test_halfspace_three():
    integral = integrate(halfspace(3.0), 1024, seed=3)

    expected = norm.logcdf(-3.0)

    assert integral.estimate.mean_log_z == pytest.approx(expected, rel=0.2)


def test_halfspace_one_repeated():
    integral = integrate(halfspace(1.0), 1024, seed=1, repeats=10)

    estimate = integral.estimate

    assert estimate.mean_log2_z == pytest.approx(log2_phi(-1.0), abs=0.2)
    assert estimate.stddev_log2_z > 0
    assert len(estimate.per_run) == 10
    assert estimate.excluded == 0


def test_single_repeat():
    integral = integrate(halfspace(1.0), 64, seed=0)

    assert integral.estimate.stddev_log2_z is None
    assert integral.estimate.to_mapping()['stddev_log2_z'] is None


def test_sum_of_parts():
    constraints = shifted_orthant(10)

    sequence = build_sequence(constraints, 16, 0.5, ChainConfig(thinning=NESTING_THINNING))

    estimate = estimate_log_z(constraints, sequence, 128, config(0))

    assert len(estimate.log_rho_hats) == len(sequence)
    assert estimate.log_z == sum(estimate.log_rho_hats)
    assert estimate.log2_z == pytest.approx(estimate.log_z / math.log(2))

    for ((inside, total), log_rho_hat) in zip(estimate.counts, estimate.log_rho_hats):
        assert 0 < inside <= total == 128
        assert log_rho_hat == pytest.approx(math.log(inside / total))

    assert estimate.config_echo['sequence'] == sequence.fingerprint
    assert estimate.config_echo['thinning'] == HDR_THINNING


def test_deterministic():
    constraints = shifted_orthant(8)
    sequence = build_sequence(constraints)

    first = estimate_log_z(constraints, sequence, 64, config(2))
    second = estimate_log_z(constraints, sequence, 64, config(2))

    assert first == second
    assert first.log_z.hex() == second.log_z.hex()

    assert estimate_log_z(constraints, sequence, 64, config(2), run=1) != first


def test_first_run_stable():
    constraints = shifted_orthant(6)
    sequence = build_sequence(constraints)

    single = estimate_log_z(constraints, sequence, 64, config(9))

    repeated = estimate_log_z_repeated(constraints, sequence, 64, config(9), repeats=4)

    assert repeated.per_run[0] == single


def test_zero_count():
    with pytest.raises(ZeroCountError) as info:
        estimate_log_z(halfspace(5.0), ShiftSequence.from_gammas([0.0]), 16, config(0))

    assert info.value.level == 1
    assert 'more samples per nesting' in str(info.value)


def test_all_runs_fail():
    with pytest.raises(EstimationError) as info:
        estimate_log_z_repeated(halfspace(5.0), ShiftSequence.from_gammas([0.0]), 16,
                                config(0), repeats=3)

    assert [run for (run, _message) in info.value.failures] == [0, 1, 2]


def test_some_runs_fail():
    # a single nesting admitting Φ(−2) ≈ 2.3% of 16 samples: some runs
    # find none
    estimate = estimate_log_z_repeated(halfspace(2.0), ShiftSequence.from_gammas([0.0]), 16,
                                       config(0), repeats=40)

    assert 0 < estimate.excluded < 40
    assert estimate.excluded + len(estimate.per_run) == 40

    assert estimate.to_mapping()['excluded'] == estimate.excluded


def test_arguments():
    sequence = ShiftSequence.from_gammas([0.0])

    with pytest.raises(ValueError):
        estimate_log_z(halfspace(0.0), sequence, 1)

    with pytest.raises(ValueError):
        estimate_log_z_repeated(halfspace(0.0), sequence, 16, repeats=0)


def test_underflow():
    estimate = LogZEstimate((-1000.0, -1000.0), ((1, 2), (1, 2)), -2000.0, {})

    assert estimate.z == 0.0
    assert estimate.z_underflow
    assert estimate.log2_z == pytest.approx(-2000.0 / math.log(2))

    document = estimate.to_mapping()

    assert document['z_underflow'] is True
    assert document['log_z'] == -2000.0


def test_conditional_probabilities():
    constraints = shifted_orthant(30)
    sequence = build_sequence(constraints, 16, 0.5, ChainConfig(thinning=NESTING_THINNING, seed=1))

    estimate = estimate_log_z(constraints, sequence, 2048, config(1))

    (*inner, last) = estimate.rho_hats

    assert all(0.2 <= rho_hat <= 0.8 for rho_hat in inner)
    assert 0.2 <= last <= 1.0


def test_consistency():
    constraints = shifted_orthant(10)
    truth = 10 * log2_phi(1.0)

    def mean_error(n):
        errors = [abs(integrate(constraints, n, seed=seed).estimate.mean_log2_z - truth)
                  for seed in range(10)]

        return np.mean(errors)

    assert mean_error(2 ** 11) < mean_error(2 ** 5)


def test_supplied_sequence():
    constraints = halfspace(2.0)

    sequence = ShiftSequence.from_gammas([1.0, 0.0])

    integral = integrate(constraints, 2048, sequence=sequence, seed=4, repeats=3)

    assert integral.sequence is sequence
    assert integral.estimate.mean_log2_z == pytest.approx(log2_phi(-2.0), abs=0.3)
