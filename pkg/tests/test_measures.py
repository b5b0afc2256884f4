import numpy as np
import pytest

from lab_errors import InvalidArgumentError
from measures import EmpiricalMeasure, bootstrap, per_sample_char


def test_characteristic_of_a_measure():
    measure = EmpiricalMeasure.uniform([[0.0], [np.pi]])
    assert measure.characteristic([0.0]) == pytest.approx(1.0)
    assert measure.characteristic([1.0]) == pytest.approx(0.0)
    assert measure.diameter() == pytest.approx(np.pi)


def test_per_sample_char_orders():
    measures = [EmpiricalMeasure.uniform([[0.0], [1.0]])]
    single = per_sample_char(measures, [[0.5]], 1)
    pair = per_sample_char(measures, [[0.5], [0.5]], 2)
    assert pair[0] == pytest.approx(single[0] ** 2)
    with pytest.raises(InvalidArgumentError):
        per_sample_char(measures, [[0.5]] * 3, 3)
    with pytest.raises(InvalidArgumentError):
        per_sample_char(measures, [[0.5]], 2)


def test_bootstrap_of_constant_values():
    estimate = bootstrap(np.full(5, 0.25 + 0j), resamples=200)
    assert estimate.value == 0.25
    assert estimate.stderr == 0.0
    assert estimate.ci_low == estimate.ci_high == pytest.approx(0.25)
    with pytest.raises(InvalidArgumentError):
        bootstrap(np.ones(1, dtype=complex))


def test_uniform_measure_mass():
    measure = EmpiricalMeasure.uniform([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0]])
    assert measure.size == 4
    assert measure.total_mass == pytest.approx(1.0)
    assert measure.diameter() == pytest.approx(3.0)
