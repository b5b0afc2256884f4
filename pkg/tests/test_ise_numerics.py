import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

import ise_numerics
from ise_numerics import (
    A2,
    Am,
    Am_hat,
    Am_hat_iterated,
    EdgeAssignment,
    QuadratureResult,
    QuadratureSpec,
    a2,
    am,
    am_hat,
    fit_scale,
    gaussian_density,
    moment_characteristic,
    route_frequencies,
    simplex_profile,
    total_mass,
    two_point_transform,
)
from lab_errors import InvalidArgumentError, NumericalFailureError, UnsupportedError
from shapes import enumerate_shapes

TWO = enumerate_shapes(2)[0]
THREE = enumerate_shapes(3)[0]


def closed_form_two_point(k):
    a = mpmath.mpf(k) ** 2 / 2
    return float(1 - a * mpmath.sqrt(mpmath.pi / 2) * mpmath.exp(a * a / 2) * mpmath.erfc(a / mpmath.sqrt(2)))


def test_gaussian_density_value():
    x = [0.3, -1.2]
    expected = math.exp(-(0.09 + 1.44) / (2 * 0.7)) / (2 * math.pi * 0.7)
    assert gaussian_density(x, 0.7, 2) == pytest.approx(expected, rel=1e-14)


def test_gaussian_density_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        gaussian_density([0.0], 0.0, 1)
    with pytest.raises(InvalidArgumentError):
        gaussian_density([0.0, 1.0], 1.0, 1)


def test_a2_vanishes_at_zero_time():
    assert a2([0.5], 0.0, 1) == 0.0
    assert a2([0.5], 1.0, 1) == pytest.approx(math.exp(-0.5) * gaussian_density([0.5], 1.0, 1))


@pytest.mark.parametrize("d,x", [(1, [0.7]), (2, [0.4, -0.3]), (3, [1.0, 0.0, 0.5])])
def test_A2_matches_multiprecision_quadrature(d, x):
    r2 = sum(v * v for v in x)

    def f(t):
        return t * mpmath.exp(-t * t / 2) * (2 * mpmath.pi * t) ** (-mpmath.mpf(d) / 2) * mpmath.exp(-r2 / (2 * t))

    expected = float(mpmath.quad(f, [0, 1, mpmath.inf]))
    result = A2(x, d)
    assert result.value == pytest.approx(expected, rel=1e-8, abs=1e-10)
    assert result.error < 1e-6


def test_A2_origin_diverges_in_high_dimension():
    with pytest.raises(NumericalFailureError):
        A2([0.0] * 4, 4)


def test_Am_two_point_is_A2():
    assert Am(TWO, [[0.7]], 1).value == pytest.approx(A2([0.7], 1).value, rel=1e-12)


def test_Am_limits():
    with pytest.raises(UnsupportedError):
        Am(enumerate_shapes(5)[0], np.ones((7, 1)), 1)
    with pytest.raises(NumericalFailureError):
        Am(THREE, [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 2)


def test_am_density_and_transform_pointwise():
    times = [0.4, 0.9, 1.3]
    ys = [[0.1], [-0.5], [0.8]]
    assignment = EdgeAssignment.build(THREE, times, ys, 1)
    s = sum(times)
    expected = s * math.exp(-s * s / 2)
    for t, y in zip(times, ys):
        expected *= gaussian_density(y, t, 1)
    assert am(assignment) == pytest.approx(expected, rel=1e-12)

    ks = [[0.5], [1.0], [2.0]]
    expected_hat = s * math.exp(-s * s / 2 - (0.25 * 0.4 + 1.0 * 0.9 + 4.0 * 1.3) / 2)
    assert am_hat(THREE, ks, times) == pytest.approx(expected_hat, rel=1e-12)


def test_am_all_zero_durations():
    assignment = EdgeAssignment.build(THREE, [0, 0, 0], [[0.1], [0.2], [0.3]], 1)
    assert am(assignment) == 0.0


@pytest.mark.parametrize("k", [0.0, 0.5, 1.0, 2.0, 4.0])
def test_two_point_transform_closed_form(k):
    assert Am_hat(TWO, [[k]]).value == pytest.approx(closed_form_two_point(k), abs=1e-9)
    assert two_point_transform(k) == pytest.approx(closed_form_two_point(k), abs=1e-9)


def test_simplex_route_matches_iterated_quadrature():
    k = [[0.3], [1.0], [0.7]]
    fast = Am_hat(THREE, k)
    slow = Am_hat_iterated(THREE, k, QuadratureSpec(abs_tol=1e-9, rel_tol=1e-9))
    assert fast.value == pytest.approx(slow.value, abs=1e-7)


def test_simplex_profile_two_rates():
    r1, r2, s = 0.3, 1.1, 2.0
    expected = (math.exp(-r2 * s) - math.exp(-r1 * s)) / (r1 - r2)
    assert simplex_profile([r1, r2], s) == pytest.approx(expected, rel=1e-12)


def test_simplex_profile_coincident_rates():
    r, s = 0.5, 1.7
    expected = s ** 2 / 2 * math.exp(-r * s)
    assert simplex_profile([r, r, r], s) == pytest.approx(expected, rel=1e-12)


def three_point_by_total_duration(ys, radius=10.0):
    """A^(3) in d = 1 with the total duration outermost."""
    def integrand(t2, t1, s):
        t3 = s - t1 - t2
        if min(t1, t2, t3) <= 0:
            return 0.0
        density = 1.0
        for t, y in zip((t1, t2, t3), ys):
            density *= math.exp(-y * y / (2 * t)) / math.sqrt(2 * math.pi * t)
        return s * math.exp(-s * s / 2) * density

    value, _ = integrate.tplquad(integrand, 0, radius, lambda s: 0, lambda s: s,
                                 lambda s, t1: 0, lambda s, t1: s - t1, epsabs=1e-10, epsrel=1e-9)
    return value


def test_Am_three_point_value():
    ys = [0.5, 0.8, 1.2]
    q = QuadratureSpec(abs_tol=1e-7, rel_tol=1e-7)
    assert Am(THREE, [[y] for y in ys], 1, q).value == pytest.approx(three_point_by_total_duration(ys), rel=1e-4)


@pytest.mark.parametrize("k", [0.5, 1.0, 1.5, 2.0, 3.0])
def test_two_point_transform_is_fourier_transform_of_density(k):
    half, _ = integrate.quad(lambda y: A2([y], 1).value, 0, np.inf, weight='cos', wvar=k, epsabs=1e-9)
    assert 2 * half == pytest.approx(Am_hat(TWO, [[k]]).value, abs=1e-7)


@pytest.mark.parametrize("m,target", [(2, 1.0), (3, 1.0), (4, 1 / 3), (5, 1 / 15)])
def test_transform_at_zero_is_shape_weight(m, target):
    shape = enumerate_shapes(m)[0]
    assert Am_hat(shape, np.zeros((shape.edge_count, 1))).value == pytest.approx(target, abs=1e-8)


def test_two_point_density_integrates_to_one():
    assert total_mass(TWO, 1).value == pytest.approx(1.0, abs=1e-6)


def test_total_mass_integrates_the_density(monkeypatch):
    calls = []

    def gaussian_surrogate(shape, y, d, q=None):
        calls.append(y)
        ys = np.ravel(y)
        return QuadratureResult(float(np.prod(np.exp(-ys ** 2) / math.sqrt(math.pi))), 0.0)

    monkeypatch.setattr(ise_numerics, 'Am', gaussian_surrogate)
    mass = total_mass(THREE, 1, points=128, replicates=4, seed=3)
    assert len(calls) == 512
    assert mass.value == pytest.approx(1.0, abs=0.02)


def test_total_mass_arguments():
    with pytest.raises(UnsupportedError):
        total_mass(TWO, 2)
    with pytest.raises(InvalidArgumentError):
        total_mass(THREE, 1, points=100)
    with pytest.raises(InvalidArgumentError):
        total_mass(THREE, 1, replicates=1)


@pytest.mark.slow
def test_three_point_density_integrates_to_one():
    assert total_mass(THREE, 1, points=256, seed=11).value == pytest.approx(1.0, abs=0.05)


def test_Am_hat_limit():
    with pytest.raises(UnsupportedError):
        Am_hat(enumerate_shapes(6)[0], np.zeros((9, 1)))


def test_route_frequencies_three_shape():
    routed = route_frequencies(THREE, [[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_allclose(routed, [[1.0, 2.0], [1.0, 0.0], [0.0, 2.0]])


def test_route_frequencies_wrong_count():
    with pytest.raises(InvalidArgumentError):
        route_frequencies(THREE, [[1.0]])


@pytest.mark.parametrize("l", [1, 2, 3])
def test_moment_characteristic_at_zero_is_one(l):
    assert moment_characteristic(l, np.zeros((l, 1)), 1).value == pytest.approx(1.0, abs=1e-8)


def test_first_moment_characteristic_is_two_point_transform():
    value = moment_characteristic(1, [[0.6, 0.8]], 2).value
    assert value == pytest.approx(closed_form_two_point(1.0), abs=1e-9)


def test_moment_characteristic_limits():
    with pytest.raises(UnsupportedError):
        moment_characteristic(4, np.zeros((4, 1)), 1)
    with pytest.raises(InvalidArgumentError):
        moment_characteristic(1, [[1.0, 0.0]], 3)


def test_fit_scale_recovers_single_point():
    observed = two_point_transform(1.3 * 0.8)
    assert fit_scale([0.8], [observed]) == pytest.approx(1.3, rel=1e-8)


def test_fit_scale_least_squares():
    ks = [0.5, 1.0, 1.5]
    observed = [two_point_transform(0.9 * k) for k in ks]
    assert fit_scale(ks, observed) == pytest.approx(0.9, rel=1e-5)


def test_fit_scale_rejects_degenerate_observations():
    with pytest.raises(InvalidArgumentError):
        fit_scale([0.0], [0.5])
    with pytest.raises(InvalidArgumentError):
        fit_scale([1.0], [1.2])


def test_truncation_must_respect_tolerance():
    with pytest.raises(InvalidArgumentError):
        QuadratureSpec(abs_tol=1e-12, truncation=2.0)
