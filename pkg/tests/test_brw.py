from collections import Counter
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from scipy import stats

from brw import (
    BrwConfig,
    OffspringLaw,
    compare_with_ise,
    conditioned_offspring,
    empirical_char,
    sample_by_rejection,
    sample_conditioned_tree,
    sample_family_tree,
    sample_measures,
    sample_stream,
)
from lab_errors import InvalidArgumentError

QUARTER = OffspringLaw(Fraction(1, 4))


def exact_shape_law(n, law):
    """P(offspring sequence) for every depth-first sequence of a size-n family tree."""
    p = {0: law.p0, 1: 1 - 2 * law.p0, 2: law.p0}
    weights = {}
    for seq in product((0, 1, 2), repeat=n):
        walk = np.cumsum(np.asarray(seq) - 1)
        if walk[-1] == -1 and (walk[:-1] >= 0).all():
            weight = Fraction(1)
            for c in seq:
                weight *= p[c]
            if weight:
                weights[seq] = weight
    total = sum(weights.values())
    return {seq: w / total for seq, w in weights.items()}


def chi_square_p(observed: Counter, law: dict, draws: int) -> float:
    keys = sorted(law)
    assert set(observed) <= set(keys)
    f_obs = [observed.get(key, 0) for key in keys]
    f_exp = [float(law[key]) * draws for key in keys]
    return stats.chisquare(f_obs, f_exp).pvalue


def test_offspring_law_validation():
    assert OffspringLaw().binary
    assert OffspringLaw('1/4').probabilities == pytest.approx([0.25, 0.5, 0.25])
    assert QUARTER.variance == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        OffspringLaw(Fraction(3, 4))
    with pytest.raises(InvalidArgumentError):
        OffspringLaw(0)


def test_binary_law_needs_odd_sizes():
    with pytest.raises(InvalidArgumentError):
        BrwConfig(n=4)
    BrwConfig(n=4, law=QUARTER)
    with pytest.raises(InvalidArgumentError):
        BrwConfig(n=0)


def test_single_particle_is_a_point_mass():
    measure = sample_conditioned_tree(BrwConfig(d=3, n=1))
    assert measure.size == 1
    assert measure.points.tolist() == [[0.0, 0.0, 0.0]]
    assert measure.total_mass == 1.0


def test_family_tree_structure():
    rng = np.random.default_rng(7)
    config = BrwConfig(d=2, n=101)
    for _ in range(20):
        tree = sample_family_tree(config, rng)
        assert tree.size == 101
        walk = np.cumsum(tree.offspring - 1)
        assert walk[-1] == -1 and (walk[:-1] >= 0).all()
        assert np.all(tree.parents[1:] < np.arange(1, 101))
        steps = tree.positions[1:] - tree.positions[tree.parents[1:]]
        assert np.all(np.abs(steps).sum(axis=1) == 1)
        assert tree.subtree_sizes()[0] == 101


def test_binary_trees_have_no_single_children():
    rng = np.random.default_rng(3)
    offspring = conditioned_offspring(51, OffspringLaw(), rng)
    assert set(offspring.tolist()) <= {0, 2}
    assert (offspring == 0).sum() == 26


def test_conditioned_shapes_follow_the_exact_law():
    law = exact_shape_law(5, QUARTER)
    assert len(law) == 9
    rng = np.random.default_rng(11)
    draws = 4000
    observed = Counter(tuple(conditioned_offspring(5, QUARTER, rng).tolist()) for _ in range(draws))
    assert chi_square_p(observed, law, draws) > 1e-4


def test_rejection_sampler_agrees_with_the_exact_law():
    config = BrwConfig(d=1, n=5, law=QUARTER)
    law = exact_shape_law(5, QUARTER)
    rng = np.random.default_rng(5)
    draws = 800
    observed = Counter(tuple(sample_by_rejection(config, rng).offspring.tolist()) for _ in range(draws))
    assert chi_square_p(observed, law, draws) > 1e-4


def test_stream_is_reproducible_by_seed():
    config = BrwConfig(d=2, n=63, seed=42, samples=6)
    first = [m.points for m in sample_stream(config)]
    second = [m.points for m in sample_stream(config)]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)
    other = [m.points for m in sample_stream(BrwConfig(d=2, n=63, seed=43, samples=6))]
    assert any(not np.array_equal(a, b) for a, b in zip(first, other))


def test_worker_processes_do_not_change_samples():
    config = BrwConfig(d=2, n=31, seed=9, samples=10)
    serial = sample_measures(config, threads=1)
    events = []
    parallel = sample_measures(config, threads=3, progress_callback=lambda e, d: events.append((e, d)))
    assert len(parallel) == 10
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.points, b.points)
    assert events[-1] == ('sample_batch', {'accepted': 10, 'rejected': 0})


def test_empirical_char_needs_two_measures():
    measure = sample_conditioned_tree(BrwConfig(n=9))
    with pytest.raises(InvalidArgumentError):
        empirical_char([measure], [[1.0, 0.0]])


def test_empirical_char_at_zero_is_one():
    measures = sample_measures(BrwConfig(d=2, n=31, samples=20))
    estimate = empirical_char(measures, [[0.0, 0.0]], resamples=100)
    assert estimate.value == pytest.approx(1.0)
    assert estimate.stderr == pytest.approx(0.0, abs=1e-12)


def test_compare_rows_fit_the_reference_point():
    measures = sample_measures(BrwConfig(d=2, n=255, samples=200, seed=1))
    rows = compare_with_ise(measures, [[1.0, 0.0], [0.0, 2.0]], resamples=200)
    assert [r['k'] for r in rows] == ['1 0', '0 2']
    assert rows[0]['target'] == pytest.approx(rows[0]['re'], abs=1e-6)
    assert rows[0]['z'] == pytest.approx(0.0, abs=1e-3)
    assert rows[1]['scale'] == rows[0]['scale'] > 0


@pytest.mark.slow
def test_acceptance_scale_agreement_with_ise():
    config = BrwConfig(d=2, n=4096, seed=0, samples=1000, law=QUARTER)
    measures = sample_measures(config, threads=4)
    rows = compare_with_ise(measures, [[0.5, 0.0], [1.0, 0.0], [1.5, 0.0], [2.0, 0.0], [2.5, 0.0]])
    for row in rows:
        assert row['z'] < 3
