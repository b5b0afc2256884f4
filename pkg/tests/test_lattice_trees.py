from fractions import Fraction

import numpy as np
import pytest

from lab_errors import InvalidArgumentError, ResourceLimitError, UnsupportedError
from lattice_trees import (
    LatticeModel,
    LatticeTree,
    backbone,
    check_tree_budget,
    count_tm,
    enumerate_trees,
    estimate_zc,
    fourier_tm,
    load_backbone_golden,
    moment_char_mu_n,
    one_point,
    p_tables,
    s_u_e_decompose,
    tree_measure,
    verify_A9,
)

SQUARE = LatticeModel(2)
LINE = LatticeModel(1)


def grow_by_sets(model, n):
    """Every n-bond tree at the origin, found by adding bonds to a set of bond sets."""
    level = {frozenset()}
    for _ in range(n):
        grown = set()
        for bonds in level:
            sites = {model.origin} | {x for bond in bonds for x in bond}
            for s in sites:
                for step in model.neighbours():
                    t = tuple(a + b for a, b in zip(s, step))
                    if t not in sites:
                        grown.add(bonds | {(min(s, t), max(s, t))})
        level = grown
    return level


def test_model_flavours():
    assert LatticeModel(2, 'nn') == SQUARE
    assert len(SQUARE.neighbours()) == 4
    assert len(LatticeModel(2, 'so', 1).neighbours()) == 8
    assert len(LatticeModel(3, 'spread-out', 2).neighbours()) == 124
    assert SQUARE.is_bond((0, 0), (0, 1))
    assert not SQUARE.is_bond((0, 0), (1, 1))
    with pytest.raises(InvalidArgumentError):
        LatticeModel(0)
    with pytest.raises(InvalidArgumentError):
        LatticeModel(2, 'hexagonal')


@pytest.mark.parametrize("n,count", [(0, 1), (1, 4), (2, 18), (3, 88), (4, 440)])
def test_square_lattice_one_point_counts(n, count):
    assert one_point(SQUARE, n) == count


@pytest.mark.parametrize("n", [0, 1, 2, 5])
def test_line_one_point_counts(n):
    assert one_point(LINE, n) == n + 1


def test_spread_out_single_bond():
    assert one_point(LatticeModel(2, 'spread-out', 1), 1) == 8


@pytest.mark.parametrize("model,n", [(SQUARE, 3), (LatticeModel(3), 2), (LatticeModel(2, 'so', 1), 2)])
def test_enumeration_matches_set_growth(model, n):
    trees = list(enumerate_trees(model, n))
    found = [t.bonds for t in trees]
    assert len(found) == len(set(found))
    assert set(found) == grow_by_sets(model, n)


def test_enumeration_order_is_deterministic():
    first = [t.bonds for t in enumerate_trees(SQUARE, 3)]
    second = [t.bonds for t in enumerate_trees(SQUARE, 3)]
    assert first == second


def test_worker_processes_give_the_same_count():
    events = []
    assert one_point(SQUARE, 3, threads=2, progress_callback=lambda e, d: events.append((e, d))) == 88
    assert [d['shard'] for _, d in events] == [0, 1, 2, 3]
    assert all(e == 'shard_done' and d['count'] == 4 for e, d in events)


def test_tree_budget():
    check_tree_budget(SQUARE, 10)
    with pytest.raises(ResourceLimitError):
        check_tree_budget(LatticeModel(3), 9)
    with pytest.raises(InvalidArgumentError):
        one_point(SQUARE, -1)


def test_from_bonds_validation():
    with pytest.raises(InvalidArgumentError):
        LatticeTree.from_bonds([((0, 0), (2, 0))], SQUARE)
    with pytest.raises(InvalidArgumentError):
        LatticeTree.from_bonds([((5, 5), (5, 6))], SQUARE)
    square = [((0, 0), (1, 0)), ((1, 0), (1, 1)), ((1, 1), (0, 1)), ((0, 1), (0, 0))]
    with pytest.raises(InvalidArgumentError):
        LatticeTree.from_bonds(square, SQUARE)


def test_ratio_estimate_of_zc():
    counts = [1, 4, 18, 88, 440]
    estimate = estimate_zc(SQUARE, 4, counts=counts)
    assert len(estimate.estimates) == 3
    assert estimate.band == pytest.approx(abs(estimate.estimates[-1] - estimate.estimates[-2]))
    assert 0.15 < estimate.value < 0.25
    with pytest.raises(InvalidArgumentError):
        estimate_zc(SQUARE, 3, counts=counts)


def test_golden_backbone():
    tree, marks, expected = load_backbone_golden()
    record = backbone(tree, marks)
    assert list(record.compatible) == expected['compatible']
    embedding = record.embedding(expected['shape_index'])
    assert [list(y) for y in embedding.y] == expected['y']
    assert list(embedding.s) == expected['s']
    assert len(record.bonds) == sum(expected['s'])


def test_backbone_rejects_foreign_marks():
    tree, _, _ = load_backbone_golden()
    with pytest.raises(InvalidArgumentError):
        backbone(tree, [(40, 40)])
    record = backbone(tree, [(2, -3)])
    assert record.compatible == (0,)
    with pytest.raises(InvalidArgumentError):
        record.embedding(3)


def test_degenerate_backbone_fits_every_shape():
    tree = LatticeTree.from_bonds([((0, 0), (1, 0))], SQUARE)
    record = backbone(tree, [(0, 0), (0, 0), (1, 0)])
    assert record.compatible == (0, 1, 2)


def test_decomposition_on_a_line():
    table = s_u_e_decompose(LINE, 1, 1)
    assert table.t1 == 2
    assert table.entry([(0,)]) == (2, 0, 2)
    assert table.entry([(1,)]) == (1, 1, 0)
    assert table.entry([(-1,)]) == (1, 1, 0)
    assert table.entry([(5,)]) == (0, 0, 0)
    assert table.ratio_table() == {
        ((-1,),): Fraction(1, 4),
        ((0,),): Fraction(1, 2),
        ((1,),): Fraction(1, 4),
    }


def test_coincident_marks_on_one_bond():
    table = s_u_e_decompose(SQUARE, 1, 3)
    marks = [(0, 0), (0, 0), (1, 0)]
    s, u, e = table.entry(marks)
    assert (s, u, e) == (1, 0, 1)
    assert table.hits_at(marks) == 3


@pytest.mark.parametrize("n", [0, 1, 2, 3])
@pytest.mark.parametrize("l", [1, 2, 3])
def test_decomposition_identities(n, l):
    table = s_u_e_decompose(SQUARE, n, l)
    assert table.t1 == one_point(SQUARE, n)
    assert table.total('s') == (n + 1) ** l * table.t1
    assert table.identity_holds()
    report = verify_A9(SQUARE, n, l, table=table)
    assert report['holds']
    assert report['slack_zero'] >= 0


def test_overcount_bound_at_nonzero_frequency():
    table = s_u_e_decompose(SQUARE, 3, 2)
    report = verify_A9(SQUARE, 3, 2, k=[[0.3, 0.1], [0.2, -0.4]], table=table)
    assert report['holds']
    assert report['lhs'] <= report['rhs'] + 1e-9


def test_decomposition_limits():
    with pytest.raises(UnsupportedError):
        s_u_e_decompose(LINE, 1, 4)
    with pytest.raises(InvalidArgumentError):
        s_u_e_decompose(LINE, 1, 0)
    with pytest.raises(ResourceLimitError):
        s_u_e_decompose(SQUARE, 2, 2, tuple_budget=10)


def test_mu_n_characteristic_at_zero():
    table = s_u_e_decompose(SQUARE, 2, 2)
    assert moment_char_mu_n(SQUARE, 2, 2, np.zeros((2, 2)), table=table) == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        moment_char_mu_n(SQUARE, 2, 2, np.zeros((2, 2)), scale=0.0, table=table)


def test_two_point_counts_on_a_line():
    table = count_tm(LINE, 1, 2)
    assert table.t1 == 2
    assert table.as_dict() == {
        (0, ((-1,),), (1,)): 1,
        (0, ((0,),), (0,)): 2,
        (0, ((1,),), (1,)): 1,
    }
    assert fourier_tm(table, [1.0]) == pytest.approx(2 + 2 * np.cos(1.0))


def test_count_table_agrees_with_decomposition_hits():
    for n in (1, 2, 3):
        counts = count_tm(SQUARE, n, 3)
        hits = s_u_e_decompose(SQUARE, n, 2).total('hits')
        assert counts.total() == hits
        assert fourier_tm(counts, np.zeros((3, 2))) == pytest.approx(counts.total(0))


def test_two_point_total_is_sites_times_trees():
    table = count_tm(SQUARE, 3, 2)
    assert table.total() == 4 * 88
    assert sum(table.marginal().values()) == table.total()


def test_normalised_tables():
    marginal, full = p_tables(count_tm(SQUARE, 2, 3))
    assert sum(marginal.values()) == 1
    assert sum(full.values()) == 1
    assert all(isinstance(v, Fraction) for v in full.values())


def test_count_tm_rejects_small_m():
    with pytest.raises(InvalidArgumentError):
        count_tm(SQUARE, 1, 1)


def test_tree_measure():
    bonds = [((0, 0), (1, 0)), ((1, 0), (2, 0)), ((0, 0), (0, 1)), ((0, 1), (0, 2))]
    measure = tree_measure(LatticeTree.from_bonds(bonds, SQUARE))
    assert measure.size == 5
    assert measure.total_mass == pytest.approx(1.0)
    assert measure.points.max() == pytest.approx(2 / np.sqrt(2))
    assert measure.characteristic([0.0, 0.0]) == pytest.approx(1.0)


def test_fourier_tm_selects_the_shape():
    table = count_tm(SQUARE, 2, 4)
    per_shape = [fourier_tm(table, np.zeros((5, 2)), i) for i in range(3)]
    assert per_shape == pytest.approx([table.total(i) for i in range(3)])
    assert sum(per_shape) == pytest.approx(table.total())
    with pytest.raises(InvalidArgumentError):
        fourier_tm(table, np.zeros((5, 2)), 3)
