import json

import networkx as nx
import pytest

from lab_errors import InvalidArgumentError, UnsupportedError
from shapes import (
    GOLDEN_DIR,
    Shape,
    canonical_form,
    double_factorial_count,
    edge_routing,
    edges_on_path,
    enumerate_shapes,
    internal_edge_set,
    load_golden,
    shape_from_json,
    shape_index,
    shape_to_json,
)


@pytest.mark.parametrize("m,count", [(2, 1), (3, 1), (4, 3), (5, 15), (6, 105), (7, 945)])
def test_shape_counts(m, count):
    assert len(enumerate_shapes(m)) == count
    assert double_factorial_count(m) == count


@pytest.mark.parametrize("m", [4, 5, 6])
def test_shapes_pairwise_non_isomorphic(m):
    found = enumerate_shapes(m)

    def labelled(shape):
        g = shape.graph.copy()
        nx.set_node_attributes(g, {v: (v if v < shape.m else -1) for v in g.nodes}, 'tag')
        return g

    match = nx.algorithms.isomorphism.categorical_node_match('tag', None)
    graphs = [labelled(s) for s in found]
    for i in range(len(graphs)):
        for j in range(i + 1, len(graphs)):
            assert not nx.is_isomorphic(graphs[i], graphs[j], node_match=match)
    assert len({canonical_form(s) for s in found}) == len(found)


def test_two_shape_is_single_edge():
    (shape,) = enumerate_shapes(2)
    assert shape.edges == ((0, 1),)
    assert edges_on_path(shape, 0, 1) == [1]
    assert internal_edge_set(shape) == frozenset()


def test_three_shape_star():
    (shape,) = enumerate_shapes(3)
    assert shape.edges == ((0, 3), (3, 1), (3, 2))
    assert edges_on_path(shape, 1, 2) == [2, 3]
    assert internal_edge_set(shape) == frozenset({1})


def test_edge_labels_cover_one_to_2m_minus_3():
    for shape in enumerate_shapes(5):
        labels = sorted(data['label'] for _, _, data in shape.graph.edges(data=True))
        assert labels == list(range(1, 8))


def test_edge_routing_matches_paths():
    for shape in enumerate_shapes(5):
        routing = edge_routing(shape)
        for j, below in enumerate(routing, start=1):
            expected = {i for i in range(1, shape.m) if j in edges_on_path(shape, 0, i)}
            assert below == expected


def test_edges_on_path_is_symmetric_up_to_order():
    shape = enumerate_shapes(4)[0]
    assert edges_on_path(shape, 2, 3) == [4, 5]
    assert edges_on_path(shape, 3, 2) == [5, 4]
    assert edges_on_path(shape, 1, 1) == []


def test_path_label_out_of_range():
    shape = enumerate_shapes(4)[0]
    with pytest.raises(InvalidArgumentError):
        edges_on_path(shape, 0, 4)


def test_enumeration_bounds():
    with pytest.raises(InvalidArgumentError):
        enumerate_shapes(1)
    with pytest.raises(UnsupportedError):
        enumerate_shapes(11)


def test_invalid_shape_rejected():
    with pytest.raises(InvalidArgumentError):
        Shape(m=3, edges=((0, 1), (1, 2), (2, 3)))


def test_enumeration_is_stable():
    assert enumerate_shapes(5) == enumerate_shapes(5)
    for i, shape in enumerate(enumerate_shapes(5)):
        assert shape_index(shape) == i


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
def test_golden_files_match_enumeration(m):
    golden = load_golden(m)
    assert len(golden) == double_factorial_count(m)
    assert golden == enumerate_shapes(m)


def test_json_record_format():
    shape = enumerate_shapes(4)[0]
    record = shape_to_json(shape)
    assert record == {
        'm': 4,
        'edges': [[0, 'i1', 1], ['i1', 1, 2], ['i1', 'i2', 3], ['i2', 2, 4], ['i2', 3, 5]],
    }
    assert shape_from_json(json.loads(json.dumps(record))) == shape


def test_non_canonical_record_rejected():
    record = {'m': 3, 'edges': [[0, 'i1', 1], ['i1', 2, 2], ['i1', 1, 3]]}
    with pytest.raises(InvalidArgumentError):
        shape_from_json(record)


def test_missing_golden_file():
    assert not (GOLDEN_DIR / "shapes_m9.json").exists()
    with pytest.raises(FileNotFoundError):
        load_golden(9)
