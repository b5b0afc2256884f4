"""
Shape combinatorics for m-point functions.

An m-shape is a binary tree with m labelled external vertices (labels
0..m-1, degree 1) and m-2 unlabelled internal vertices (degree 3). Every
m-point density, series coefficient and lattice-tree count is indexed by
a shape, so this module fixes one canonical form and one edge labelling:

- traversal starts at external vertex 0 and is depth-first (pre-order);
- children are visited in order of the smallest external label they reach;
- edges are labelled 1..2m-3 in discovery order and directed away from 0;
- internal vertices are numbered m, m+1, ... in discovery order and
  serialized as "i1", "i2", ...

Shapes are enumerated by leaf insertion and returned sorted by their
edge tuples, so the order is stable across runs.
"""

import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Tuple

import networkx as nx

from lab_errors import InvalidArgumentError, UnsupportedError

GOLDEN_DIR = Path(__file__).parent / 'golden'
MAX_SHAPE_M = 10


@dataclass(frozen=True)
class Shape:
    """A canonical m-shape. ``edges[j-1]`` is the (parent, child) pair of edge label j."""
    m: int
    edges: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        if self.m < 2:
            raise InvalidArgumentError(f"m must be >= 2, got {self.m}")
        if len(self.edges) != 2 * self.m - 3:
            raise InvalidArgumentError(
                f"an {self.m}-shape has {2 * self.m - 3} edges, got {len(self.edges)}"
            )

        degree: Dict[int, int] = {}
        for parent, child in self.edges:
            degree[parent] = degree.get(parent, 0) + 1
            degree[child] = degree.get(child, 0) + 1

        expected = set(range(2 * self.m - 2))
        if set(degree) != expected:
            raise InvalidArgumentError(f"vertex set must be 0..{2 * self.m - 3}")
        for v, deg in degree.items():
            want = 1 if v < self.m else 3
            if deg != want:
                raise InvalidArgumentError(f"vertex {v} has degree {deg}, expected {want}")

        if not nx.is_tree(self.graph):
            raise InvalidArgumentError("shape edges must form a tree")

    @property
    def edge_count(self) -> int:
        return 2 * self.m - 3

    @property
    def internal_vertices(self) -> range:
        return range(self.m, 2 * self.m - 2)

    @cached_property
    def graph(self) -> nx.Graph:
        """Undirected view with the edge label stored as the ``label`` attribute."""
        g = nx.Graph()
        g.add_nodes_from(range(2 * self.m - 2))
        for label, (parent, child) in enumerate(self.edges, start=1):
            g.add_edge(parent, child, label=label)
        return g

    @cached_property
    def parent_edge(self) -> Dict[int, int]:
        """Map each vertex other than 0 to the label of the edge above it."""
        return {child: label for label, (_, child) in enumerate(self.edges, start=1)}

    def vertex_name(self, v: int):
        return v if v < self.m else f"i{v - self.m + 1}"

    def __repr__(self) -> str:
        return f"Shape(m={self.m}, edges={list(self.edges)})"


def double_factorial_count(m: int) -> int:
    """
    Number of m-shapes, (2m-5)!! with (-1)!! = 1.

    Args:
        m: External vertex count

    Returns:
        The double factorial (2m-5)!!

    Raises:
        InvalidArgumentError: If m < 2
    """
    if m < 2:
        raise InvalidArgumentError(f"m must be >= 2, got {m}")
    return math.prod(range(2 * m - 5, 0, -2))


def _leaf_insertion_trees(m: int) -> List[List[Tuple[int, int]]]:
    # internal vertices get negative ids so they never collide with labels
    trees = [[(0, 1)]]
    for leaf in range(2, m):
        grown = []
        for edges in trees:
            for idx, (u, v) in enumerate(edges):
                w = -leaf
                rest = edges[:idx] + edges[idx + 1:]
                grown.append(rest + [(u, w), (w, v), (w, leaf)])
        trees = grown
    return trees


def _canonicalize(m: int, edges: List[Tuple[Any, Any]]) -> Shape:
    """Relabel an unrooted shape tree (internal ids arbitrary, not in 0..m-1) into canonical form."""
    adjacency: Dict[Any, List[Any]] = {}
    for u, v in edges:
        adjacency.setdefault(u, []).append(v)
        adjacency.setdefault(v, []).append(u)

    def is_external(v) -> bool:
        return isinstance(v, int) and 0 <= v < m

    def smallest(v, parent) -> int:
        if is_external(v):
            return v
        return min(smallest(w, v) for w in adjacency[v] if w != parent)

    names: Dict[Any, int] = {}
    ordered: List[Tuple[int, int]] = []
    next_internal = m

    def name(v) -> int:
        return v if is_external(v) else names[v]

    def visit(v, parent):
        nonlocal next_internal
        children = sorted((w for w in adjacency[v] if w != parent), key=lambda w: smallest(w, v))
        for w in children:
            if not is_external(w):
                names[w] = next_internal
                next_internal += 1
            ordered.append((name(v), name(w)))
            visit(w, v)

    visit(0, None)
    return Shape(m=m, edges=tuple(ordered))


@lru_cache(maxsize=None)
def _enumerate(m: int) -> Tuple[Shape, ...]:
    shapes = {_canonicalize(m, edges) for edges in _leaf_insertion_trees(m)}
    return tuple(sorted(shapes, key=lambda s: s.edges))


def enumerate_shapes(m: int) -> List[Shape]:
    """
    Enumerate all m-shapes in canonical form and canonical order.

    Args:
        m: External vertex count (2 <= m <= 10)

    Returns:
        List of (2m-5)!! distinct shapes, sorted by edge tuple

    Raises:
        InvalidArgumentError: If m < 2
        UnsupportedError: If m exceeds the enumeration ceiling
    """
    if m < 2:
        raise InvalidArgumentError(f"m must be >= 2, got {m}")
    if m > MAX_SHAPE_M:
        raise UnsupportedError(f"shape enumeration is limited to m <= {MAX_SHAPE_M}")
    return list(_enumerate(m))


def shape_index(shape: Shape) -> int:
    """Position of a shape in the canonical enumeration order."""
    return _enumerate(shape.m).index(shape)


def _check_label(shape: Shape, label: int):
    if not isinstance(label, int) or not 0 <= label < shape.m:
        raise InvalidArgumentError(f"external label must be in 0..{shape.m - 1}, got {label!r}")


@lru_cache(maxsize=4096)
def _path(shape: Shape, source: int, target: int) -> Tuple[int, ...]:
    vertices = nx.shortest_path(shape.graph, source, target)
    return tuple(shape.graph.edges[u, v]['label'] for u, v in zip(vertices, vertices[1:]))


def edges_on_path(shape: Shape, source: int, target: int) -> List[int]:
    """
    Edge labels on the tree path between two external vertices.

    Args:
        shape: The shape
        source: Starting external label
        target: Ending external label

    Returns:
        Edge labels in traversal order (empty when source == target)

    Raises:
        InvalidArgumentError: If a label is out of range
    """
    _check_label(shape, source)
    _check_label(shape, target)
    return list(_path(shape, source, target))


def internal_edge_set(shape: Shape) -> FrozenSet[int]:
    """Edges on the paths from vertex 0 to the internal vertices."""
    labels = set()
    for v in shape.internal_vertices:
        labels.update(_path(shape, 0, v))
    return frozenset(labels)


@lru_cache(maxsize=4096)
def edge_routing(shape: Shape) -> Tuple[FrozenSet[int], ...]:
    """
    For each edge label j, the external labels i >= 1 whose 0 -> i path uses edge j.

    The frequency carried by edge j in a moment characteristic is the sum
    of k_i over this set.
    """
    below: Dict[int, set] = {v: ({v} if 0 < v < shape.m else set()) for v in range(2 * shape.m - 2)}
    for parent, child in reversed(shape.edges):
        below[parent] |= below[child]
    return tuple(frozenset(below[child]) for _, child in shape.edges)


def canonical_form(shape: Shape) -> str:
    """AHU-style string rooted at vertex 0; external labels decorate the leaves."""
    children: Dict[int, List[int]] = {}
    for parent, child in shape.edges:
        children.setdefault(parent, []).append(child)

    def encode(v: int) -> str:
        if v < shape.m:
            return str(v)
        return '(' + ','.join(sorted(encode(w) for w in children[v])) + ')'

    return '0' + encode(shape.edges[0][1])


def shape_to_json(shape: Shape) -> Dict[str, Any]:
    return {
        'm': shape.m,
        'edges': [
            [shape.vertex_name(parent), shape.vertex_name(child), label]
            for label, (parent, child) in enumerate(shape.edges, start=1)
        ],
    }


def shape_from_json(record: Dict[str, Any]) -> Shape:
    """
    Rebuild a shape from its JSON record.

    Raises:
        InvalidArgumentError: If the record is malformed or not in canonical form
    """
    try:
        m = int(record['m'])
        rows = sorted(record['edges'], key=lambda row: row[2])
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise InvalidArgumentError(f"malformed shape record: {e}")

    def vertex(name) -> int:
        if isinstance(name, str) and name.startswith('i'):
            return m + int(name[1:]) - 1
        return int(name)

    shape = Shape(m=m, edges=tuple((vertex(u), vertex(v)) for u, v, _ in rows))
    if _canonicalize(m, list(shape.edges)) != shape:
        raise InvalidArgumentError("shape record is not in canonical form")
    return shape


def load_golden(m: int) -> List[Shape]:
    """Load the shipped golden list for m; raises FileNotFoundError if none ships."""
    path = GOLDEN_DIR / f"shapes_m{m}.json"
    if not path.exists():
        raise FileNotFoundError(f"Golden shape file not found: {path}")
    with open(path, 'r') as f:
        records = json.load(f)
    return [shape_from_json(record) for record in records]
