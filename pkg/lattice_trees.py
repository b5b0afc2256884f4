"""
Exhaustive lattice-tree enumeration and the m-point counts built on it.

Trees containing the origin are grown by reverse search: the canonical
parent of an n-bond tree removes its largest leaf other than the origin,
and a child is accepted only when the new site is that leaf. Every tree
is produced exactly once, in a deterministic order, without storing the
trees already seen. The reverse-search tree is sharded by its first bond
so shards can run in worker processes and merge by integer addition.

Per-tree work (backbones, shape compatibility, degenerate tuples) runs in
a batched numpy kernel: all trees with n bonds have n + 1 sites, so a
batch is a stack of (n+1) x (n+1) distance matrices.
"""

import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from itertools import combinations, product
from typing import Callable, Dict, FrozenSet, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from lab_errors import InvalidArgumentError, LabError, NumericalFailureError, ResourceLimitError, UnsupportedError
from measures import EmpiricalMeasure
from shapes import GOLDEN_DIR, Shape, double_factorial_count, edge_routing, edges_on_path, enumerate_shapes

Site = Tuple[int, ...]
Bond = Tuple[Site, Site]

FLAVORS = ('nearest-neighbour', 'spread-out')
FLAVOR_ALIASES = {'nn': 'nearest-neighbour', 'so': 'spread-out'}
DEFAULT_TREE_MAX_N = 10
DEFAULT_TUPLE_BUDGET = 250_000_000
BATCH_SIZE = 256


@dataclass(frozen=True)
class LatticeModel:
    """Lattice Z^d with nearest-neighbour or spread-out (sup-norm range L) bonds."""
    d: int
    flavor: str = 'nearest-neighbour'
    L: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'flavor', FLAVOR_ALIASES.get(self.flavor, self.flavor))
        if self.d < 1:
            raise InvalidArgumentError(f"d must be >= 1, got {self.d}")
        if self.flavor not in FLAVORS:
            raise InvalidArgumentError(f"flavor must be one of {FLAVORS}, got {self.flavor!r}")
        if self.flavor == 'spread-out' and self.L < 1:
            raise InvalidArgumentError(f"spread-out range L must be >= 1, got {self.L}")

    @property
    def origin(self) -> Site:
        return (0,) * self.d

    @cached_property
    def _offsets(self) -> Tuple[Site, ...]:
        if self.flavor == 'nearest-neighbour':
            steps = []
            for axis in range(self.d):
                for sign in (-1, 1):
                    step = [0] * self.d
                    step[axis] = sign
                    steps.append(tuple(step))
            return tuple(sorted(steps))
        return tuple(sorted(
            step for step in product(range(-self.L, self.L + 1), repeat=self.d) if any(step)
        ))

    def neighbours(self) -> Tuple[Site, ...]:
        """Bond offsets from any site, sorted."""
        return self._offsets

    def is_bond(self, x: Site, y: Site) -> bool:
        diff = tuple(a - b for a, b in zip(x, y))
        return diff in set(self._offsets)

    def label(self) -> str:
        if self.flavor == 'spread-out':
            return f"d={self.d} spread-out L={self.L}"
        return f"d={self.d} nearest-neighbour"


def _bond(x: Site, y: Site) -> Bond:
    return (x, y) if x < y else (y, x)


def _add(x: Site, step: Site) -> Site:
    return tuple(a + b for a, b in zip(x, step))


@dataclass(frozen=True)
class LatticeTree:
    """A finite tree of lattice bonds containing the origin."""
    bonds: FrozenSet[Bond]
    d: int

    @classmethod
    def from_bonds(cls, bonds, model: LatticeModel) -> 'LatticeTree':
        """
        Build and validate a tree from site pairs.

        Raises:
            InvalidArgumentError: If a pair is not a bond of the model, or the
                bonds are not a tree containing the origin
        """
        normalized = set()
        for x, y in bonds:
            x, y = tuple(x), tuple(y)
            if len(x) != model.d or len(y) != model.d or not model.is_bond(x, y):
                raise InvalidArgumentError(f"{x}-{y} is not a bond of the {model.label()} lattice")
            normalized.add(_bond(x, y))
        tree = cls(frozenset(normalized), model.d)
        g = nx.Graph()
        g.add_node(model.origin)
        g.add_edges_from(normalized)
        if not nx.is_tree(g):
            raise InvalidArgumentError("bonds must form a connected acyclic set containing the origin")
        return tree

    @property
    def n(self) -> int:
        return len(self.bonds)

    @cached_property
    def sites(self) -> FrozenSet[Site]:
        found = {(0,) * self.d}
        for x, y in self.bonds:
            found.add(x)
            found.add(y)
        return frozenset(found)

    def ordered_sites(self) -> Tuple[Site, ...]:
        """Origin first, then the remaining sites in lexicographic order."""
        origin = (0,) * self.d
        return (origin,) + tuple(sorted(self.sites - {origin}))


def check_tree_budget(model: LatticeModel, n: int, max_n: int = DEFAULT_TREE_MAX_N):
    """
    Guard enumeration size. The allowance is scaled to d = 2 nearest-neighbour
    trees with max_n bonds: (bond offsets)^n may not exceed 4^max_n.
    """
    if n < 0:
        raise InvalidArgumentError(f"n must be >= 0, got {n}")
    required = len(model.neighbours()) ** n
    limit = 4 ** max_n
    if required > limit:
        raise ResourceLimitError(f"{n}-bond trees on the {model.label()} lattice exceed the enumeration budget",
                                 required=required, limit=limit)


def _check_tuple_budget(model: LatticeModel, n: int, l: int, budget: int):
    required = len(model.neighbours()) ** n * (n + 1) ** l
    if required > budget:
        raise ResourceLimitError("mark tuples exceed the budget", required=required, limit=budget)


class _Growth:
    """Reverse-search state: one tree under construction, grown and shrunk in place."""

    def __init__(self, model: LatticeModel, n: int):
        self.model = model
        self.n = n
        self.origin = model.origin
        self.offsets = model.neighbours()
        self.degree: Dict[Site, int] = {self.origin: 0}
        self.bonds: List[Bond] = []

    def _push(self, s: Site, t: Site):
        self.degree[s] += 1
        self.degree[t] = 1
        self.bonds.append(_bond(s, t))

    def _pop(self, s: Site, t: Site):
        self.bonds.pop()
        del self.degree[t]
        self.degree[s] -= 1

    def run(self, first: Site) -> Iterator[LatticeTree]:
        self._push(self.origin, first)
        yield from self._extend()
        self._pop(self.origin, first)

    def _extend(self) -> Iterator[LatticeTree]:
        if len(self.bonds) == self.n:
            yield LatticeTree(frozenset(self.bonds), self.model.d)
            return
        leaves = sorted((v for v, k in self.degree.items() if k == 1 and v != self.origin), reverse=True)[:2]
        for s in sorted(self.degree):
            # the new site must beat every leaf that survives the insertion
            if leaves[0] != s:
                rival = leaves[0]
            else:
                rival = leaves[1] if len(leaves) > 1 else None
            for step in self.offsets:
                t = _add(s, step)
                if t in self.degree or (rival is not None and t < rival):
                    continue
                self._push(s, t)
                yield from self._extend()
                self._pop(s, t)


def _shards(model: LatticeModel, n: int) -> List[Optional[Site]]:
    return [None] if n == 0 else list(model.neighbours())


def _grow(model: LatticeModel, n: int, first: Optional[Site]) -> Iterator[LatticeTree]:
    if n == 0:
        yield LatticeTree(frozenset(), model.d)
        return
    yield from _Growth(model, n).run(first)


def enumerate_trees(model: LatticeModel, n: int, max_n: int = DEFAULT_TREE_MAX_N) -> Iterator[LatticeTree]:
    """
    Stream every n-bond lattice tree containing the origin, exactly once.

    Raises:
        InvalidArgumentError: If n < 0
        ResourceLimitError: If (model, n) exceeds the enumeration budget
    """
    check_tree_budget(model, n, max_n)
    for first in _shards(model, n):
        yield from _grow(model, n, first)


def _run_shards(model: LatticeModel, n: int, worker: Callable, extra: tuple, threads: int,
                progress_callback: Optional[Callable] = None) -> list:
    """Run worker(model, n, shard, *extra) per shard; results come back in shard order."""
    shards = _shards(model, n)
    results = []
    if threads > 1 and len(shards) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(worker, model, n, shard, *extra) for shard in shards]
            for i, future in enumerate(futures):
                results.append(future.result())
                if progress_callback:
                    progress_callback('shard_done', {'shard': i, 'count': len(shards)})
    else:
        for i, shard in enumerate(shards):
            results.append(worker(model, n, shard, *extra))
            if progress_callback:
                progress_callback('shard_done', {'shard': i, 'count': len(shards)})
    return results


def _count_shard(model: LatticeModel, n: int, first: Optional[Site]) -> int:
    return sum(1 for _ in _grow(model, n, first))


def one_point(model: LatticeModel, n: int, threads: int = 1, max_n: int = DEFAULT_TREE_MAX_N,
              progress_callback: Optional[Callable] = None) -> int:
    """t_n^(1): the number of n-bond lattice trees containing the origin."""
    check_tree_budget(model, n, max_n)
    return sum(_run_shards(model, n, _count_shard, (), threads, progress_callback))


class ZcEstimate(NamedTuple):
    value: float
    band: float
    estimates: Tuple[float, ...]


def estimate_zc(model: LatticeModel, n_max: int, threads: int = 1, max_n: int = DEFAULT_TREE_MAX_N,
                counts: Optional[Sequence[int]] = None) -> ZcEstimate:
    """
    Ratio-method estimate of z_c from t_0^(1), ..., t_{n_max}^(1).

    With rho_n = t_{n-1} / t_n, the linear extrapolants
    z_n = n rho_n - (n-1) rho_{n-1} remove the leading 1/n correction. The
    band is the spread of the last two extrapolants.

    Args:
        model: Lattice model
        n_max: Largest bond count used (>= 4)
        threads: Worker processes for enumeration
        max_n: Enumeration budget
        counts: Precomputed t_0..t_{n_max}, skipping enumeration

    Raises:
        InvalidArgumentError: If n_max < 4
    """
    if n_max < 4:
        raise InvalidArgumentError(f"need n_max >= 4 for a ratio extrapolation, got {n_max}")
    if counts is None:
        counts = [one_point(model, n, threads, max_n) for n in range(n_max + 1)]
    elif len(counts) < n_max + 1:
        raise InvalidArgumentError(f"need {n_max + 1} counts, got {len(counts)}")
    rho = {n: counts[n - 1] / counts[n] for n in range(1, n_max + 1)}
    estimates = tuple(n * rho[n] - (n - 1) * rho[n - 1] for n in range(2, n_max + 1))
    return ZcEstimate(estimates[-1], abs(estimates[-1] - estimates[-2]), estimates)


def _all_pairs(adjacency: np.ndarray) -> np.ndarray:
    """Batched Floyd-Warshall on (B, N, N) boolean adjacency."""
    _, N, _ = adjacency.shape
    big = 4 * N + 4
    dist = np.where(adjacency, 1, big).astype(np.int32)
    idx = np.arange(N)
    dist[:, idx, idx] = 0
    for k in range(N):
        dist = np.minimum(dist, dist[:, :, k, None] + dist[:, None, k, :])
    return dist


def _batch_geometry(trees: Sequence[LatticeTree], d: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked coordinates, adjacency and distances; site 0 of every tree is the origin."""
    N = trees[0].n + 1
    coords = np.zeros((len(trees), N, d), dtype=np.int64)
    adjacency = np.zeros((len(trees), N, N), dtype=bool)
    for b, tree in enumerate(trees):
        order = tree.ordered_sites()
        index = {site: i for i, site in enumerate(order)}
        coords[b] = order
        for x, y in tree.bonds:
            i, j = index[x], index[y]
            adjacency[b, i, j] = adjacency[b, j, i] = True
    return coords, adjacency, _all_pairs(adjacency)


def _median_table(dist: np.ndarray) -> np.ndarray:
    """med[b, x, y, z]: the unique site on all three tree paths between x, y and z."""
    total = dist[:, :, None, None, :] + dist[:, None, :, None, :] + dist[:, None, None, :, :]
    return total.argmin(axis=-1)


@dataclass(frozen=True)
class TreeGeometry:
    """Distances and paths inside one lattice tree; index 0 is the origin."""
    sites: Tuple[Site, ...]
    coords: np.ndarray = field(repr=False)
    adjacency: np.ndarray = field(repr=False)
    distance: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, tree: LatticeTree) -> 'TreeGeometry':
        coords, adjacency, dist = _batch_geometry([tree], tree.d)
        return cls(tree.ordered_sites(), coords[0], adjacency[0], dist[0])

    @cached_property
    def _index(self) -> Dict[Site, int]:
        return {site: i for i, site in enumerate(self.sites)}

    def index(self, site: Site) -> int:
        try:
            return self._index[tuple(site)]
        except KeyError:
            raise InvalidArgumentError(f"site {tuple(site)} is not in the tree")

    def median(self, i: int, j: int, k: int) -> int:
        return int((self.distance[i] + self.distance[j] + self.distance[k]).argmin())

    def path(self, i: int, j: int) -> List[int]:
        """Site indices along the tree path from i to j (inclusive)."""
        walk = [i]
        while walk[-1] != j:
            here = walk[-1]
            step = np.flatnonzero(self.adjacency[here] & (self.distance[:, j] == self.distance[here, j] - 1))
            walk.append(int(step[0]))
        return walk


@lru_cache(maxsize=None)
def _branch_representatives(shape: Shape) -> Dict[int, Tuple[int, int, int]]:
    """Per internal vertex: one external label from each of its three branches (0 first)."""
    routing = edge_routing(shape)
    out_edges: Dict[int, List[int]] = {}
    for label, (parent, child) in enumerate(shape.edges, start=1):
        out_edges.setdefault(parent, []).append(label)
    reps = {}
    for v in shape.internal_vertices:
        a, b = (min(routing[label - 1]) for label in out_edges[v])
        reps[v] = (0, a, b)
    return reps


@dataclass(frozen=True)
class ShapeEmbedding:
    """A compatible shape with its per-edge displacements y and path lengths s."""
    shape_index: int
    shape: Shape
    y: Tuple[Site, ...]
    s: Tuple[int, ...]


@dataclass(frozen=True)
class BackboneRecord:
    marks: Tuple[Site, ...]
    bonds: FrozenSet[Bond]
    embeddings: Tuple[ShapeEmbedding, ...]

    @property
    def compatible(self) -> Tuple[int, ...]:
        return tuple(e.shape_index for e in self.embeddings)

    def embedding(self, shape_index: int) -> ShapeEmbedding:
        for e in self.embeddings:
            if e.shape_index == shape_index:
                return e
        raise InvalidArgumentError(f"shape {shape_index} is not compatible with this backbone")


def _embed(shape: Shape, index: int, geo: TreeGeometry, terms: Sequence[int]) -> Optional[ShapeEmbedding]:
    pos = {i: terms[i] for i in range(shape.m)}
    for v, (a, b, c) in _branch_representatives(shape).items():
        pos[v] = geo.median(terms[a], terms[b], terms[c])
    lengths = [int(geo.distance[pos[p], pos[c]]) for p, c in shape.edges]
    for a, b in combinations(range(shape.m), 2):
        if geo.distance[terms[a], terms[b]] != sum(lengths[j - 1] for j in edges_on_path(shape, a, b)):
            return None
    y = tuple(tuple(int(v) for v in geo.coords[pos[c]] - geo.coords[pos[p]]) for p, c in shape.edges)
    return ShapeEmbedding(index, shape, y, tuple(lengths))


def backbone(tree: LatticeTree, marks: Sequence[Site]) -> BackboneRecord:
    """
    Backbone of (T; 0, x_1, ..., x_{m-1}) and every shape compatible with it.

    Marks are ordered and may repeat or equal the origin.

    Raises:
        InvalidArgumentError: If no marks are given or a mark is not a site of the tree
    """
    if not marks:
        raise InvalidArgumentError("need at least one mark")
    geo = TreeGeometry.of(tree)
    marks = tuple(tuple(x) for x in marks)
    terms = [0] + [geo.index(x) for x in marks]
    spanned = set()
    for t in terms[1:]:
        walk = geo.path(0, t)
        spanned.update(_bond(geo.sites[a], geo.sites[b]) for a, b in zip(walk, walk[1:]))
    m = len(terms)
    embeddings = []
    for index, shape in enumerate(enumerate_shapes(m)):
        embedding = _embed(shape, index, geo, terms)
        if embedding is not None:
            embeddings.append(embedding)
    if not embeddings:
        raise LabError("backbone admits no compatible shape")
    if len(embeddings) > 1 and all(min(e.s) > 0 for e in embeddings):
        raise LabError("nondegenerate backbone compatible with several shapes")
    return BackboneRecord((geo.sites[0],) + marks, frozenset(spanned), tuple(embeddings))


def load_backbone_golden(name: str = 'backbone_tree') -> Tuple[LatticeTree, Tuple[Site, ...], Dict]:
    """
    Load a hand-encoded marked tree and its expected backbone data from golden/.

    Returns:
        (tree, marks, expected) where expected holds shape_index, y and s
    """
    path = GOLDEN_DIR / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"Golden tree file not found: {path}")
    with open(path, 'r') as f:
        record = json.load(f)
    model = LatticeModel(d=int(record['d']), flavor=record.get('flavor', 'nearest-neighbour'), L=int(record.get('L', 1)))
    tree = LatticeTree.from_bonds(record['bonds'], model)
    marks = tuple(tuple(x) for x in record['marks'])
    return tree, marks, record['expected']


class _TupleKernel:
    """Vectorised per-tuple backbone analysis for a batch of same-size trees."""

    def __init__(self, trees: Sequence[LatticeTree], d: int, l: int):
        self.coords, self.adjacency, self.dist = _batch_geometry(trees, d)
        B, N, _ = self.dist.shape
        self.B, self.N, self.l, self.m = B, N, l, l + 1
        grid = np.indices((N,) * l).reshape(l, -1).T
        self.terms = np.hstack([np.zeros((grid.shape[0], 1), dtype=np.int64), grid])
        self.bidx = np.arange(B)[:, None]
        self.median = _median_table(self.dist)

    def marks(self) -> np.ndarray:
        """(B, T, l, d) mark coordinates."""
        return self.coords[self.bidx[:, :, None], self.terms[None, :, 1:]]

    def shape_layout(self, shape: Shape) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Compatibility mask (B, T), path lengths (B, T, E) and displacements (B, T, E, d)."""
        pos = {i: np.broadcast_to(self.terms[:, i], (self.B, self.terms.shape[0])) for i in range(shape.m)}
        for v, (a, b, c) in _branch_representatives(shape).items():
            pos[v] = self.median[self.bidx, self.terms[:, a], self.terms[:, b], self.terms[:, c]]
        lengths = np.stack([self.dist[self.bidx, pos[p], pos[c]] for p, c in shape.edges], axis=-1)
        compatible = np.ones(lengths.shape[:2], dtype=bool)
        for a, b in combinations(range(shape.m), 2):
            direct = self.dist[self.bidx, pos[a], pos[b]]
            along = sum(lengths[..., j - 1] for j in edges_on_path(shape, a, b))
            compatible &= direct == along
        displacement = np.stack(
            [self.coords[self.bidx, pos[c]] - self.coords[self.bidx, pos[p]] for p, c in shape.edges], axis=2
        )
        return compatible, lengths, displacement

    def degenerate(self) -> np.ndarray:
        """Tuples whose backbone has a trivial path, decided from degrees in the spanning subtree."""
        from_origin = self.dist[:, 0, :][:, None, :]
        in_backbone = np.zeros((self.B, self.terms.shape[0], self.N), dtype=bool)
        for tau in range(1, self.m):
            to_mark = self.dist[:, self.terms[:, tau], :]
            reach = self.dist[:, 0, self.terms[:, tau]][..., None]
            in_backbone |= from_origin + to_mark == reach
        degree = np.einsum('bvw,btw->btv', self.adjacency.astype(np.int32), in_backbone.astype(np.int32))
        degree *= in_backbone
        distinct = np.ones(self.terms.shape[0], dtype=bool)
        for a, b in combinations(range(self.m), 2):
            distinct &= self.terms[:, a] != self.terms[:, b]
        terminal_degree = np.take_along_axis(degree, np.broadcast_to(self.terms[None], (self.B,) + self.terms.shape), axis=2)
        proper = distinct[None, :] & (terminal_degree == 1).all(axis=-1) & (degree.max(axis=-1) <= 3)
        return ~proper


def _key_base(n: int, width: int) -> int:
    base = 2 * n + 1
    if base ** width >= 2 ** 62:
        raise ResourceLimitError("mark tuples too wide for integer keys", required=base ** width, limit=2 ** 62)
    return base


def _encode(points: np.ndarray, n: int) -> np.ndarray:
    flat = points.reshape(points.shape[0], -1) + n
    base = _key_base(n, flat.shape[1])
    weights = base ** np.arange(flat.shape[1], dtype=np.int64)
    return flat.astype(np.int64) @ weights


def _decode(keys: np.ndarray, n: int, l: int, d: int) -> np.ndarray:
    base = _key_base(n, l * d)
    digits = (keys[:, None] // base ** np.arange(l * d, dtype=np.int64)) % base
    return (digits - n).reshape(-1, l, d)


def _compact(keys: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    unique, inverse = np.unique(keys, return_inverse=True)
    summed = np.zeros((unique.shape[0], weights.shape[1]), dtype=np.int64)
    np.add.at(summed, inverse.ravel(), weights)
    return unique, summed


def _batches(model: LatticeModel, n: int, first: Optional[Site], size: int) -> Iterator[List[LatticeTree]]:
    batch = []
    for tree in _grow(model, n, first):
        batch.append(tree)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def _decomposition_shard(model: LatticeModel, n: int, first: Optional[Site], l: int,
                         batch_size: int) -> Tuple[np.ndarray, np.ndarray, int]:
    shapes = enumerate_shapes(l + 1)
    keys_parts, weight_parts, trees = [], [], 0
    for batch in _batches(model, n, first, batch_size):
        trees += len(batch)
        kernel = _TupleKernel(batch, model.d, l)
        hits = np.zeros((kernel.B, kernel.terms.shape[0]), dtype=np.int64)
        proper = np.zeros_like(hits, dtype=bool)
        for shape in shapes:
            compatible, lengths, _ = kernel.shape_layout(shape)
            hits += compatible
            proper |= compatible & (lengths > 0).all(axis=-1)
        if np.any(proper & (hits != 1)):
            raise LabError("nondegenerate backbone compatible with several shapes")
        degenerate = kernel.degenerate()
        weights = np.stack([np.ones_like(hits), proper, degenerate, hits], axis=-1).reshape(-1, 4)
        keys = _encode(kernel.marks().reshape(-1, l, model.d), n)
        k, w = _compact(keys, weights)
        keys_parts.append(k)
        weight_parts.append(w)
        if len(keys_parts) >= 32:
            k, w = _compact(np.concatenate(keys_parts), np.concatenate(weight_parts))
            keys_parts, weight_parts = [k], [w]
    if not keys_parts:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 4), dtype=np.int64), 0
    k, w = _compact(np.concatenate(keys_parts), np.concatenate(weight_parts))
    return k, w, trees


@dataclass(frozen=True)
class DecompositionTable:
    """
    s, u and e over mark tuples x = (x_1, ..., x_l), with hits = sum over shapes
    of compatible (tree, tuple) pairs. Arrays are aligned with the sorted keys.
    """
    model: LatticeModel
    n: int
    l: int
    t1: int
    keys: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    e: np.ndarray = field(repr=False)
    hits: np.ndarray = field(repr=False)

    @cached_property
    def points(self) -> np.ndarray:
        """(K, l, d) mark coordinates for each key."""
        return _decode(self.keys, self.n, self.l, self.model.d)

    def _row(self, marks: Sequence[Site]) -> Optional[int]:
        key = _encode(np.asarray([marks], dtype=np.int64), self.n)[0]
        i = int(np.searchsorted(self.keys, key))
        if i < len(self.keys) and self.keys[i] == key:
            return i
        return None

    def entry(self, marks: Sequence[Site]) -> Tuple[int, int, int]:
        i = self._row(marks)
        if i is None:
            return 0, 0, 0
        return int(self.s[i]), int(self.u[i]), int(self.e[i])

    def hits_at(self, marks: Sequence[Site]) -> int:
        """Number of (tree, shape) pairs compatible with this mark tuple."""
        i = self._row(marks)
        return 0 if i is None else int(self.hits[i])

    def identity_holds(self) -> bool:
        return bool(np.array_equal(self.s, self.u + self.e))

    def total(self, kind: str = 's') -> int:
        return int(getattr(self, kind).sum())

    def transform(self, k: np.ndarray, kind: str = 's') -> complex:
        """sum_x w(x) e^{i sum_j k_j . x_j} for w one of s, u, e, hits."""
        k = np.asarray(k, dtype=float).reshape(self.l, self.model.d)
        phase = np.einsum('kld,ld->k', self.points, k)
        return complex(np.sum(getattr(self, kind) * np.exp(1j * phase)))

    def ratio_table(self) -> Dict[Tuple[Site, ...], Fraction]:
        """r(x) = s(x) / ((n+1)^l t_n^(1)), exactly."""
        scale = (self.n + 1) ** self.l * self.t1
        return {
            tuple(tuple(int(c) for c in x) for x in pts): Fraction(int(s), scale)
            for pts, s in zip(self.points, self.s)
        }


def s_u_e_decompose(model: LatticeModel, n: int, l: int, threads: int = 1, max_n: int = DEFAULT_TREE_MAX_N,
                    tuple_budget: int = DEFAULT_TUPLE_BUDGET, batch_size: int = BATCH_SIZE,
                    progress_callback: Optional[Callable] = None) -> DecompositionTable:
    """
    Tables s_n^(l+1)(x), u_n^(l+1)(x), e_n^(l+1)(x) over ordered mark tuples.

    u counts tuples with a compatible shape whose paths are all nontrivial;
    e counts tuples whose spanning subtree has a repeated mark, a mark of
    degree other than one, or a vertex of degree above three. The two are
    computed independently, so s = u + e is a real check.

    Raises:
        InvalidArgumentError: If l < 1
        UnsupportedError: If l > 3
        ResourceLimitError: If the tree or tuple budget is exceeded
    """
    if l < 1:
        raise InvalidArgumentError(f"l must be >= 1, got {l}")
    if l > 3:
        raise UnsupportedError("decomposition tables are implemented for l <= 3")
    check_tree_budget(model, n, max_n)
    _check_tuple_budget(model, n, l, tuple_budget)
    _key_base(n, l * model.d)
    results = _run_shards(model, n, _decomposition_shard, (l, batch_size), threads, progress_callback)
    t1 = sum(r[2] for r in results)
    keys, weights = _compact(np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results]))
    return DecompositionTable(model, n, l, t1, keys, weights[:, 0], weights[:, 1], weights[:, 2], weights[:, 3])


def verify_A9(model: LatticeModel, n: int, l: int, k: Optional[np.ndarray] = None,
              table: Optional[DecompositionTable] = None, **kwargs) -> Dict[str, object]:
    """
    Over-counting bound |ŝ(k) - sum_sigma t̂(sigma; k)| <= [(2l-3)!! - 1] ê(0).

    k holds l mark frequencies; each shape's edge frequencies are routed from
    them, so every compatible (tree, tuple, shape) contributes e^{i k.x}.
    At k = 0 both sides are integers.
    """
    table = table or s_u_e_decompose(model, n, l, **kwargs)
    factor = double_factorial_count(l + 1) - 1
    rhs = factor * table.total('e')
    lhs_zero = abs(table.total('s') - table.total('hits'))
    report = {
        'n': n, 'l': l, 'lhs_zero': lhs_zero, 'rhs': rhs, 'slack_zero': rhs - lhs_zero,
        'holds': lhs_zero <= rhs,
    }
    if k is not None:
        lhs = abs(table.transform(k, 's') - table.transform(k, 'hits'))
        report.update({'lhs': lhs, 'slack': rhs - lhs, 'holds': report['holds'] and lhs <= rhs + 1e-9 * max(1, rhs)})
    return report


def moment_char_mu_n(model: LatticeModel, n: int, l: int, k: np.ndarray, scale: float = 1.0,
                     table: Optional[DecompositionTable] = None, **kwargs) -> complex:
    """
    ŝ(k / (scale n^{1/4})) / ŝ(0): the l-th moment characteristic of mu_n.

    scale stands in for the model's diffusion constant; fit it with
    ise_numerics.fit_scale.
    """
    if scale <= 0:
        raise InvalidArgumentError("scale must be positive")
    table = table or s_u_e_decompose(model, n, l, **kwargs)
    frequency = np.asarray(k, dtype=float) / (scale * max(n, 1) ** 0.25)
    return table.transform(frequency, 's') / table.total('s')


def _count_tm_shard(model: LatticeModel, n: int, first: Optional[Site], m: int,
                    batch_size: int) -> Tuple[np.ndarray, np.ndarray, int]:
    shapes = enumerate_shapes(m)
    rows, counts, trees = [], [], 0
    for batch in _batches(model, n, first, batch_size):
        trees += len(batch)
        kernel = _TupleKernel(batch, model.d, m - 1)
        for index, shape in enumerate(shapes):
            compatible, lengths, displacement = kernel.shape_layout(shape)
            hit = compatible.ravel()
            if not hit.any():
                continue
            block = np.hstack([
                np.full((int(hit.sum()), 1), index, dtype=np.int64),
                displacement.reshape(hit.shape[0], -1)[hit],
                lengths.reshape(hit.shape[0], -1)[hit].astype(np.int64),
            ])
            unique, tally = np.unique(block, axis=0, return_counts=True)
            rows.append(unique)
            counts.append(tally)
    width = 1 + (2 * m - 3) * (model.d + 1)
    if not rows:
        return np.zeros((0, width), dtype=np.int64), np.zeros(0, dtype=np.int64), trees
    return _merge_rows(rows, counts) + (trees,)


def _merge_rows(rows: List[np.ndarray], counts: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    unique, inverse = np.unique(np.concatenate(rows), axis=0, return_inverse=True)
    summed = np.zeros(unique.shape[0], dtype=np.int64)
    np.add.at(summed, inverse.ravel(), np.concatenate(counts))
    return unique, summed


@dataclass(frozen=True)
class CountTable:
    """
    t_n^(m)(sigma; y, s) as aligned arrays: shape index, displacements (K, E, d),
    path lengths (K, E) and counts (K,).
    """
    m: int
    model: LatticeModel
    n: int
    t1: int
    sigma: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    count: np.ndarray = field(repr=False)

    def as_dict(self) -> Dict[Tuple[int, Tuple[Site, ...], Tuple[int, ...]], int]:
        return {
            (int(sig), tuple(tuple(int(c) for c in yj) for yj in y), tuple(int(v) for v in s)): int(c)
            for sig, y, s, c in zip(self.sigma, self.y, self.s, self.count)
        }

    def marginal(self) -> Dict[Tuple[int, Tuple[Site, ...]], int]:
        """t_n^(m)(sigma; y) = sum over s of t_n^(m)(sigma; y, s)."""
        out: Counter = Counter()
        for (sig, y, _), c in self.as_dict().items():
            out[(sig, y)] += c
        return dict(out)

    def total(self, shape_index: Optional[int] = None) -> int:
        if shape_index is None:
            return int(self.count.sum())
        return int(self.count[self.sigma == shape_index].sum())


def count_tm(model: LatticeModel, n: int, m: int, threads: int = 1, max_n: int = DEFAULT_TREE_MAX_N,
             tuple_budget: int = DEFAULT_TUPLE_BUDGET, batch_size: int = BATCH_SIZE,
             progress_callback: Optional[Callable] = None) -> CountTable:
    """
    Full table t_n^(m)(sigma; y, s) over trees, ordered mark tuples and compatible shapes.

    A degenerate tuple is counted once for each shape it is compatible with.

    Raises:
        InvalidArgumentError: If m < 2
        ResourceLimitError: If the tree or tuple budget is exceeded
    """
    if m < 2:
        raise InvalidArgumentError(f"m must be >= 2, got {m}")
    check_tree_budget(model, n, max_n)
    _check_tuple_budget(model, n, m - 1, tuple_budget)
    results = _run_shards(model, n, _count_tm_shard, (m, batch_size), threads, progress_callback)
    t1 = sum(r[2] for r in results)
    rows, counts = _merge_rows([r[0] for r in results], [r[1] for r in results])
    E, d = 2 * m - 3, model.d
    return CountTable(
        m=m, model=model, n=n, t1=t1,
        sigma=rows[:, 0],
        y=rows[:, 1:1 + E * d].reshape(-1, E, d),
        s=rows[:, 1 + E * d:],
        count=counts,
    )


def fourier_tm(table: CountTable, k: np.ndarray, shape_index: int = 0) -> float:
    """
    t̂_n^(m)(sigma; k) = sum_y t_n^(m)(sigma; y) e^{i k.y}, with k one d-vector per edge.

    Lattice inversion symmetry makes the sum real; a residual imaginary part
    above rounding is reported as a numerical failure.

    Args:
        table: Counts for every shape of the table's m
        k: (2m-3) frequency vectors, one per edge
        shape_index: Which shape sigma to transform, as an index into
            enumerate_shapes(m); 0 is the only shape for m = 2 and m = 3

    Returns:
        The real transform

    Raises:
        InvalidArgumentError: If shape_index is out of range
        NumericalFailureError: If the imaginary part exceeds rounding
    """
    if not 0 <= shape_index < double_factorial_count(table.m):
        raise InvalidArgumentError(f"shape index must be in 0..{double_factorial_count(table.m) - 1}, got {shape_index}")
    E = 2 * table.m - 3
    k = np.asarray(k, dtype=float).reshape(E, table.model.d)
    mask = table.sigma == shape_index
    phase = np.einsum('ked,ed->k', table.y[mask], k)
    value = np.sum(table.count[mask] * np.exp(1j * phase))
    scale = max(1, table.total(shape_index))
    if abs(value.imag) > 1e-9 * scale:
        raise NumericalFailureError("transform has an imaginary part", error_estimate=abs(value.imag))
    return float(value.real)


def p_tables(table: CountTable) -> Tuple[Dict, Dict]:
    """
    Normalised tables p_n^(m)(sigma; y) and p_n^(m)(sigma; y, s) as exact fractions.

    The normaliser is sum over shapes of t̂_n^(m)(sigma; 0).

    Raises:
        InvalidArgumentError: If the table is empty
    """
    denominator = table.total()
    if denominator == 0:
        raise InvalidArgumentError("cannot normalise an empty count table")
    full = {key: Fraction(c, denominator) for key, c in table.as_dict().items()}
    marginal = {key: Fraction(c, denominator) for key, c in table.marginal().items()}
    return marginal, full


def tree_measure(tree: LatticeTree, scale: float = 1.0) -> EmpiricalMeasure:
    """mu_n^T: mass 1/(n+1) at each site x, placed at x / (scale n^{1/4})."""
    factor = scale * max(tree.n, 1) ** 0.25
    points = np.asarray(tree.ordered_sites(), dtype=float) / factor
    return EmpiricalMeasure.uniform(points)
