"""
Bond percolation clusters of the origin: exact small-size laws and Monte Carlo.

Exact mode sums P(C(0) = S) over site animals S containing the origin:

    P(C(0) = S) = R(G_S; p) * (1 - p)^{|boundary of S|}

where G_S is the graph of lattice bonds inside S and R is its all-terminal
reliability (probability that the open bonds connect S), evaluated by
memoised deletion-contraction at an exact rational p. Translates of one
fixed animal share R and the boundary size, so each fixed animal is
evaluated once.
"""

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from lab_errors import InvalidArgumentError, ResourceLimitError
from lattice_trees import LatticeModel, Site
from measures import CharEstimate, EmpiricalMeasure, bootstrap, per_sample_char

DEFAULT_ANIMAL_MAX_N = 8
DEFAULT_ACCEPTANCE_FLOOR = 1e-4
MIN_ATTEMPTS_FOR_FLOOR = 1000

LITERATURE_PC: Dict[Tuple[int, str, int], Tuple[float, str]] = {
    (1, 'nearest-neighbour', 1): (1.0, "exact: a single closed bond disconnects Z"),
    (2, 'nearest-neighbour', 1): (0.5, "exact: self-duality of the square lattice"),
    (3, 'nearest-neighbour', 1): (0.2488126, "published Monte Carlo estimate"),
    (4, 'nearest-neighbour', 1): (0.1601314, "published Monte Carlo estimate"),
    (5, 'nearest-neighbour', 1): (0.1181718, "published Monte Carlo estimate"),
    (6, 'nearest-neighbour', 1): (0.0942019, "published Monte Carlo estimate"),
    (7, 'nearest-neighbour', 1): (0.0786752, "published Monte Carlo estimate"),
}


def _exact_p(p) -> Fraction:
    if isinstance(p, str):
        p = Fraction(p)
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise InvalidArgumentError(f"p must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class PercModel:
    """Bernoulli bond percolation with bond probability p on a lattice model."""
    lattice: LatticeModel
    p: Fraction
    pc_note: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'p', _exact_p(self.p))

    @classmethod
    def at_literature_pc(cls, lattice: LatticeModel) -> 'PercModel':
        key = (lattice.d, lattice.flavor, lattice.L if lattice.flavor == 'spread-out' else 1)
        if key not in LITERATURE_PC:
            raise InvalidArgumentError(f"no recorded critical value for the {lattice.label()} lattice")
        value, note = LITERATURE_PC[key]
        return cls(lattice, Fraction(value).limit_denominator(10 ** 9), note)


@dataclass(frozen=True)
class ClusterSample:
    sites: FrozenSet[Site]
    bonds: Tuple[Tuple[Site, Site], ...] = field(repr=False)
    boundary_closed: int = 0

    @property
    def size(self) -> int:
        return len(self.sites)

    def measure(self, scale: float = 1.0) -> EmpiricalMeasure:
        """nu-style empirical measure: mass 1/n at x / (scale n^{1/4})."""
        points = np.asarray(sorted(self.sites), dtype=float)
        return EmpiricalMeasure.uniform(points / (scale * self.size ** 0.25))


def check_animal_budget(model: PercModel, n: int, max_n: int = DEFAULT_ANIMAL_MAX_N):
    if n < 1:
        raise InvalidArgumentError(f"cluster size must be >= 1, got {n}")
    required = len(model.lattice.neighbours()) ** (n - 1)
    limit = 4 ** (max_n - 1)
    if required > limit:
        raise ResourceLimitError(f"{n}-site animals on the {model.lattice.label()} lattice exceed the budget",
                                 required=required, limit=limit)


def _add(x: Site, step: Site) -> Site:
    return tuple(a + b for a, b in zip(x, step))


def fixed_animals(lattice: LatticeModel, n: int) -> Iterator[Tuple[Site, ...]]:
    """Redelmeier enumeration of n-site animals whose smallest site is the origin."""
    origin = lattice.origin
    offsets = lattice.neighbours()
    animal: List[Site] = []
    seen = {origin}

    def grow(untried: List[Site]) -> Iterator[Tuple[Site, ...]]:
        untried = list(untried)
        while untried:
            cell = untried.pop()
            animal.append(cell)
            if len(animal) == n:
                yield tuple(animal)
            else:
                fresh = []
                for step in offsets:
                    c = _add(cell, step)
                    if c > origin and c not in seen:
                        fresh.append(c)
                seen.update(fresh)
                yield from grow(untried + fresh)
                seen.difference_update(fresh)
            animal.pop()

    yield from grow([origin])


def _internal_bonds(sites: Sequence[Site], lattice: LatticeModel) -> List[Tuple[int, int]]:
    index = {s: i for i, s in enumerate(sites)}
    bonds = []
    for s in sites:
        for step in lattice.neighbours():
            t = _add(s, step)
            if t in index and index[s] < index[t]:
                bonds.append((index[s], index[t]))
    return bonds


def _boundary_size(sites: Sequence[Site], lattice: LatticeModel) -> int:
    members = set(sites)
    return sum(1 for s in sites for step in lattice.neighbours() if _add(s, step) not in members)


def _contract(edges: Tuple[Tuple[int, int], ...], u: int, v: int) -> Tuple[Tuple[int, int], ...]:
    """Merge v into u, drop loops, shift labels above v down by one."""
    def relabel(w: int) -> int:
        w = u if w == v else w
        return w - 1 if w > v else w

    out = []
    for a, b in edges:
        a, b = relabel(a), relabel(b)
        if a != b:
            out.append((min(a, b), max(a, b)))
    return tuple(sorted(out))


@lru_cache(maxsize=None)
def reliability(edges: Tuple[Tuple[int, int], ...], vertex_count: int, p: Fraction) -> Fraction:
    """
    All-terminal reliability of a multigraph on vertices 0..vertex_count-1.

    Args:
        edges: Sorted (a, b) pairs with a < b; repeats are parallel bonds
        vertex_count: Number of vertices
        p: Exact open probability

    Returns:
        Probability that the open edges connect every vertex
    """
    if vertex_count == 1:
        return Fraction(1)
    if len(edges) < vertex_count - 1:
        return Fraction(0)
    g = nx.MultiGraph()
    g.add_nodes_from(range(vertex_count))
    g.add_edges_from(edges)
    if not nx.is_connected(g):
        return Fraction(0)
    if len(edges) == vertex_count - 1:
        return p ** len(edges)
    (u, v), rest = edges[0], edges[1:]
    return p * reliability(_contract(rest, u, v), vertex_count - 1, p) + (1 - p) * reliability(rest, vertex_count, p)


def fixed_animal_probability(sites: Sequence[Site], model: PercModel) -> Fraction:
    """P(C(0) = S) for an animal S containing the origin."""
    bonds = tuple(sorted(_internal_bonds(sites, model.lattice)))
    return reliability(bonds, len(sites), model.p) * (1 - model.p) ** _boundary_size(sites, model.lattice)


def _animal_shard(model: PercModel, animals: List[Tuple[Site, ...]]) -> List[Tuple[FrozenSet[Site], Fraction]]:
    out = []
    for fixed in animals:
        weight = fixed_animal_probability(fixed, model)
        for anchor in fixed:
            out.append((frozenset(tuple(a - b for a, b in zip(s, anchor)) for s in fixed), weight))
    return out


@lru_cache(maxsize=64)
def _animal_law(model: PercModel, n: int, threads: int = 1) -> Tuple[Tuple[FrozenSet[Site], Fraction], ...]:
    animals = list(fixed_animals(model.lattice, n))
    if threads > 1 and len(animals) > threads:
        chunks = [animals[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_animal_shard, [model] * threads, chunks))
    else:
        parts = [_animal_shard(model, animals)]
    law = [entry for part in parts for entry in part]
    return tuple(sorted(law, key=lambda entry: sorted(entry[0])))


def animal_law(model: PercModel, n: int, max_n: int = DEFAULT_ANIMAL_MAX_N,
               threads: int = 1) -> Tuple[Tuple[FrozenSet[Site], Fraction], ...]:
    """
    Every n-site animal containing the origin with its probability P(C(0) = S).

    Raises:
        ResourceLimitError: If n exceeds the animal budget
    """
    check_animal_budget(model, n, max_n)
    return _animal_law(model, n, threads)


def _site(x, d: int) -> Site:
    x = tuple(int(c) for c in np.atleast_1d(x))
    if len(x) != d:
        raise InvalidArgumentError(f"site must have {d} coordinates, got {x}")
    return x


def exact_tau2(model: PercModel, x, n: int, max_n: int = DEFAULT_ANIMAL_MAX_N) -> Fraction:
    """tau^(2)(x; n) = P(x in C(0), |C(0)| = n), exactly."""
    x = _site(x, model.lattice.d)
    return sum((w for sites, w in animal_law(model, n, max_n) if x in sites), Fraction(0))


def exact_tau3(model: PercModel, x, y, n: int, max_n: int = DEFAULT_ANIMAL_MAX_N) -> Fraction:
    """tau^(3)(x, y; n) = P(x, y in C(0), |C(0)| = n), exactly."""
    x, y = _site(x, model.lattice.d), _site(y, model.lattice.d)
    return sum((w for sites, w in animal_law(model, n, max_n) if x in sites and y in sites), Fraction(0))


def tau2_table(model: PercModel, n: int, max_n: int = DEFAULT_ANIMAL_MAX_N) -> Dict[Site, Fraction]:
    """tau^(2)(x; n) for every x with a nonzero value."""
    table: Dict[Site, Fraction] = {}
    for sites, w in animal_law(model, n, max_n):
        for x in sites:
            table[x] = table.get(x, Fraction(0)) + w
    return dict(sorted(table.items()))


def cluster_size_law(model: PercModel, n_max: int, max_n: int = DEFAULT_ANIMAL_MAX_N) -> Dict[int, Fraction]:
    """P(|C(0)| = n) for n = 1..n_max."""
    return {n: sum((w for _, w in animal_law(model, n, max_n)), Fraction(0)) for n in range(1, n_max + 1)}


def cluster_shape_law(model: PercModel, n: int, max_n: int = DEFAULT_ANIMAL_MAX_N) -> Dict[FrozenSet[Site], Fraction]:
    """P(C(0) = S | |C(0)| = n) for every n-site animal S containing the origin."""
    law = animal_law(model, n, max_n)
    total = sum((w for _, w in law), Fraction(0))
    if total == 0:
        raise InvalidArgumentError(f"clusters of size {n} have probability zero at p = {model.p}")
    return {sites: w / total for sites, w in law}


def exact_nu_char(model: PercModel, n: int, l: int, k, scale: float = 1.0,
                  max_n: int = DEFAULT_ANIMAL_MAX_N) -> complex:
    """
    Exact moment characteristic of nu_n at k / (scale n^{1/4}).

    l = 1 gives tau^(2)-hat(k'; n) / tau^(2)-hat(0; n); l = 2 the tau^(3) analogue.
    """
    if l not in (1, 2):
        raise InvalidArgumentError(f"l must be 1 or 2, got {l}")
    k = np.atleast_2d(np.asarray(k, dtype=float)) / (scale * n ** 0.25)
    if k.shape != (l, model.lattice.d):
        raise InvalidArgumentError(f"need {l} frequency vectors of dimension {model.lattice.d}")
    value = 0j
    for sites, w in cluster_shape_law(model, n, max_n).items():
        points = np.asarray(sorted(sites), dtype=float)
        term = np.exp(1j * points @ k[0]).mean()
        if l == 2:
            term *= np.exp(1j * points @ k[1]).mean()
        value += float(w) * term
    return complex(value)


class _Uniforms:
    """Block-buffered uniform draws from one generator."""

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self.rng = rng
        self.block = block
        self.buffer = rng.random(block)
        self.pos = 0

    def next(self) -> float:
        if self.pos == self.block:
            self.buffer = self.rng.random(self.block)
            self.pos = 0
        value = self.buffer[self.pos]
        self.pos += 1
        return value


def _grow_cluster(lattice: LatticeModel, p: float, uniforms: _Uniforms, cap: int) -> Optional[ClusterSample]:
    """Breadth-first exploration of C(0); None once more than cap sites are found."""
    origin = lattice.origin
    sites = {origin}
    queue = deque([origin])
    decided = set()
    occupied = []
    closed = []
    while queue:
        x = queue.popleft()
        for step in lattice.neighbours():
            y = _add(x, step)
            bond = (x, y) if x < y else (y, x)
            if bond in decided:
                continue
            decided.add(bond)
            if uniforms.next() < p:
                occupied.append(bond)
                if y not in sites:
                    sites.add(y)
                    if len(sites) > cap:
                        return None
                    queue.append(y)
            else:
                closed.append(bond)
    # closed bonds with both ends inside the cluster are internal, not boundary
    boundary = sum(1 for a, b in closed if (a in sites) != (b in sites))
    return ClusterSample(frozenset(sites), tuple(occupied), boundary)


def mc_clusters(model: PercModel, n_target: Optional[int] = None, samples: int = 1000, seed: int = 0,
                cap: Optional[int] = None, acceptance_floor: float = DEFAULT_ACCEPTANCE_FLOOR,
                progress_callback: Optional[Callable] = None) -> List[ClusterSample]:
    """
    Sample clusters of the origin, optionally conditioned on |C(0)| = n_target.

    Conditioned runs stop exploring a cluster as soon as it exceeds
    n_target sites and reject it. Unconditioned runs reject clusters
    larger than cap (default 100 * n_target, or 10^4).

    Raises:
        InvalidArgumentError: If p is not in (0, 1) for conditioned sampling, or samples < 1
        ResourceLimitError: If the acceptance rate falls below acceptance_floor
    """
    if samples < 1:
        raise InvalidArgumentError("samples must be >= 1")
    p = float(model.p)
    if n_target is not None:
        if n_target < 1:
            raise InvalidArgumentError("n_target must be >= 1")
        if n_target > 1 and p == 0:
            raise InvalidArgumentError("p = 0 admits only single-site clusters")
        limit = n_target
    else:
        limit = cap if cap is not None else 10_000
    uniforms = _Uniforms(np.random.default_rng(np.random.SeedSequence(seed)))
    accepted: List[ClusterSample] = []
    attempts = 0
    while len(accepted) < samples:
        attempts += 1
        cluster = _grow_cluster(model.lattice, p, uniforms, limit)
        if cluster is not None and (n_target is None or cluster.size == n_target):
            accepted.append(cluster)
            if progress_callback and len(accepted) % 1000 == 0:
                progress_callback('sample_batch', {'accepted': len(accepted), 'rejected': attempts - len(accepted)})
        if attempts >= MIN_ATTEMPTS_FOR_FLOOR and len(accepted) / attempts < acceptance_floor:
            raise ResourceLimitError(
                f"acceptance rate {len(accepted)}/{attempts} below floor", required=acceptance_floor,
                limit=len(accepted) / attempts,
            )
    return accepted


def nu_moment_char(samples: Sequence[ClusterSample], l: int, k, scale: float = 1.0,
                   resamples: int = 1000, seed: int = 0) -> CharEstimate:
    """
    Monte Carlo moment characteristic of nu_n with a bootstrap interval.

    Raises:
        InvalidArgumentError: If samples are empty or of mixed sizes
    """
    if not samples:
        raise InvalidArgumentError("no cluster samples")
    sizes = {s.size for s in samples}
    if len(sizes) != 1:
        raise InvalidArgumentError(f"samples mix cluster sizes {sorted(sizes)}")
    measures = [s.measure(scale) for s in samples]
    return bootstrap(per_sample_char(measures, k, l), resamples, seed)


def gw_cluster_law(max_n: int) -> Dict[int, Fraction]:
    """
    Total-progeny law of the critical binary Galton-Watson tree, exactly.

    P(N = 1) = 1/2 and P(N = 2k+3) / P(N = 2k+1) = (2k+1) / (2(k+2)); even sizes have probability 0.
    """
    if max_n < 1:
        raise InvalidArgumentError("max_n must be >= 1")
    law: Dict[int, Fraction] = {}
    current = Fraction(1, 2)
    for n in range(1, max_n + 1):
        if n % 2 == 0:
            law[n] = Fraction(0)
            continue
        law[n] = current
        k = (n - 1) // 2
        current = current * Fraction(2 * k + 1, 2 * (k + 2))
    return law


def _log_fraction(q: Fraction) -> float:
    return math.log(q.numerator) - math.log(q.denominator)


def gw_slope(law: Dict[int, Fraction], n_min: int = 100, n_max: int = 10_000) -> float:
    """Least-squares slope of log P(N = n) against log n over odd n in [n_min, n_max]."""
    ns = [n for n, q in law.items() if n_min <= n <= n_max and q > 0]
    if len(ns) < 2:
        raise InvalidArgumentError("need at least two nonzero entries in the fitting window")
    x = np.log(np.asarray(ns, dtype=float))
    y = np.array([_log_fraction(law[n]) for n in ns])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def survival_ratio(model: PercModel, depth: int, samples: int, seed: int = 0) -> float:
    """P(C(0) reaches chemical distance 2 * depth) / P(reaches depth), by Monte Carlo."""
    uniforms = _Uniforms(np.random.default_rng(np.random.SeedSequence(seed)))
    reach_short = reach_long = 0
    for _ in range(samples):
        reached = _chemical_reach(model.lattice, float(model.p), uniforms, 2 * depth)
        reach_short += reached >= depth
        reach_long += reached >= 2 * depth
    return reach_long / reach_short if reach_short else 0.0


def _chemical_reach(lattice: LatticeModel, p: float, uniforms: _Uniforms, horizon: int) -> int:
    """Largest chemical distance reached from the origin, explored up to horizon."""
    frontier = [lattice.origin]
    seen = {lattice.origin}
    decided = set()
    level = 0
    while frontier and level < horizon:
        nxt = []
        for x in frontier:
            for step in lattice.neighbours():
                y = _add(x, step)
                bond = (x, y) if x < y else (y, x)
                if bond in decided:
                    continue
                decided.add(bond)
                if uniforms.next() < p and y not in seen:
                    seen.add(y)
                    nxt.append(y)
        if not nxt:
            break
        frontier = nxt
        level += 1
    return level


def estimate_pc(lattice: LatticeModel, depth: int = 64, samples: int = 400, seed: int = 0,
                lo: float = 0.0, hi: float = 1.0, iterations: int = 12, cutoff: float = 0.5) -> Tuple[float, float]:
    """
    Crude bisection for p_c: p counts as supercritical when the survival ratio
    from depth to twice the depth exceeds cutoff.

    Returns:
        (estimate, half-width of the final bracket)
    """
    if not 0 <= lo < hi <= 1:
        raise InvalidArgumentError("need 0 <= lo < hi <= 1")
    for i in range(iterations):
        mid = (lo + hi) / 2
        model = PercModel(lattice, Fraction(mid).limit_denominator(10 ** 6))
        if survival_ratio(model, depth, samples, seed + i) > cutoff:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2, (hi - lo) / 2
