"""
Critical branching random walk conditioned on total family-tree size.

A conditioned family tree is drawn exactly: the offspring counts are a
uniformly shuffled multiset whose Lukasiewicz walk ends at -1, and the
cycle lemma picks the unique rotation that keeps the walk nonnegative
until the last step. The tree is then embedded in Z^d by independent
nearest-neighbour steps and returned as an empirical measure scaled by
n^{-1/4}.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from ise_numerics import QuadratureSpec, fit_scale, two_point_transform
from lab_errors import InvalidArgumentError, ResourceLimitError
from measures import DEFAULT_BOOTSTRAP, CharEstimate, EmpiricalMeasure, bootstrap, per_sample_char


@dataclass(frozen=True)
class OffspringLaw:
    """Critical law on {0, 1, 2} with P(0) = P(2) = p0; p0 = 1/2 is binary branching."""
    p0: Fraction = Fraction(1, 2)

    def __post_init__(self):
        p0 = Fraction(self.p0)
        if not 0 < p0 <= Fraction(1, 2):
            raise InvalidArgumentError(f"p0 must lie in (0, 1/2], got {self.p0}")
        object.__setattr__(self, 'p0', p0)

    @property
    def probabilities(self) -> np.ndarray:
        p0 = float(self.p0)
        return np.array([p0, 1 - 2 * p0, p0])

    @property
    def variance(self) -> float:
        return 2 * float(self.p0)

    @property
    def binary(self) -> bool:
        return self.p0 == Fraction(1, 2)

    def admits(self, n: int) -> bool:
        """Whether a family tree of total size n has positive probability."""
        return n >= 1 and (not self.binary or n % 2 == 1)


@dataclass(frozen=True)
class BrwConfig:
    d: int = 2
    n: int = 1
    seed: int = 0
    samples: int = 1
    law: OffspringLaw = field(default_factory=OffspringLaw)
    scale: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise InvalidArgumentError(f"d must be >= 1, got {self.d}")
        if self.n < 1:
            raise InvalidArgumentError(f"n must be >= 1, got {self.n}")
        if not self.law.admits(self.n):
            raise InvalidArgumentError(f"size {self.n} is impossible under the binary law (sizes are odd)")
        if self.samples < 1:
            raise InvalidArgumentError("samples must be >= 1")
        if self.scale <= 0:
            raise InvalidArgumentError("scale must be positive")


@dataclass(frozen=True)
class FamilyTree:
    """Offspring counts and parents in depth-first order, plus lattice positions."""
    offspring: np.ndarray
    parents: np.ndarray
    positions: np.ndarray

    @property
    def size(self) -> int:
        return self.offspring.shape[0]

    def subtree_sizes(self) -> np.ndarray:
        sizes = np.ones(self.size, dtype=np.int64)
        for i in range(self.size - 1, 0, -1):
            sizes[self.parents[i]] += sizes[i]
        return sizes

    def height(self) -> int:
        depth = np.zeros(self.size, dtype=np.int64)
        for i in range(1, self.size):
            depth[i] = depth[self.parents[i]] + 1
        return int(depth.max())


def _step_table(d: int) -> np.ndarray:
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        steps[2 * axis, axis] = 1
        steps[2 * axis + 1, axis] = -1
    return steps


def _parents(offspring: np.ndarray) -> np.ndarray:
    parents = np.full(offspring.shape[0], -1, dtype=np.int64)
    stack: List[List[int]] = []
    for i, children in enumerate(offspring.tolist()):
        if stack:
            top = stack[-1]
            parents[i] = top[0]
            top[1] -= 1
            if top[1] == 0:
                stack.pop()
        if children:
            stack.append([i, children])
    return parents


def _embed(offspring: np.ndarray, d: int, rng: np.random.Generator) -> FamilyTree:
    parents = _parents(offspring)
    n = offspring.shape[0]
    steps = _step_table(d)[rng.integers(0, 2 * d, size=n)]
    steps[0] = 0
    depth = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        depth[i] = depth[parents[i]] + 1
    positions = np.zeros((n, d), dtype=np.int64)
    for level in range(1, int(depth.max()) + 1 if n > 1 else 1):
        idx = np.flatnonzero(depth == level)
        positions[idx] = positions[parents[idx]] + steps[idx]
    return FamilyTree(offspring, parents, positions)


def _composition_weights(n: int, law: OffspringLaw) -> Tuple[np.ndarray, np.ndarray]:
    """Log-weights of k2 = number of two-child vertices, given total size n."""
    k2 = np.arange(0, (n - 1) // 2 + 1)
    k0 = k2 + 1
    k1 = n - 1 - 2 * k2
    p = law.probabilities
    if p[1] == 0:
        keep = k1 == 0
        k2, k0, k1 = k2[keep], k0[keep], k1[keep]
    log_w = special.gammaln(n + 1) - special.gammaln(k0 + 1) - special.gammaln(k1 + 1) - special.gammaln(k2 + 1)
    log_w = log_w + (k0 + k2) * np.log(p[0])
    if p[1] > 0:
        log_w = log_w + k1 * np.log(p[1])
    return k2, log_w


def conditioned_offspring(n: int, law: OffspringLaw, rng: np.random.Generator) -> np.ndarray:
    """Depth-first offspring sequence of a family tree of size exactly n."""
    k2_values, log_w = _composition_weights(n, law)
    probs = np.exp(log_w - special.logsumexp(log_w))
    k2 = int(rng.choice(k2_values, p=probs / probs.sum()))
    k0, k1 = k2 + 1, n - 1 - 2 * k2
    sequence = rng.permutation(np.repeat([0, 1, 2], [k0, k1, k2]))
    walk = np.cumsum(sequence - 1)
    start = int(np.argmin(walk)) + 1
    return np.roll(sequence, -start) if start < n else sequence


def sample_family_tree(config: BrwConfig, rng: np.random.Generator) -> FamilyTree:
    return _embed(conditioned_offspring(config.n, config.law, rng), config.d, rng)


def _to_measure(tree: FamilyTree, config: BrwConfig) -> EmpiricalMeasure:
    factor = config.scale * config.n ** -0.25
    return EmpiricalMeasure.uniform(tree.positions * factor)


def sample_conditioned_tree(config: BrwConfig, rng: Optional[np.random.Generator] = None) -> EmpiricalMeasure:
    """
    One conditioned family tree as an empirical measure on n^{-1/4} Z^d.

    Args:
        config: Sampler configuration
        rng: Generator to draw from; defaults to one seeded by config.seed

    Returns:
        Uniform measure on the n particle positions, times n^{-1/4} and config.scale
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    return _to_measure(sample_family_tree(config, rng), config)


def sample_by_rejection(config: BrwConfig, rng: np.random.Generator, max_attempts: int = 1_000_000) -> FamilyTree:
    """
    Unconditioned Galton-Watson trees, kept only when the total size is n.

    Raises:
        ResourceLimitError: If no tree of size n appears within max_attempts
    """
    p = config.law.probabilities
    for _ in range(max_attempts):
        sequence = []
        open_slots = 1
        while open_slots > 0 and len(sequence) <= config.n:
            children = int(rng.choice(3, p=p))
            sequence.append(children)
            open_slots += children - 1
        if open_slots == 0 and len(sequence) == config.n:
            return _embed(np.asarray(sequence, dtype=np.int64), config.d, rng)
    raise ResourceLimitError(f"no size-{config.n} tree in {max_attempts} attempts", required=max_attempts, limit=max_attempts)


def _stream_generators(config: BrwConfig) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(config.samples)]


def _sample_range(config: BrwConfig, start: int, stop: int) -> List[EmpiricalMeasure]:
    generators = _stream_generators(config)[start:stop]
    return [sample_conditioned_tree(config, rng) for rng in generators]


def sample_stream(config: BrwConfig) -> Iterator[EmpiricalMeasure]:
    """Seeded stream of config.samples measures; sample i uses the i-th spawned seed."""
    for rng in _stream_generators(config):
        yield sample_conditioned_tree(config, rng)


def sample_measures(config: BrwConfig, threads: int = 1,
                    progress_callback: Optional[Callable] = None) -> List[EmpiricalMeasure]:
    """All samples of the stream, split into contiguous chunks across worker processes."""
    if threads <= 1:
        out = []
        for i, measure in enumerate(sample_stream(config)):
            out.append(measure)
            if progress_callback and (i + 1) % 100 == 0:
                progress_callback('sample_batch', {'accepted': i + 1, 'rejected': 0})
        return out
    bounds = np.linspace(0, config.samples, threads + 1).astype(int)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_sample_range, config, int(a), int(b)) for a, b in zip(bounds, bounds[1:])]
        out = []
        for future in futures:
            out.extend(future.result())
            if progress_callback:
                progress_callback('sample_batch', {'accepted': len(out), 'rejected': 0})
    return out


def empirical_char(measures: Sequence[EmpiricalMeasure], k, l: int = 1,
                   resamples: int = DEFAULT_BOOTSTRAP, seed: int = 0) -> CharEstimate:
    """
    Monte Carlo moment characteristic with a bootstrap confidence interval.

    Args:
        measures: Sampled empirical measures
        k: l frequency vectors of dimension d
        l: Moment order (1 or 2)
        resamples: Bootstrap resample count
        seed: Bootstrap seed

    Raises:
        InvalidArgumentError: If fewer than two measures are given or l is not 1 or 2
    """
    if len(measures) < 2:
        raise InvalidArgumentError("need at least two sampled measures")
    return bootstrap(per_sample_char(measures, k, l), resamples, seed)


def compare_with_ise(measures: Sequence[EmpiricalMeasure], k_grid, reference: int = 0,
                     q: Optional[QuadratureSpec] = None, resamples: int = DEFAULT_BOOTSTRAP,
                     seed: int = 0) -> List[dict]:
    """
    Fit the diffusion scale at k_grid[reference], then compare every grid point
    with Â^(2)(scale |k|) in bootstrap standard errors.
    """
    k_grid = np.atleast_2d(np.asarray(k_grid, dtype=float))
    estimates = [empirical_char(measures, k, 1, resamples, seed) for k in k_grid]
    norms = np.linalg.norm(k_grid, axis=1)
    c = fit_scale([norms[reference]], [estimates[reference].value.real], q)
    rows = []
    for k, norm, est in zip(k_grid, norms, estimates):
        target = two_point_transform(c * norm, q)
        z = abs(est.value.real - target) / est.stderr if est.stderr > 0 else 0.0
        rows.append({
            'k': ' '.join(f"{v:g}" for v in k), 're': est.value.real, 'im': est.value.imag,
            'stderr': est.stderr, 'ci_low': est.ci_low, 'ci_high': est.ci_high,
            'scale': c, 'target': target, 'z': z,
        })
    return rows
