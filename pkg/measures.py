"""
Empirical measures and their Monte Carlo moment characteristics.

Shared by every sampler: branching random walk trees, lattice trees and
percolation clusters all hand back scaled point measures, and their
characteristics are compared with the ISE transform through the same
bootstrap estimate.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from lab_errors import InvalidArgumentError

DEFAULT_BOOTSTRAP = 1000


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Atoms at ``points`` (N x d) with ``weights`` summing to 1."""
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @classmethod
    def uniform(cls, points) -> 'EmpiricalMeasure':
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points, np.full(points.shape[0], 1.0 / points.shape[0]))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def characteristic(self, k) -> complex:
        """sum_x w_x e^{i k.x}"""
        return complex(np.sum(self.weights * np.exp(1j * (self.points @ np.asarray(k, dtype=float)))))

    def diameter(self) -> float:
        """Largest sup-norm extent of the support along any axis."""
        return float((self.points.max(axis=0) - self.points.min(axis=0)).max())


class CharEstimate(NamedTuple):
    """Monte Carlo mean with bootstrap stderr and a percentile interval for the real part."""
    value: complex
    stderr: float
    ci_low: float
    ci_high: float


def per_sample_char(measures: Sequence[EmpiricalMeasure], k, l: int) -> np.ndarray:
    """The l-th moment characteristic of each measure (ordered pairs for l = 2)."""
    if l not in (1, 2):
        raise InvalidArgumentError(f"l must be 1 or 2, got {l}")
    k = np.atleast_2d(np.asarray(k, dtype=float))
    if k.shape[0] != l:
        raise InvalidArgumentError(f"need {l} frequency vectors, got {k.shape[0]}")
    values = np.array([mu.characteristic(k[0]) for mu in measures])
    if l == 2:
        values = values * np.array([mu.characteristic(k[1]) for mu in measures])
    return values


def bootstrap(values: np.ndarray, resamples: int = DEFAULT_BOOTSTRAP, seed: int = 0,
              level: float = 0.95) -> CharEstimate:
    """Mean of per-sample values with a bootstrap standard error and percentile interval."""
    if values.shape[0] < 2:
        raise InvalidArgumentError("need at least two samples")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.shape[0], size=(resamples, values.shape[0]))
    means = values[idx].mean(axis=1)
    stderr = float(np.sqrt(means.real.var() + means.imag.var()))
    tail = (1 - level) / 2
    low, high = np.quantile(means.real, [tail, 1 - tail])
    return CharEstimate(complex(values.mean()), stderr, float(low), float(high))
