"""
ISE densities, their Fourier transforms and moment-measure characteristics.

All semi-infinite t-integrals are truncated at QuadratureSpec.truncation
and the analytic tail bound is added to the reported error. One-dimensional
integrals go through scipy's adaptive Gauss-Kronrod routine (QUADPACK);
a non-converged integral is retried with a doubled subdivision limit
before NumericalFailureError is raised.
"""

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate, linalg, optimize, special, stats
from scipy.stats import qmc
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from lab_errors import InvalidArgumentError, NumericalFailureError, UnsupportedError
from shapes import Shape, edge_routing, enumerate_shapes

QUAD_ATTEMPTS = 3


class QuadratureResult(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and truncation for deterministic quadrature."""
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    truncation: float = 10.0
    limit: int = 200

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise InvalidArgumentError("quadrature tolerances must be positive")
        if self.truncation <= 0:
            raise InvalidArgumentError("truncation radius must be positive")
        if self.limit < 1:
            raise InvalidArgumentError("subdivision limit must be >= 1")
        if self.tail_bound(1) > self.abs_tol:
            raise InvalidArgumentError(
                f"truncation {self.truncation} leaves tail {self.tail_bound(1):.3e} above abs_tol {self.abs_tol:.1e}"
            )

    def tail_bound(self, edges: int = 1) -> float:
        """
        Bound on the integral of (sum t) e^{-(sum t)^2/2} over sum t > R, for `edges` durations.

        The simplex slice at sum t = s has volume s^{edges-1}/(edges-1)!, so the
        tail equals the incomplete gamma expression below.
        """
        a = (edges + 1) / 2
        x = self.truncation ** 2 / 2
        log_tail = ((edges - 1) / 2) * math.log(2) + special.gammaln(a) - special.gammaln(edges)
        return math.exp(log_tail) * special.gammaincc(a, x)


class _NotConverged(Exception):
    def __init__(self, message: str, error: float):
        super().__init__(message)
        self.error = error


def adaptive_quad(func: Callable[[float], float], a: float, b: float, q: QuadratureSpec) -> QuadratureResult:
    """
    One-dimensional adaptive quadrature with subdivision-limit escalation.

    Raises:
        NumericalFailureError: If no attempt converges
    """
    try:
        for attempt in Retrying(
            stop=stop_after_attempt(QUAD_ATTEMPTS),
            retry=retry_if_exception_type(_NotConverged),
            reraise=True,
        ):
            with attempt:
                limit = q.limit * 2 ** (attempt.retry_state.attempt_number - 1)
                result = integrate.quad(
                    func, a, b, epsabs=q.abs_tol, epsrel=q.rel_tol, limit=limit, full_output=1
                )
                # quad appends a message only when it did not converge
                if len(result) > 3:
                    raise _NotConverged(result[3], result[1])
    except _NotConverged as e:
        raise NumericalFailureError("adaptive quadrature did not converge", error_estimate=e.error, detail=str(e))
    return QuadratureResult(float(result[0]), float(result[1]))


def _vector(x, d: int) -> np.ndarray:
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise InvalidArgumentError(f"dimension must be an integer >= 1, got {d!r}")
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.shape != (d,):
        raise InvalidArgumentError(f"expected a {d}-vector, got shape {v.shape}")
    return v


def _edge_vectors(shape: Shape, vectors, d: Optional[int] = None) -> np.ndarray:
    """Coerce per-edge vectors to an (edges, d) array; scalars are read as d = 1."""
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] != shape.edge_count:
        raise InvalidArgumentError(
            f"expected {shape.edge_count} edge vectors for an {shape.m}-shape, got shape {arr.shape}"
        )
    if d is not None and arr.shape[1] != d:
        raise InvalidArgumentError(f"edge vectors have dimension {arr.shape[1]}, expected {d}")
    return arr


def _durations(shape: Shape, t) -> np.ndarray:
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if times.shape != (shape.edge_count,):
        raise InvalidArgumentError(f"expected {shape.edge_count} durations, got shape {times.shape}")
    if np.any(times < 0):
        raise InvalidArgumentError("durations must be nonnegative")
    return times


@dataclass(frozen=True)
class EdgeAssignment:
    """Per-edge durations and vectors (displacements y or frequencies k) for one shape."""
    shape: Shape
    times: tuple
    vectors: tuple
    d: int

    @classmethod
    def build(cls, shape: Shape, times, vectors, d: int) -> 'EdgeAssignment':
        t = _durations(shape, times)
        v = _edge_vectors(shape, vectors, d)
        return cls(shape=shape, times=tuple(t.tolist()), vectors=tuple(map(tuple, v.tolist())), d=d)

    def arrays(self):
        return np.asarray(self.times), np.asarray(self.vectors).reshape(len(self.times), self.d)


def gaussian_density(x, t: float, d: int) -> float:
    """
    Brownian transition density p_t(x) = (2 pi t)^{-d/2} exp(-|x|^2 / 2t).

    Raises:
        InvalidArgumentError: If t <= 0 or x is not a d-vector
    """
    v = _vector(x, d)
    if t <= 0:
        raise InvalidArgumentError(f"t must be positive, got {t}")
    return float((2 * math.pi * t) ** (-d / 2) * math.exp(-float(v @ v) / (2 * t)))


def a2(x, t: float, d: int) -> float:
    """ISE two-point density t e^{-t^2/2} p_t(x); zero at t = 0."""
    _vector(x, d)
    if t < 0:
        raise InvalidArgumentError(f"t must be nonnegative, got {t}")
    if t == 0:
        return 0.0
    return t * math.exp(-t * t / 2) * gaussian_density(x, t, d)


def A2(x, d: int, q: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """
    A^(2)(x): the t-integral of a2 over [0, truncation].

    Raises:
        NumericalFailureError: On non-convergence, or at x = 0 for d >= 4 where the integral diverges
    """
    q = q or QuadratureSpec()
    v = _vector(x, d)
    r2 = float(v @ v)
    if r2 == 0 and d >= 4:
        raise NumericalFailureError("A2 diverges at the origin for d >= 4", error_estimate=math.inf)

    def integrand(t: float) -> float:
        if t <= 0:
            return 0.0
        return t * math.exp(-t * t / 2) * (2 * math.pi * t) ** (-d / 2) * math.exp(-r2 / (2 * t))

    result = adaptive_quad(integrand, 0.0, q.truncation, q)
    return QuadratureResult(result.value, result.error + q.tail_bound(1))


def am(assignment: EdgeAssignment) -> float:
    """
    m-point density (sum t) e^{-(sum t)^2/2} prod p_{t_j}(y_j).

    Returns 0 when every duration is zero.

    Raises:
        InvalidArgumentError: If some but not all durations are zero
    """
    times, ys = assignment.arrays()
    s = float(times.sum())
    if s == 0:
        return 0.0
    if np.any(times <= 0):
        raise InvalidArgumentError("am needs strictly positive durations unless all vanish")
    d = assignment.d
    log_density = float(np.sum(-(d / 2) * np.log(2 * np.pi * times) - np.sum(ys * ys, axis=1) / (2 * times)))
    return s * math.exp(-s * s / 2 + log_density)


def am_hat(shape: Shape, k, t) -> float:
    """Closed-form transform (sum t) e^{-(sum t)^2/2} prod e^{-|k_j|^2 t_j / 2}."""
    times = _durations(shape, t)
    ks = _edge_vectors(shape, k)
    s = float(times.sum())
    return s * math.exp(-s * s / 2 - float(np.sum(np.sum(ks * ks, axis=1) * times)) / 2)


class _SimplexRange:
    """nquad range for an inner duration: [0, R - (sum of outer durations)]."""

    def __init__(self, radius: float):
        self.radius = radius

    def __call__(self, *outer):
        return (0.0, max(self.radius - sum(outer), 0.0))


def _nquad(integrand, edges: int, q: QuadratureSpec) -> QuadratureResult:
    ranges = [_SimplexRange(q.truncation) for _ in range(edges - 1)] + [(0.0, q.truncation)]
    opts = {'epsabs': q.abs_tol, 'epsrel': q.rel_tol, 'limit': q.limit}
    with warnings.catch_warnings():
        warnings.simplefilter('error', integrate.IntegrationWarning)
        try:
            value, error = integrate.nquad(integrand, ranges, opts=opts)
        except integrate.IntegrationWarning as e:
            raise NumericalFailureError("iterated quadrature did not converge", detail=str(e))
    return QuadratureResult(float(value), float(error) + q.tail_bound(edges))


def Am(shape: Shape, y, d: int, q: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """
    A^(m)(sigma; y) by iterated adaptive quadrature over the durations (t_1 outermost).

    Args:
        shape: Shape with m <= 4
        y: Per-edge displacements, (2m-3) d-vectors
        d: Spatial dimension
        q: Quadrature settings

    Raises:
        UnsupportedError: If m > 4
        NumericalFailureError: On non-convergence or a divergent configuration
    """
    q = q or QuadratureSpec()
    if shape.m > 4:
        raise UnsupportedError("Am is limited to m <= 4")
    ys = _edge_vectors(shape, y, d)
    if shape.edge_count == 1:
        return A2(ys[0], d, q)

    sq = np.sum(ys * ys, axis=1).tolist()
    if d >= 2 and min(sq) == 0:
        raise NumericalFailureError("A^(m) diverges when an edge displacement vanishes in d >= 2", error_estimate=math.inf)
    norm = (2 * math.pi) ** (-d / 2)

    def integrand(*ts):
        # nquad passes the innermost variable first, so ts = (t_n, ..., t_1)
        s = sum(ts)
        if s <= 0 or min(ts) <= 0:
            return 0.0
        density = 1.0
        for t, r2 in zip(reversed(ts), sq):
            density *= norm * t ** (-d / 2) * math.exp(-r2 / (2 * t))
        return s * math.exp(-s * s / 2) * density

    return _nquad(integrand, shape.edge_count, q)


def simplex_profile(rates: Sequence[float], s: float) -> float:
    """
    Integral of prod_j e^{-rates_j t_j} over the slice {t >= 0, sum t = s}.

    Equal to the corner entry of exp(s B), where B is upper bidiagonal with
    -rates on the diagonal and ones above it; coincident rates need no
    special casing.
    """
    n = len(rates)
    if n == 1:
        return math.exp(-rates[0] * s)
    generator = np.diag(-np.asarray(rates, dtype=float)) + np.diag(np.ones(n - 1), k=1)
    return float(linalg.expm(s * generator)[0, n - 1])


def Am_hat(shape: Shape, k, q: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """
    Fourier transform of A^(m) by quadrature.

    The durations enter only through sum t and the exponential factors, so
    the (2m-3)-fold integral collapses to one adaptive integral over
    s = sum t of s e^{-s^2/2} times the simplex profile.

    Raises:
        UnsupportedError: If m > 5
        NumericalFailureError: On non-convergence
    """
    q = q or QuadratureSpec()
    if shape.m > 5:
        raise UnsupportedError("Am_hat is limited to m <= 5")
    ks = _edge_vectors(shape, k)
    rates = (np.sum(ks * ks, axis=1) / 2).tolist()

    def integrand(s: float) -> float:
        return s * math.exp(-s * s / 2) * simplex_profile(rates, s)

    result = adaptive_quad(integrand, 0.0, q.truncation, q)
    return QuadratureResult(result.value, result.error + q.tail_bound(shape.edge_count))


def Am_hat_iterated(shape: Shape, k, q: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """Tensor-order iterated quadrature of am_hat (m <= 3); slower reference for Am_hat."""
    q = q or QuadratureSpec()
    if shape.m > 3:
        raise UnsupportedError("iterated transform quadrature is limited to m <= 3")
    ks = _edge_vectors(shape, k)
    rates = (np.sum(ks * ks, axis=1) / 2).tolist()

    def integrand(*ts):
        s = sum(ts)
        exponent = sum(r * t for r, t in zip(rates, reversed(ts)))
        return s * math.exp(-s * s / 2 - exponent)

    return _nquad(integrand, shape.edge_count, q)


MASS_PROPOSAL_SCALE = 0.6


def _nested_outer(q: QuadratureSpec) -> QuadratureSpec:
    # outer tolerance stays above what the inner integrals resolve
    return replace(q, abs_tol=max(100 * q.abs_tol, 1e-8), rel_tol=max(100 * q.rel_tol, 1e-8))


def total_mass(shape: Shape, d: int = 1, q: Optional[QuadratureSpec] = None,
               points: int = 256, replicates: int = 4, seed: int = 0) -> QuadratureResult:
    """
    Integral of A^(m)(sigma; y) over all displacements in d = 1.

    Am is even in every coordinate. For one edge the y-integral over
    [0, inf) is an adaptive quadrature of A2. For more edges Am is
    integrated by randomized quasi-Monte Carlo: scrambled Sobol points are
    pushed through a Laplace proposal, and the spread of the replicate
    means gives the error.

    Args:
        shape: Shape with m <= 4
        d: Spatial dimension (only 1 is supported)
        q: Quadrature settings for the Am evaluations
        points: Sobol points per replicate (a power of two)
        replicates: Independent scrambles (>= 2)
        seed: Scrambling seed

    Returns:
        The mass and its error; the target is 1/(2m-5)!! per shape

    Raises:
        UnsupportedError: If d != 1
        InvalidArgumentError: If points is not a power of two or replicates < 2
    """
    q = q or QuadratureSpec()
    if d != 1:
        raise UnsupportedError("total mass by spatial quadrature is implemented for d = 1")
    if points < 1 or points & (points - 1):
        raise InvalidArgumentError(f"points must be a power of two, got {points}")
    if replicates < 2:
        raise InvalidArgumentError(f"need at least 2 replicates, got {replicates}")

    if shape.edge_count == 1:
        inner_error = 0.0

        def density(y: float) -> float:
            nonlocal inner_error
            result = A2([y], 1, q)
            inner_error = max(inner_error, result.error)
            return result.value

        half = adaptive_quad(density, 0.0, np.inf, _nested_outer(q))
        return QuadratureResult(2 * half.value, 2 * half.error + inner_error)

    inner = replace(q, abs_tol=max(q.abs_tol, 1e-7), rel_tol=max(q.rel_tol, 1e-6))
    proposal = stats.laplace(scale=MASS_PROPOSAL_SCALE)
    rng = np.random.default_rng(seed)
    means = []
    for _ in range(replicates):
        sobol = qmc.Sobol(d=shape.edge_count, scramble=True, seed=rng)
        u = np.clip(sobol.random_base2(int(math.log2(points))), 1e-12, 1 - 1e-12)
        ys = proposal.ppf(u)
        weights = np.prod(proposal.pdf(ys), axis=1)
        values = [Am(shape, y.reshape(-1, 1), 1, inner).value for y in ys]
        means.append(float(np.mean(np.asarray(values) / weights)))
    spread = float(np.std(means, ddof=1) / math.sqrt(replicates))
    return QuadratureResult(float(np.mean(means)), 3 * spread)


def route_frequencies(shape: Shape, k_tilde) -> np.ndarray:
    """
    Per-edge frequencies from the l = m-1 external frequencies.

    Edge j carries the sum of k_i over external vertices i whose path from 0 uses edge j.
    """
    kt = np.asarray(k_tilde, dtype=float)
    if kt.ndim == 1:
        kt = kt.reshape(-1, 1)
    if kt.shape[0] != shape.m - 1:
        raise InvalidArgumentError(f"expected {shape.m - 1} frequencies, got {kt.shape[0]}")
    routed = np.zeros((shape.edge_count, kt.shape[1]))
    for j, below in enumerate(edge_routing(shape)):
        for i in below:
            routed[j] += kt[i - 1]
    return routed


def moment_characteristic(l: int, k_tilde, d: int, q: Optional[QuadratureSpec] = None) -> QuadratureResult:
    """
    Characteristic function of the l-th ISE moment measure.

    Sums Am_hat over all (l+1)-shapes with routed frequencies. The value is
    real by the x -> -x symmetry.

    Raises:
        UnsupportedError: If l is outside 1..3
    """
    if not 1 <= l <= 3:
        raise UnsupportedError(f"moment characteristics are implemented for 1 <= l <= 3, got {l}")
    kt = np.asarray(k_tilde, dtype=float).reshape(l, -1)
    if kt.shape[1] != d:
        raise InvalidArgumentError(f"frequencies have dimension {kt.shape[1]}, expected {d}")
    value = 0.0
    error = 0.0
    for shape in enumerate_shapes(l + 1):
        part = Am_hat(shape, route_frequencies(shape, kt), q)
        value += part.value
        error += part.error
    return QuadratureResult(value, error)


def two_point_transform(k_norm: float, q: Optional[QuadratureSpec] = None) -> float:
    """Â^(2) as a function of |k|."""
    return Am_hat(enumerate_shapes(2)[0], [[k_norm]], q).value


def fit_scale(k_values, observed, q: Optional[QuadratureSpec] = None) -> float:
    """
    Fit c so that Â^(2)(c |k|) matches observed first-moment characteristics.

    A single point is solved exactly with brentq; several points use a
    least-squares fit seeded by the first point.

    Raises:
        InvalidArgumentError: If an observation lies outside (0, 1) or |k| = 0
    """
    ks = np.atleast_1d(np.asarray(k_values, dtype=float))
    if ks.ndim > 1:
        ks = np.linalg.norm(ks, axis=1)
    obs = np.atleast_1d(np.asarray(observed, dtype=float))
    if ks.shape != obs.shape or ks.size == 0:
        raise InvalidArgumentError("k_values and observed must be non-empty and of equal length")
    if np.any(ks <= 0) or np.any(obs <= 0) or np.any(obs >= 1):
        raise InvalidArgumentError("fitting needs |k| > 0 and observations strictly inside (0, 1)")

    def root(c: float) -> float:
        return two_point_transform(c * ks[0], q) - obs[0]

    upper = 1.0
    while root(upper) > 0:
        upper *= 2
        if upper > 1e6:
            raise InvalidArgumentError("observation too close to 1 to fit a scale")
    c0 = optimize.brentq(root, 0.0, upper, xtol=1e-12)
    if ks.size == 1:
        return float(c0)

    def model(kk, c):
        return np.array([two_point_transform(c * kv, q) for kv in kk])

    popt, _ = optimize.curve_fit(model, ks, obs, p0=[c0])
    return float(popt[0])
