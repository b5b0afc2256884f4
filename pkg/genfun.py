"""
Generating functions C^(m)_{z,zeta}(sigma; k) and their coefficients.

Coefficients live in Q[sqrt 2] because of the 2^{3/2} sqrt(1-z) term, so
exact work uses QSqrt2 numbers (a + b sqrt 2 with rational a, b).

Two exact routes are provided:

- table route (series_c2 / series_cm): truncated power series arithmetic,
  expanding sqrt(1-z) binomially and the zeta dependence geometrically;
- composition route (coefficient_exact / z_coefficient_exact): every
  factor is a function of w = sqrt(1-z), expanded in powers of
  v = 1 - w, whose z^n coefficients are known in closed form; this gives
  a single coefficient in O(n) terms.

The composition terms are all positive, so the same sums evaluated in
log-space floats (coefficient_float / z_coefficient_float) are stable for
irrational squared frequencies and large n.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering
from itertools import product
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from ise_numerics import QuadratureSpec, Am_hat, am_hat
from lab_errors import InvalidArgumentError, NumericalFailureError, ResourceLimitError, UnsupportedError
from shapes import Shape, enumerate_shapes

SQRT2 = math.sqrt(2.0)
ROOT_COEFF = 2 * SQRT2  # 2^{3/2}
DEFAULT_SERIES_BUDGET = 2_000_000

Rational = Union[int, Fraction]


@total_ordering
class QSqrt2:
    """Exact number a + b*sqrt(2) with rational a and b."""

    __slots__ = ('a', 'b')

    def __init__(self, a: Rational = 0, b: Rational = 0):
        self.a = Fraction(a)
        self.b = Fraction(b)

    @classmethod
    def coerce(cls, value) -> 'QSqrt2':
        if isinstance(value, QSqrt2):
            return value
        if isinstance(value, (int, Fraction)):
            return cls(value, 0)
        raise TypeError(f"cannot represent {value!r} exactly in Q[sqrt 2]")

    def __add__(self, other):
        o = QSqrt2.coerce(other)
        return QSqrt2(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return QSqrt2(-self.a, -self.b)

    def __sub__(self, other):
        return self + (-QSqrt2.coerce(other))

    def __rsub__(self, other):
        return QSqrt2.coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return QSqrt2(self.a * other, self.b * other)
        o = QSqrt2.coerce(other)
        return QSqrt2(self.a * o.a + 2 * self.b * o.b, self.a * o.b + self.b * o.a)

    __rmul__ = __mul__

    def norm(self) -> Fraction:
        """Field norm a^2 - 2 b^2; zero only for zero."""
        return self.a * self.a - 2 * self.b * self.b

    def inverse(self) -> 'QSqrt2':
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("QSqrt2 division by zero")
        return QSqrt2(self.a / n, -self.b / n)

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return QSqrt2(self.a / other, self.b / other)
        return self * QSqrt2.coerce(other).inverse()

    def __rtruediv__(self, other):
        return QSqrt2.coerce(other) * self.inverse()

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int):
            raise TypeError("QSqrt2 powers must be integers")
        base = self if exponent >= 0 else self.inverse()
        result = QSqrt2(1)
        e = abs(exponent)
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    def sign(self) -> int:
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sa == sb or sb == 0:
            return sa
        if sa == 0:
            return sb
        # opposite signs: compare a^2 with 2 b^2
        n = self.norm()
        return sa if n > 0 else (sb if n < 0 else 0)

    def __eq__(self, other):
        try:
            o = QSqrt2.coerce(other)
        except TypeError:
            return NotImplemented
        return self.a == o.a and self.b == o.b

    def __lt__(self, other):
        return (self - QSqrt2.coerce(other)).sign() < 0

    def __hash__(self):
        return hash((self.a, self.b))

    def __float__(self):
        if self.a == 0 or self.b == 0 or (self.a > 0) == (self.b > 0):
            return float(self.a) + float(self.b) * SQRT2
        # a + b sqrt2 = norm / (a - b sqrt2) avoids cancellation
        return float(self.norm()) / (float(self.a) - float(self.b) * SQRT2)

    def to_strings(self) -> Tuple[str, str]:
        """Lossless "p/q" strings for the rational and sqrt(2) parts."""
        return (f"{self.a.numerator}/{self.a.denominator}", f"{self.b.numerator}/{self.b.denominator}")

    def __repr__(self):
        return f"QSqrt2({self.a}, {self.b})"

    def __str__(self):
        return f"{self.a}+{self.b}*sqrt2" if self.b >= 0 else f"{self.a}-{-self.b}*sqrt2"


class PowerSeries:
    """Power series in z over Q[sqrt 2], truncated at a fixed order."""

    def __init__(self, coeffs: Sequence, order: int):
        padded = [QSqrt2.coerce(c) for c in coeffs[:order + 1]]
        padded += [QSqrt2()] * (order + 1 - len(padded))
        self.coeffs: List[QSqrt2] = padded
        self.order = order

    @classmethod
    def sqrt_one_minus_z(cls, order: int) -> 'PowerSeries':
        """Binomial series of (1 - z)^{1/2}."""
        coeffs = [Fraction(1)]
        for n in range(1, order + 1):
            coeffs.append(coeffs[-1] * Fraction(2 * n - 3, 2 * n))
        return cls(coeffs, order)

    def __add__(self, other):
        if isinstance(other, PowerSeries):
            return PowerSeries([x + y for x, y in zip(self.coeffs, other.coeffs)], self.order)
        out = list(self.coeffs)
        out[0] = out[0] + other
        return PowerSeries(out, self.order)

    __radd__ = __add__

    def __mul__(self, other):
        if not isinstance(other, PowerSeries):
            return PowerSeries([c * other for c in self.coeffs], self.order)
        out = []
        for n in range(self.order + 1):
            acc = QSqrt2()
            for j in range(n + 1):
                acc = acc + self.coeffs[j] * other.coeffs[n - j]
            out.append(acc)
        return PowerSeries(out, self.order)

    __rmul__ = __mul__

    def inverse(self) -> 'PowerSeries':
        c0 = self.coeffs[0]
        if c0 == 0:
            raise ZeroDivisionError("series with zero constant term has no inverse")
        inv0 = c0.inverse()
        out = [inv0]
        for n in range(1, self.order + 1):
            acc = QSqrt2()
            for j in range(1, n + 1):
                acc = acc + self.coeffs[j] * out[n - j]
            out.append(-(acc * inv0))
        return PowerSeries(out, self.order)

    def __getitem__(self, n: int) -> QSqrt2:
        return self.coeffs[n]

    def evaluate(self, z: complex) -> complex:
        total = 0j
        for c in reversed(self.coeffs):
            total = total * z + float(c)
        return total


def _rational(value, name: str) -> Fraction:
    try:
        q = Fraction(value)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be an exact rational, got {value!r}")
    if isinstance(value, float):
        raise InvalidArgumentError(f"{name} must be exact (int, Fraction or 'p/q'), got float {value!r}")
    if q < 0:
        raise InvalidArgumentError(f"{name} must be nonnegative, got {value!r}")
    return q


def _edge_columns(k2: Fraction, max_n: int, max_s: int) -> Tuple[Tuple[QSqrt2, ...], ...]:
    """Columns [s][n] of c_{n,s}^(2)(k) = 2^{s+1} [z^n] (k^2 + 2 + 2^{3/2} sqrt(1-z))^{-(s+1)}."""
    root = PowerSeries.sqrt_one_minus_z(max_n)
    denominator = root * QSqrt2(0, 2) + (k2 + 2)
    base = denominator.inverse() * 2
    columns = []
    power = base
    for _ in range(max_s + 1):
        columns.append(tuple(power.coeffs))
        power = power * base
    return tuple(columns)


def _z_series(k2s: Sequence[Fraction], max_n: int) -> Tuple[QSqrt2, ...]:
    """[z^n] of prod_j 2 / (k_j^2 + 2^{3/2} sqrt(1-z)) for n <= max_n."""
    root = PowerSeries.sqrt_one_minus_z(max_n)
    total = PowerSeries([1], max_n)
    for k2 in k2s:
        total = total * ((root * QSqrt2(0, 2) + k2).inverse() * 2)
    return tuple(total.coeffs)


def _convolve_at(columns: Sequence[Sequence[QSqrt2]], n: int) -> QSqrt2:
    acc = list(columns[0][:n + 1])
    for col in columns[1:]:
        acc = [
            sum((acc[j] * col[i - j] for j in range(i + 1)), QSqrt2())
            for i in range(n + 1)
        ]
    return acc[n]


@dataclass(frozen=True)
class SeriesTable:
    """
    Exact coefficients c_{n,s}^(m)(sigma; k) for n <= max_n and each s_j <= max_s.

    The zeta dependence is kept factored: each edge stores its m = 2 columns,
    and a coefficient is the z-convolution of one column per edge.
    """
    m: int
    shape: Shape
    k2: Tuple[Fraction, ...]
    max_n: int
    max_s: int
    edge_columns: Tuple[Tuple[Tuple[QSqrt2, ...], ...], ...] = field(repr=False)
    z_coefficients: Tuple[QSqrt2, ...] = field(repr=False)

    def coefficient(self, n: int, s: Sequence[int]) -> QSqrt2:
        """
        Raises:
            InvalidArgumentError: If (n, s) lies outside the table
        """
        s = tuple(s)
        if not 0 <= n <= self.max_n or len(s) != len(self.k2) or any(not 0 <= sj <= self.max_s for sj in s):
            raise InvalidArgumentError(f"index (n={n}, s={s}) outside table (max_n={self.max_n}, max_s={self.max_s})")
        return _convolve_at([self.edge_columns[j][sj] for j, sj in enumerate(s)], n)

    def items(self) -> Iterator[Tuple[Tuple[int, Tuple[int, ...]], QSqrt2]]:
        for n in range(self.max_n + 1):
            for s in product(range(self.max_s + 1), repeat=len(self.k2)):
                yield (n, s), self.coefficient(n, s)

    @property
    def coefficients(self) -> Dict[Tuple[int, Tuple[int, ...]], QSqrt2]:
        return dict(self.items())

    def marginal(self, n: int) -> QSqrt2:
        """Sum over s <= max_s of c_{n,s}, via the product of per-edge column sums."""
        sums = []
        for columns in self.edge_columns:
            sums.append([sum((col[i] for col in columns), QSqrt2()) for i in range(self.max_n + 1)])
        return _convolve_at(sums, n)

    def z_coefficient(self, n: int) -> QSqrt2:
        """c_n^(m) = [z^n] C^(m)_{z,1}; the untruncated zeta marginal."""
        return self.z_coefficients[n]

    def evaluate(self, z: complex, zetas: Sequence[complex]) -> complex:
        total = 0j
        for (n, s), c in self.items():
            term = float(c) * z ** n
            for zeta, sj in zip(zetas, s):
                term *= zeta ** sj
            total += term
        return total


def series_c2(max_n: int, max_s: int, k2, budget: int = DEFAULT_SERIES_BUDGET) -> SeriesTable:
    """
    Exact table of c_{n,s}^(2)(k) for n <= max_n, s <= max_s.

    Args:
        max_n: Highest z power
        max_s: Highest zeta power
        k2: Exact squared frequency (int, Fraction or "p/q")
        budget: Maximum number of table entries

    Raises:
        InvalidArgumentError: If k2 is not an exact nonnegative rational
        ResourceLimitError: If the table exceeds the budget
    """
    return series_cm(enumerate_shapes(2)[0], max_n, max_s, [k2], budget)


def series_cm(shape: Shape, max_n: int, max_s: int, k2s, budget: int = DEFAULT_SERIES_BUDGET) -> SeriesTable:
    """Exact table for an m-shape: the edgewise product of m = 2 tables, convolved in z."""
    if max_n < 0 or max_s < 0:
        raise InvalidArgumentError("max_n and max_s must be nonnegative")
    exact = tuple(_rational(k, 'k^2') for k in k2s)
    if len(exact) != shape.edge_count:
        raise InvalidArgumentError(f"expected {shape.edge_count} squared frequencies, got {len(exact)}")
    entries = (max_n + 1) * (max_s + 1) ** shape.edge_count
    if entries > budget:
        raise ResourceLimitError("series table exceeds the entry budget", required=entries, limit=budget)

    cache: Dict[Fraction, Tuple] = {}
    columns = []
    for k2 in exact:
        if k2 not in cache:
            cache[k2] = _edge_columns(k2, max_n, max_s)
        columns.append(cache[k2])
    return SeriesTable(
        m=shape.m,
        shape=shape,
        k2=exact,
        max_n=max_n,
        max_s=max_s,
        edge_columns=tuple(columns),
        z_coefficients=_z_series(exact, max_n),
    )


def v_power_coefficient(n: int, j: int) -> Fraction:
    """[z^n] (1 - sqrt(1-z))^j, exactly."""
    if j == 0:
        return Fraction(1 if n == 0 else 0)
    if n < j:
        return Fraction(0)
    return Fraction(j * math.comb(2 * n - j, n - j), (2 * n - j) * 2 ** j * 4 ** (n - j))


def _factor_taylor_exact(k2: Fraction, power: int, offset: int, order: int) -> List[QSqrt2]:
    """Sign-adjusted Taylor coefficients at w = 1 of 2^p (k^2 + offset + 2^{3/2} w)^{-p}."""
    c = QSqrt2(0, 2)
    beta_inv = QSqrt2(k2 + offset, 2).inverse()
    ratio = c * beta_inv
    out = [beta_inv ** power * 2 ** power]
    for i in range(1, order + 1):
        out.append(out[-1] * ratio * Fraction(power + i - 1, i))
    return out


def _compose_exact(factors: List[List[QSqrt2]], n: int) -> QSqrt2:
    g = _convolve_prefix(factors, n)
    return sum((g[j] * v_power_coefficient(n, j) for j in range(n + 1)), QSqrt2())


def _convolve_prefix(factors: List[List[QSqrt2]], n: int) -> List[QSqrt2]:
    acc = factors[0][:n + 1]
    for f in factors[1:]:
        acc = [sum((acc[j] * f[i - j] for j in range(i + 1)), QSqrt2()) for i in range(n + 1)]
    return acc


def coefficient_exact(n: int, s: Sequence[int], k2s) -> QSqrt2:
    """Single exact coefficient c_{n,s}^(m)(k) by composition at sqrt(1-z) = 1."""
    if n < 0 or any(sj < 0 for sj in s) or len(s) != len(k2s):
        raise InvalidArgumentError("need n >= 0 and one nonnegative s_j per squared frequency")
    factors = [_factor_taylor_exact(_rational(k2, 'k^2'), sj + 1, 2, n) for sj, k2 in zip(s, k2s)]
    return _compose_exact(factors, n)


def z_coefficient_exact(n: int, k2s) -> QSqrt2:
    """Single exact coefficient c_n^(m)(k) = [z^n] prod_j 2 / (k_j^2 + 2^{3/2} sqrt(1-z))."""
    if n < 0 or not len(k2s):
        raise InvalidArgumentError("need n >= 0 and at least one squared frequency")
    factors = [_factor_taylor_exact(_rational(k2, 'k^2'), 1, 0, n) for k2 in k2s]
    return _compose_exact(factors, n)


def _log_v_powers(n: int) -> np.ndarray:
    """log [z^n] v^j for j = 0..n (minus infinity where the coefficient vanishes)."""
    out = np.full(n + 1, -np.inf)
    if n == 0:
        out[0] = 0.0
        return out
    j = np.arange(1, n + 1, dtype=float)
    out[1:] = (
        np.log(j) - np.log(2 * n - j)
        + special.gammaln(2 * n - j + 1) - special.gammaln(n - j + 1) - special.gammaln(n + 1)
        - j * math.log(2) - 2 * (n - j) * math.log(2)
    )
    return out


def _compose_float(k2s: Sequence[float], powers: Sequence[int], offset: float, n: int) -> float:
    i = np.arange(n + 1, dtype=float)
    log_g = None
    for k2, p in zip(k2s, powers):
        if k2 < 0:
            raise InvalidArgumentError("squared frequencies must be nonnegative")
        beta = k2 + offset + ROOT_COEFF
        log_f = (
            p * math.log(2) + special.gammaln(p + i) - special.gammaln(p) - special.gammaln(i + 1)
            + i * math.log(ROOT_COEFF) - (p + i) * math.log(beta)
        )
        if log_g is None:
            log_g = log_f
        else:
            shift_a, shift_b = log_g.max(), log_f.max()
            conv = np.convolve(np.exp(log_g - shift_a), np.exp(log_f - shift_b))[:n + 1]
            with np.errstate(divide='ignore'):
                log_g = np.log(conv) + shift_a + shift_b
    return float(np.exp(special.logsumexp(log_g + _log_v_powers(n))))


def coefficient_float(n: int, s: Sequence[int], k2s: Sequence[float]) -> float:
    """c_{n,s}^(m)(k) in floating point for real squared frequencies."""
    if n < 0 or any(sj < 0 for sj in s) or len(s) != len(k2s):
        raise InvalidArgumentError("need n >= 0 and one nonnegative s_j per squared frequency")
    return _compose_float([float(k) for k in k2s], [sj + 1 for sj in s], 2.0, n)


def z_coefficient_float(n: int, k2s: Sequence[float]) -> float:
    """c_n^(m)(k) in floating point for real squared frequencies."""
    if n < 0:
        raise InvalidArgumentError("n must be nonnegative")
    return _compose_float([float(k) for k in k2s], [1] * len(k2s), 0.0, n)


def marginal_gap_bound(table: SeriesTable, n: int) -> float:
    """
    Upper bound on c_n - sum_{s <= max_s} c_{n,s}, the zeta-tail mass left out of the table.

    Edge j contributes sum_s rho_j^{s+1} zeta^s with
    rho_j = 2 / (beta_j + 2) and beta_j = k_j^2 + 2^{3/2} sqrt(1-z), and all
    z-coefficients involved are nonnegative. Charging every omitted s to
    an edge with s_j > max_s gives the majorant

        G(z) = sum_j rho_j^{max_s+2} / (1 - rho_j) * prod_{i != j} 2 / beta_i

    and [z^n] G <= G(r) / r^n for every 0 < r < 1. The bound decays
    geometrically in max_s.

    Raises:
        InvalidArgumentError: If n lies outside the table
    """
    if not 0 <= n <= table.max_n:
        raise InvalidArgumentError(f"n={n} outside table (max_n={table.max_n})")
    k2s = [float(k) for k in table.k2]
    power = table.max_s + 2

    def log_bound(r: float) -> float:
        betas = [k2 + ROOT_COEFF * math.sqrt(1 - r) for k2 in k2s]
        log_full = [math.log(2 / b) for b in betas]
        total = sum(log_full)
        terms = [total - lf + power * math.log(2 / (b + 2)) + math.log((b + 2) / b)
                 for b, lf in zip(betas, log_full)]
        return float(special.logsumexp(terms)) - n * math.log(r)

    found = optimize.minimize_scalar(log_bound, bounds=(1e-12, 1 - 1e-12), method='bounded',
                                     options={'xatol': 1e-12})
    candidates = [found.fun] + ([log_bound(n / (n + 1))] if n else [])
    return math.exp(min(candidates))


def eval_C2(k2: float, z: complex, zeta: complex) -> complex:
    """
    C^(2)_{z,zeta}(k) = 2 / (k^2 + 2^{3/2} sqrt(1-z) + 2(1-zeta)), principal square root.

    Raises:
        InvalidArgumentError: If k2 < 0, |z| >= 1 or |zeta| >= 1
    """
    if k2 < 0:
        raise InvalidArgumentError("k^2 must be nonnegative")
    if abs(z) >= 1 or abs(zeta) >= 1:
        raise InvalidArgumentError("need |z| < 1 and |zeta| < 1 (branch cut at z in [1, inf))")
    w = np.sqrt(complex(1 - z))
    return complex(2 / (k2 + ROOT_COEFF * w + 2 * (1 - zeta)))


def eval_Cm(k2s: Sequence[float], z: complex, zetas: Sequence[complex]) -> complex:
    if len(k2s) != len(zetas):
        raise InvalidArgumentError("one zeta per edge is required")
    value = 1 + 0j
    for k2, zeta in zip(k2s, zetas):
        value *= eval_C2(k2, z, zeta)
    return value


def b_coeff(s: Sequence[int], k2s: Sequence) -> Union[float, Fraction]:
    """
    b_s(k) = prod_j (1 + k_j^2 / 2)^{-(s_j + 1)}; exact when every k_j^2 is rational.

    Takes squared frequency norms.
    """
    if len(s) != len(k2s):
        raise InvalidArgumentError("s and k^2 vectors must have equal length")
    return math.prod((1 + k2 / 2) ** -(sj + 1) for sj, k2 in zip(s, k2s))


def verify_eq34(k2: float, t_values: Sequence[float], n: int) -> List[Dict[str, float]]:
    """Rows comparing b_{[tn]}(k n^{-1/2}) with e^{-k^2 t / 2}."""
    rows = []
    for t in t_values:
        s = math.floor(t * n)
        value = b_coeff([s], [k2 / n])
        target = math.exp(-k2 * t / 2)
        rows.append({'n': n, 'k2': k2, 't': t, 'value': float(value), 'target': target,
                     'abs_err': abs(float(value) - target)})
    return rows


@dataclass(frozen=True)
class ContourSpec:
    """Circle contour for coefficient extraction; radius None picks 1 - 1/(n+1)."""
    radius: Optional[float] = None
    nodes: int = 1024
    deformation: bool = False
    max_doublings: int = 6
    tolerance: float = 1e-12

    def __post_init__(self):
        if self.radius is not None and not 0 < self.radius < 1:
            raise InvalidArgumentError("contour radius must lie in (0, 1)")
        if self.nodes < 2 or self.nodes & (self.nodes - 1):
            raise InvalidArgumentError("node count must be a power of two")
        if self.deformation:
            raise UnsupportedError("branch-cut contour deformation is not implemented")

    def radius_for(self, n: int) -> float:
        if self.radius is not None:
            return self.radius
        return max(0.5, 1 - 1 / (n + 1))


class ContourResult(NamedTuple):
    value: float
    error: float
    imag: float
    nodes: int


class _NotSettled(Exception):
    pass


def _trapezoid(k2s: np.ndarray, n: int, radius: float, nodes: int) -> complex:
    theta = 2 * np.pi * np.arange(nodes) / nodes
    z = radius * np.exp(1j * theta)
    w = np.sqrt(1 - z)
    values = np.prod(2 / (k2s[:, None] + ROOT_COEFF * w[None, :]), axis=0)
    return complex(np.mean(values * np.exp(-1j * n * theta)) * radius ** (-n))


def contour_coeff(shape: Shape, n: int, k2s: Sequence[float], spec: Optional[ContourSpec] = None) -> ContourResult:
    """
    c_n^(m)(k) by the trapezoidal rule on a circle, doubling nodes until stable.

    Raises:
        NumericalFailureError: If successive doublings never agree within tolerance
    """
    spec = spec or ContourSpec()
    if n < 0:
        raise InvalidArgumentError("n must be nonnegative")
    k2 = np.asarray(k2s, dtype=float)
    if k2.shape != (shape.edge_count,) or np.any(k2 < 0):
        raise InvalidArgumentError(f"expected {shape.edge_count} nonnegative squared frequencies")
    radius = spec.radius_for(n)

    previous = _trapezoid(k2, n, radius, spec.nodes)
    nodes = spec.nodes
    try:
        for attempt in Retrying(
            stop=stop_after_attempt(spec.max_doublings),
            retry=retry_if_exception_type(_NotSettled),
            reraise=True,
        ):
            with attempt:
                nodes = spec.nodes * 2 ** attempt.retry_state.attempt_number
                current = _trapezoid(k2, n, radius, nodes)
                change = abs(current - previous)
                if change > spec.tolerance * max(1.0, abs(current)):
                    previous = current
                    raise _NotSettled(f"change {change:.3e} at {nodes} nodes")
    except _NotSettled as e:
        raise NumericalFailureError("contour inversion did not settle", error_estimate=abs(current - previous), detail=str(e))
    return ContourResult(current.real, change, current.imag, nodes)


def _target_transform(shape: Shape, k2s: Sequence[float], q: Optional[QuadratureSpec]) -> float:
    return Am_hat(shape, np.sqrt(np.asarray(k2s, dtype=float)).reshape(-1, 1), q).value


def verify_eq36(shape: Shape, k2s: Sequence[float], n_list: Sequence[int],
                q: Optional[QuadratureSpec] = None) -> List[Dict[str, float]]:
    """
    Ratios r_n = c_n^(m)(k n^{-1/4}) / [(2 pi)^{-1/2} n^{m-5/2} Â^(m)(k)].

    k2s are squared frequency norms; rescaling by n^{-1/4} divides them by sqrt(n).
    """
    if len(k2s) != shape.edge_count:
        raise InvalidArgumentError(f"expected {shape.edge_count} squared frequencies")
    transform = _target_transform(shape, k2s, q)
    rows = []
    for n in n_list:
        if n < 1:
            raise InvalidArgumentError("n must be >= 1")
        scaled = [float(k2) / math.sqrt(n) for k2 in k2s]
        coefficient = z_coefficient_float(n, scaled)
        target = n ** (shape.m - 2.5) * transform / math.sqrt(2 * math.pi)
        ratio = coefficient / target
        rows.append({'n': n, 'coefficient': coefficient, 'target': target, 'ratio': ratio, 'abs_err': abs(ratio - 1)})
    return rows


def verify_eq37(shape: Shape, k2s: Sequence[float], t: Sequence[float], n_list: Sequence[int],
                max_s: Optional[int] = None) -> List[Dict[str, float]]:
    """
    Ratios of c_{n, floor(t sqrt n)}^(m)(k n^{-1/4}) to (2 pi)^{-1/2} n^{-1} â^(m)(k, t).

    Raises:
        UnsupportedError: If m is not 2 or 3
        InvalidArgumentError: If some t_j <= 0
        ResourceLimitError: If a required s index exceeds max_s
    """
    if shape.m not in (2, 3):
        raise UnsupportedError("duration-resolved ratios are implemented for m = 2 and 3")
    if len(k2s) != shape.edge_count or len(t) != shape.edge_count:
        raise InvalidArgumentError(f"expected {shape.edge_count} squared frequencies and durations")
    if any(tj <= 0 for tj in t):
        raise InvalidArgumentError("durations must be positive")
    k_vectors = np.sqrt(np.asarray(k2s, dtype=float)).reshape(-1, 1)
    density = am_hat(shape, k_vectors, t)

    rows = []
    for n in n_list:
        s = [math.floor(tj * math.sqrt(n)) for tj in t]
        if max_s is not None and max(s) > max_s:
            raise ResourceLimitError(f"n={n} needs s index {max(s)}", required=max(s), limit=max_s)
        scaled = [float(k2) / math.sqrt(n) for k2 in k2s]
        coefficient = coefficient_float(n, s, scaled)
        target = density / (math.sqrt(2 * math.pi) * n)
        ratio = coefficient / target
        rows.append({'n': n, 's': ' '.join(map(str, s)), 'coefficient': coefficient, 'target': target,
                     'ratio': ratio, 'abs_err': abs(ratio - 1)})
    return rows
