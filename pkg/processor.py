"""
Core processing module for the ISE laboratory.

Provides a programmatic interface to every subcommand, so the CLI and the
tests drive the same code. Library modules never print; this layer turns
their progress events into status messages and writes results through
ResultWriter.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

import brw
import genfun
import ise_numerics
import lattice_trees
import percolation
import shapes
from config_handler import LabConfig
from csv_handler import ResultWriter, WrittenFile, format_rational
from lab_errors import InvalidArgumentError, LabError, exit_code_for
from processing_queue import SuiteJob, SuiteStatus, VerificationQueue

SUBCOMMANDS = ('shapes', 'ise', 'genfun', 'trees', 'brw', 'perc', 'verify')
SUITES = ('shapes', 'normalization', 'eq34', 'eq36', 'eq37', 'contour', 'trees', 'appendix', 'gw', 'perc', 'brw')

ProgressCallback = Optional[Callable[[str, Dict[str, Any]], None]]
StatusCallback = Optional[Callable[[str], None]]


class RunResults:
    """Container for one subcommand's results."""

    def __init__(self, subcommand: str):
        self.subcommand = subcommand
        self.output_files: List[WrittenFile] = []
        self.seeds: List[int] = []
        self.failures: List[str] = []
        self.suites: List[SuiteJob] = []
        self.summary: Dict[str, Any] = {}

    @property
    def passed(self) -> bool:
        return not self.failures and all(j.status == SuiteStatus.PASSED for j in self.suites)


@dataclass
class _Context:
    config: LabConfig
    writer: ResultWriter
    options: Dict[str, Any]
    status: Callable[[str], None]
    progress: ProgressCallback

    def get(self, key: str, default: Any = None) -> Any:
        value = self.options.get(key)
        return default if value is None else value

    @property
    def threads(self) -> int:
        return int(self.get('threads', self.config.threads))

    @property
    def seed(self) -> int:
        return int(self.get('seed', self.config.seed))

    @property
    def samples(self) -> int:
        return int(self.get('samples', self.config.samples))

    def lattice(self, default_d: int = 2) -> lattice_trees.LatticeModel:
        return lattice_trees.LatticeModel(
            d=int(self.get('d', default_d)),
            flavor=self.get('flavor', 'nearest-neighbour'),
            L=int(self.get('L', 1)),
        )


def _k_label(k: Sequence[float]) -> str:
    return ' '.join(f"{float(v):g}" for v in np.ravel(k))


def _site_label(x: Sequence[int]) -> str:
    return ' '.join(str(int(c)) for c in x)


def _k_points(grid: Optional[Sequence], d: int, default: Sequence[float]) -> List[np.ndarray]:
    """Each grid point is a d-vector; a scalar k stands for (k, 0, ..., 0)."""
    points = []
    for point in (grid if grid is not None else default):
        vec = np.atleast_1d(np.asarray(point, dtype=float))
        if vec.size == 1:
            full = np.zeros(d)
            full[0] = vec[0]
            vec = full
        if vec.size != d:
            raise InvalidArgumentError(f"k-grid point {point} does not have {d} components")
        points.append(vec)
    return points


def _fraction(value: Any, name: str) -> Fraction:
    """Parse a user-supplied rational ("1/2", "0.25", 3)."""
    try:
        return Fraction(value)
    except (ValueError, TypeError, ZeroDivisionError):
        raise InvalidArgumentError(f"{name} must be a rational such as 1/2 or 0.25, got {value!r}")


def _shape_at(m: int, index: int) -> shapes.Shape:
    found = shapes.enumerate_shapes(m)
    if not 0 <= index < len(found):
        raise InvalidArgumentError(f"shape index must be in 0..{len(found) - 1} for m={m}, got {index}")
    return found[index]


def _exact_k2s(values: Sequence, edges: int) -> List[Fraction]:
    exact = [_fraction(v, "k2") for v in values]
    if len(exact) == 1:
        exact = exact * edges
    if len(exact) != edges:
        raise InvalidArgumentError(f"expected 1 or {edges} squared frequencies, got {len(exact)}")
    return exact


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _run_shapes(ctx: _Context, results: RunResults):
    m = int(ctx.get('m', 4))
    ctx.status(f"Enumerating {m}-shapes...")
    found = shapes.enumerate_shapes(m)
    document = {
        'm': m,
        'count': len(found),
        'shapes': [shapes.shape_to_json(s) for s in found],
    }
    results.output_files.append(ctx.writer.write_json(f"shapes_m{m}", document))
    results.summary['count'] = len(found)
    ctx.status(f"✓ {len(found)} shapes")


def _run_ise(ctx: _Context, results: RunResults):
    m = int(ctx.get('m', 2))
    d = int(ctx.get('d', 1))
    q = ctx.config.quadrature_spec()
    rows = []
    x_grid = ctx.get('x_grid')
    for index, shape in enumerate(shapes.enumerate_shapes(m)):
        E = shape.edge_count
        if x_grid is not None:
            for x in _k_points(x_grid, d, []):
                result = ise_numerics.Am(shape, np.tile(x, (E, 1)), d, q)
                rows.append({'m': m, 'sigma_index': index, 'x': _k_label(x),
                             'value': result.value, 'error_estimate': result.error})
        else:
            for k in _k_points(ctx.get('k_grid'), d, [0.0, 0.5, 1.0, 2.0, 4.0]):
                result = ise_numerics.Am_hat(shape, np.tile(k, (E, 1)), q)
                rows.append({'m': m, 'sigma_index': index, 'k': _k_label(k),
                             'value': result.value, 'error_estimate': result.error})
        ctx.status(f"✓ shape {index}")
    if x_grid is not None:
        stem, key = f"ise_density_m{m}_d{d}", 'x'
    else:
        stem, key = f"ise_transform_m{m}_d{d}", 'k'
    results.output_files.append(ctx.writer.write_table(stem, rows, sort_by=['sigma_index', key]))


def _run_genfun(ctx: _Context, results: RunResults):
    m = int(ctx.get('m', 2))
    shape = _shape_at(m, int(ctx.get('shape_index', 0)))
    k2s = _exact_k2s(ctx.get('k2', ['0']), shape.edge_count)
    max_n = int(ctx.get('n_max', 10))
    max_s = int(ctx.get('s_max', 5))
    ctx.status(f"Building series table m={m}, n <= {max_n}, s <= {max_s}...")
    table = genfun.series_cm(shape, max_n, max_s, k2s, budget=ctx.config.series_max_entries)

    coefficients = []
    for (n, s), c in table.items():
        a, b = c.to_strings()
        coefficients.append({'n': n, 's': list(s), 'a': a, 'b': b})
    z_coefficients = []
    for n in range(max_n + 1):
        a, b = table.z_coefficient(n).to_strings()
        z_coefficients.append({'n': n, 'a': a, 'b': b, 'gap_bound': genfun.marginal_gap_bound(table, n)})
    document = {
        'm': m,
        'shape': shapes.shape_to_json(shape),
        'k2': [format_rational(k) for k in k2s],
        'max_n': max_n,
        'max_s': max_s,
        'coefficients': coefficients,
        'z_coefficients': z_coefficients,
    }
    results.output_files.append(ctx.writer.write_json(f"genfun_m{m}", document))

    n_list = ctx.get('n_list')
    if n_list:
        rows = genfun.verify_eq36(shape, [float(k) for k in k2s], [int(n) for n in n_list], ctx.config.quadrature_spec())
        results.output_files.append(ctx.writer.write_table(f"genfun_ratios_m{m}", rows, sort_by=['n']))
    ctx.status(f"✓ {len(coefficients)} coefficients")


def _run_trees(ctx: _Context, results: RunResults):
    model = ctx.lattice()
    n = int(ctx.get('n', 2))
    max_n = ctx.config.tree_max_n
    ctx.status(f"Counting {n}-bond lattice trees on the {model.label()} lattice...")
    t1 = lattice_trees.one_point(model, n, ctx.threads, max_n, ctx.progress)
    results.summary['t1'] = t1
    results.output_files.append(ctx.writer.write_table(
        f"trees_one_point_n{n}", [{'d': model.d, 'flavor': model.flavor, 'L': model.L, 'n': n, 't': t1}]))

    m = ctx.get('m')
    if m is not None:
        table = lattice_trees.count_tm(model, n, int(m), ctx.threads, max_n, progress_callback=ctx.progress)
        marginal, full = lattice_trees.p_tables(table) if table.total() else ({}, {})
        rows = []
        for (sigma, y, s), count in table.as_dict().items():
            rows.append({'sigma_index': sigma, 'y': ' | '.join(_site_label(v) for v in y),
                         's': _site_label(s), 'count': count, 'probability': full.get((sigma, y, s), Fraction(0))})
        results.output_files.append(ctx.writer.write_table(
            f"trees_tm_m{m}_n{n}", rows, sort_by=['sigma_index', 'y', 's']))
        results.summary['tm_total'] = table.total()

    l = ctx.get('l')
    if l is not None:
        table = lattice_trees.s_u_e_decompose(model, n, int(l), ctx.threads, max_n, progress_callback=ctx.progress)
        ratios = table.ratio_table()
        rows = []
        for pts, s, u, e in zip(table.points, table.s, table.u, table.e):
            marks = tuple(tuple(int(c) for c in x) for x in pts)
            rows.append({'x': ' | '.join(_site_label(x) for x in marks), 's': int(s), 'u': int(u), 'e': int(e),
                         'ratio': ratios[marks]})
        results.output_files.append(ctx.writer.write_table(f"trees_sue_l{l}_n{n}", rows, sort_by=['x']))
        report = lattice_trees.verify_A9(model, n, int(l), table=table)
        report['identity'] = table.identity_holds()
        results.output_files.append(ctx.writer.write_json(f"trees_overcount_l{l}_n{n}", report))
        if not report['holds'] or not report['identity']:
            results.failures.append(f"decomposition check failed at n={n}, l={l}")


def _run_brw(ctx: _Context, results: RunResults):
    d = int(ctx.get('d', 2))
    n = int(ctx.get('n', 1025))
    law = brw.OffspringLaw(_fraction(ctx.get('p0', '1/2'), 'p0'))
    config = brw.BrwConfig(d=d, n=n, seed=ctx.seed, samples=ctx.samples, law=law)
    results.seeds.append(config.seed)
    ctx.status(f"Sampling {config.samples} conditioned trees of size {n}...")
    measures = brw.sample_measures(config, ctx.threads, ctx.progress)

    grid = _k_points(ctx.get('k_grid'), d, [0.5, 1.0, 1.5, 2.0, 2.5])
    nonzero = [i for i, k in enumerate(grid) if np.linalg.norm(k) > 0]
    if nonzero:
        rows = brw.compare_with_ise(measures, grid, reference=nonzero[0], q=ctx.config.quadrature_spec(),
                                    seed=config.seed)
    else:
        rows = []
        for k in grid:
            est = brw.empirical_char(measures, k, 1, seed=config.seed)
            rows.append({'k': _k_label(k), 're': est.value.real, 'im': est.value.imag, 'stderr': est.stderr,
                         'ci_low': est.ci_low, 'ci_high': est.ci_high})
    results.output_files.append(ctx.writer.write_table(f"brw_d{d}_n{n}", rows, sort_by=['k']))


def _run_perc(ctx: _Context, results: RunResults):
    lattice = ctx.lattice()
    n = int(ctx.get('n', 3))
    mode = ctx.get('mode', 'exact')
    p = ctx.get('p')
    if p is None:
        model = percolation.PercModel.at_literature_pc(lattice)
    else:
        model = percolation.PercModel(lattice, _fraction(p, 'p'))
    grid = _k_points(ctx.get('k_grid'), lattice.d, [0.5, 1.0, 2.0])
    stem = f"perc_{mode}_d{lattice.d}_n{n}"

    if mode == 'exact':
        ctx.status(f"Enumerating {n}-site clusters at p = {model.p}...")
        table = percolation.tau2_table(model, n, ctx.config.animal_max_n)
        rows = [{'x': _site_label(x), 'n': n, 'probability': w} for x, w in table.items()]
        results.output_files.append(ctx.writer.write_table(stem, rows, sort_by=['x']))
        chars = [{'k': _k_label(k), 'value': percolation.exact_nu_char(model, n, 1, k, max_n=ctx.config.animal_max_n)}
                 for k in grid]
        results.output_files.append(ctx.writer.write_table(f"{stem}_char", chars, sort_by=['k']))
    elif mode == 'mc':
        results.seeds.append(ctx.seed)
        ctx.status(f"Sampling {ctx.samples} clusters of size {n} at p = {float(model.p):g}...")
        samples = percolation.mc_clusters(model, n, ctx.samples, ctx.seed,
                                          acceptance_floor=ctx.config.acceptance_floor,
                                          progress_callback=ctx.progress)
        hits: Dict[Tuple[int, ...], int] = {}
        for cluster in samples:
            for x in cluster.sites:
                hits[x] = hits.get(x, 0) + 1
        total = len(samples)
        rows = [{'x': _site_label(x), 'n': n, 'probability': c / total,
                 'stderr': math.sqrt(c / total * (1 - c / total) / total)} for x, c in sorted(hits.items())]
        results.output_files.append(ctx.writer.write_table(stem, rows, sort_by=['x']))
        chars = []
        for k in grid:
            est = percolation.nu_moment_char(samples, 1, k, seed=ctx.seed)
            chars.append({'k': _k_label(k), 're': est.value.real, 'im': est.value.imag, 'stderr': est.stderr,
                          'ci_low': est.ci_low, 'ci_high': est.ci_high})
        results.output_files.append(ctx.writer.write_table(f"{stem}_char", chars, sort_by=['k']))
    else:
        raise InvalidArgumentError(f"perc mode must be 'exact' or 'mc', got {mode!r}")


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------

SuiteOutcome = Tuple[List[Dict[str, Any]], List[str]]


def _suite_shapes(ctx: _Context) -> SuiteOutcome:
    rows, failures = [], []
    for m in range(2, 8):
        count = len(shapes.enumerate_shapes(m))
        expected = shapes.double_factorial_count(m)
        distinct = len({shapes.canonical_form(s) for s in shapes.enumerate_shapes(m)})
        rows.append({'m': m, 'count': count, 'expected': expected, 'distinct': distinct})
        if count != expected or distinct != count:
            failures.append(f"m={m}: {count} shapes ({distinct} distinct), expected {expected}")
    for m in range(2, 7):
        if shapes.load_golden(m) != shapes.enumerate_shapes(m):
            failures.append(f"m={m}: enumeration differs from the golden file")
    return rows, failures


def _suite_normalization(ctx: _Context) -> SuiteOutcome:
    q = ctx.config.quadrature_spec()
    # spatial mass of the density: deterministic for m = 2, quasi-Monte Carlo for m = 3
    mass_tolerance = {2: 1e-6, 3: 0.05}
    rows, failures = [], []
    for m in range(2, 6):
        shape = shapes.enumerate_shapes(m)[0]
        target = 1 / shapes.double_factorial_count(m)
        at_zero = ise_numerics.Am_hat(shape, np.zeros((shape.edge_count, 1)), q)
        row = {'m': m, 'transform_at_zero': at_zero.value, 'target': target}
        if m in mass_tolerance:
            mass = ise_numerics.total_mass(shape, 1, q, points=64, seed=ctx.seed)
            row.update(total_mass=mass.value, mass_error=mass.error)
            if abs(mass.value - target) > max(mass_tolerance[m], 4 * mass.error):
                failures.append(f"m={m}: total mass {mass.value:.10g} differs from {target:.10g}")
        rows.append(row)
        if abs(at_zero.value - target) > 1e-8:
            failures.append(f"m={m}: transform at zero {at_zero.value:.12g} differs from {target:.10g}")
    return rows, failures


def _suite_eq34(ctx: _Context) -> SuiteOutcome:
    n = int(ctx.get('n', 1000))
    grid = [0.5, 1.0, 2.0]
    rows = []
    for k2 in grid:
        rows.extend(genfun.verify_eq34(k2, grid, n))
    failures = [f"k2={r['k2']}, t={r['t']}: error {r['abs_err']:.3e}" for r in rows if r['abs_err'] >= 2e-3]
    return rows, failures


def _suite_eq36(ctx: _Context) -> SuiteOutcome:
    m = int(ctx.get('m', 2))
    shape = shapes.enumerate_shapes(m)[0]
    n_list = [int(n) for n in ctx.get('n_list', [100, 400])]
    rows = genfun.verify_eq36(shape, [0.0] * shape.edge_count, n_list, ctx.config.quadrature_spec())
    failures = []
    if m == 2:
        limits = {100: 0.01, 400: 0.005}
        for r in rows:
            if r['n'] in limits and r['abs_err'] > limits[r['n']]:
                failures.append(f"n={r['n']}: ratio {r['ratio']:.6f} outside {limits[r['n']]:.1%}")
    if len(rows) > 1 and rows[-1]['abs_err'] > rows[0]['abs_err']:
        failures.append("ratio error does not decrease with n")
    return rows, failures


def _suite_eq37(ctx: _Context) -> SuiteOutcome:
    shape = shapes.enumerate_shapes(2)[0]
    n_list = [int(n) for n in ctx.get('n_list', [400, 1600])]
    rows = genfun.verify_eq37(shape, [0.0], [1.0], n_list)
    failures = []
    first, last = rows[0], rows[-1]
    if first['n'] == 400 and first['abs_err'] > 0.1:
        failures.append(f"n=400: ratio {first['ratio']:.6f} outside 10%")
    if len(rows) > 1 and last['abs_err'] > first['abs_err']:
        failures.append("ratio error does not decrease with n")
    return rows, failures


def _suite_contour(ctx: _Context) -> SuiteOutcome:
    spec = ctx.config.contour_spec()
    n_max = int(ctx.get('n', 30))
    rows, failures = [], []
    for m in (2, 3, 4):
        shape = shapes.enumerate_shapes(m)[0]
        for k2 in (0, 1):
            k2s = [k2] * shape.edge_count
            for n in range(n_max + 1):
                exact = float(genfun.z_coefficient_exact(n, k2s))
                result = genfun.contour_coeff(shape, n, k2s, spec)
                err = abs(result.value - exact)
                rows.append({'m': m, 'k2': k2, 'n': n, 'exact': exact, 'contour': result.value,
                             'abs_err': err, 'nodes': result.nodes})
                if err > 1e-10:
                    failures.append(f"m={m}, k2={k2}, n={n}: contour error {err:.3e}")
    return rows, failures


def _suite_trees(ctx: _Context) -> SuiteOutcome:
    model = ctx.lattice()
    n_max = int(ctx.get('n', 4))
    rows, failures = [], []
    for n in range(0, n_max + 1):
        for l in (1, 2, 3):
            table = lattice_trees.s_u_e_decompose(model, n, l, ctx.threads, ctx.config.tree_max_n,
                                                  progress_callback=ctx.progress)
            report = lattice_trees.verify_A9(model, n, l, table=table)
            total_ok = table.total('s') == (n + 1) ** l * table.t1
            rows.append({'n': n, 'l': l, 't1': table.t1, 's_total': table.total('s'),
                         'e_total': table.total('e'), 'lhs': report['lhs_zero'], 'rhs': report['rhs'],
                         'sum_rule': total_ok, 'split': table.identity_holds(), 'bound': report['holds']})
            if not total_ok:
                failures.append(f"n={n}, l={l}: s total differs from (n+1)^l t_n")
            if not table.identity_holds():
                failures.append(f"n={n}, l={l}: s != u + e")
            if not report['holds']:
                failures.append(f"n={n}, l={l}: over-counting bound violated")
    return rows, failures


def _suite_appendix(ctx: _Context) -> SuiteOutcome:
    failures = []
    model = lattice_trees.LatticeModel(2)
    marks = ((0, 0), (0, 0), (1, 0))
    table = lattice_trees.s_u_e_decompose(model, 1, 3)
    s, _, _ = table.entry(marks)
    hits = table.hits_at(marks)
    rows = [{'case': 'single-bond', 's': s, 'compatible': hits, 'excess': hits - s}]
    if s != 1 or hits != 3:
        failures.append(f"single-bond example: s={s}, compatible shapes={hits}")

    tree, golden_marks, expected = lattice_trees.load_backbone_golden()
    record = lattice_trees.backbone(tree, golden_marks)
    found = record.embedding(expected['shape_index'])
    rows.append({'case': 'golden-tree', 's': sum(found.s), 'compatible': len(record.compatible),
                 'excess': len(record.compatible) - 1})
    if list(record.compatible) != list(expected['compatible']):
        failures.append(f"golden tree compatible with {record.compatible}")
    if [list(v) for v in found.y] != expected['y'] or list(found.s) != expected['s']:
        failures.append("golden tree backbone data differs")
    return rows, failures


def _suite_gw(ctx: _Context) -> SuiteOutcome:
    law = percolation.gw_cluster_law(10_000)
    slope = percolation.gw_slope(law, 100, 10_000)
    rows = [{'n_min': 100, 'n_max': 10_000, 'slope': slope, 'target': -1.5}]
    failures = [] if abs(slope + 1.5) <= 0.05 else [f"slope {slope:.4f} outside -1.5 +/- 0.05"]
    return rows, failures


def _suite_perc(ctx: _Context) -> SuiteOutcome:
    lattice = lattice_trees.LatticeModel(2)
    model = percolation.PercModel(lattice, Fraction(1, 2))
    samples = ctx.samples
    rows, failures = [], []
    for n in range(1, int(ctx.get('n', 4)) + 1):
        law = percolation.cluster_shape_law(model, n, ctx.config.animal_max_n)
        clusters = percolation.mc_clusters(model, n, samples, ctx.seed + n,
                                           acceptance_floor=ctx.config.acceptance_floor,
                                           progress_callback=ctx.progress)
        seen: Dict[frozenset, int] = {}
        for c in clusters:
            seen[c.sites] = seen.get(c.sites, 0) + 1
        keys = sorted(law, key=sorted)
        observed = np.array([seen.get(key, 0) for key in keys], dtype=float)
        expected = np.array([float(law[key]) * samples for key in keys])
        if len(keys) > 1:
            p_value = float(stats.chisquare(observed, expected).pvalue)
        else:
            p_value = 1.0
        sigma = np.sqrt(expected * (1 - expected / samples))
        z = np.where(sigma > 0, np.abs(observed - expected) / np.where(sigma > 0, sigma, 1), 0)
        rows.append({'n': n, 'shapes': len(keys), 'samples': samples, 'max_z': float(z.max()),
                     'beyond_3_sigma': int((z > 3).sum()), 'p_value': p_value})
        if sum(seen.values()) != samples or set(seen) - set(law):
            failures.append(f"n={n}: sampled a cluster outside the exact law")
        if p_value < 1e-3:
            failures.append(f"n={n}: cluster frequencies reject the exact law (p={p_value:.2e})")
    return rows, failures


def _suite_brw(ctx: _Context) -> SuiteOutcome:
    d = int(ctx.get('d', 2))
    n = int(ctx.get('n', 4096))
    p0 = _fraction(ctx.get('p0', '1/4' if n % 2 == 0 else '1/2'), 'p0')
    config = brw.BrwConfig(d=d, n=n, seed=ctx.seed, samples=ctx.samples, law=brw.OffspringLaw(p0))
    measures = brw.sample_measures(config, ctx.threads, ctx.progress)
    grid = _k_points(ctx.get('k_grid'), d, [0.5, 1.0, 1.5, 2.0, 2.5])
    rows = brw.compare_with_ise(measures, grid, reference=0, q=ctx.config.quadrature_spec(), seed=ctx.seed)
    failures = [f"k={r['k']}: {r['z']:.2f} standard errors from the ISE target" for r in rows if r['z'] > 3]
    return rows, failures


SUITE_RUNNERS: Dict[str, Callable[[_Context], SuiteOutcome]] = {
    'shapes': _suite_shapes,
    'normalization': _suite_normalization,
    'eq34': _suite_eq34,
    'eq36': _suite_eq36,
    'eq37': _suite_eq37,
    'contour': _suite_contour,
    'trees': _suite_trees,
    'appendix': _suite_appendix,
    'gw': _suite_gw,
    'perc': _suite_perc,
    'brw': _suite_brw,
}


def _run_verify(ctx: _Context, results: RunResults):
    names = ctx.get('suite') or list(SUITES)
    if isinstance(names, str):
        names = [names]
    unknown = [name for name in names if name not in SUITE_RUNNERS]
    if unknown:
        raise InvalidArgumentError(f"unknown suite(s): {', '.join(unknown)}")

    queue = VerificationQueue(names)
    while (job := queue.get_next_job()) is not None:
        queue.mark_running(job)
        ctx.status(f"Running suite {job.name}...")
        try:
            rows, failures = SUITE_RUNNERS[job.name](ctx)
        except LabError as e:
            queue.mark_error(job, str(e), exit_code_for(e))
            ctx.status(f"✗ {job.name}: {e}")
        else:
            written = ctx.writer.write_table(f"verify_{job.name}", rows)
            results.output_files.append(written)
            queue.mark_completed(job, {'rows': rows, 'failures': failures, 'output_files': [written.path]})
            glyph = '✓' if not failures else '✗'
            ctx.status(f"{glyph} {job.name}: {len(rows)} rows, {len(failures)} failure(s)")
        if ctx.progress:
            ctx.progress('suite_complete', {'suite': job.name, 'status': job.status.value, 'failures': job.failures})

    results.suites = queue.get_all_jobs()
    results.failures = [f"{j.name}: {f}" for j in results.suites for f in j.failures]
    results.failures += [f"{j.name}: {j.error_message}" for j in results.suites if j.status == SuiteStatus.ERROR]
    results.summary.update(queue.get_queue_status())
    results.summary['exit_code'] = queue.exit_code()
    results.seeds.append(ctx.seed)


HANDLERS: Dict[str, Callable[[_Context, RunResults], None]] = {
    'shapes': _run_shapes,
    'ise': _run_ise,
    'genfun': _run_genfun,
    'trees': _run_trees,
    'brw': _run_brw,
    'perc': _run_perc,
    'verify': _run_verify,
}


def run_subcommand(
    name: str,
    options: Dict[str, Any],
    output_dir: Path,
    config: Optional[LabConfig] = None,
    progress_callback: ProgressCallback = None,
    status_callback: StatusCallback = None
) -> RunResults:
    """
    Run one subcommand and write its outputs.

    Args:
        name: Subcommand name, one of SUBCOMMANDS
        options: Parsed flag values; None entries fall back to config defaults
        output_dir: Directory where output files will be saved
        config: Laboratory configuration (defaults if omitted)
        progress_callback: Optional callback for progress updates.
                          Called with (event_type, data) where event_type is:
                          - 'shard_done': data={'shard', 'count'}
                          - 'sample_batch': data={'accepted', 'rejected'}
                          - 'suite_complete': data={'suite', 'status', 'failures'}
        status_callback: Optional callback for status messages (single string)

    Returns:
        RunResults with written files, seeds and failures

    Raises:
        InvalidArgumentError: If the subcommand is unknown or options are invalid
        LabError: Whatever the underlying operation raises
    """
    if name not in HANDLERS:
        raise InvalidArgumentError(f"unknown subcommand {name!r}; expected one of {', '.join(SUBCOMMANDS)}")

    def status(msg: str):
        if status_callback:
            status_callback(msg)

    ctx = _Context(
        config=config or LabConfig(),
        writer=ResultWriter(output_dir),
        options=dict(options),
        status=status,
        progress=progress_callback,
    )
    results = RunResults(name)
    HANDLERS[name](ctx, results)
    return results
