#!/usr/bin/env python3
"""
ISE laboratory command line.

Every module is exposed as a subcommand. Each output file gets a
<stem>.manifest.json beside it recording the flags, seeds, code version,
wall time and the SHA-256 digest of the output.

Exit codes: 0 success, 1 verification failure, 2 usage or invalid
argument, 3 numerical failure, 4 resource limit.
"""

import argparse
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from config_handler import LabConfig
from csv_handler import ResultWriter
from lab_errors import EXIT_CODES, LabError, exit_code_for
from processing_queue import SuiteStatus
from processor import SUITES, RunResults, run_subcommand
from progress_tracker import ProgressTracker

__version__ = '0.1.0'

__all__ = ['EXIT_CODES', 'RunManifest', 'dispatch', 'main']


@dataclass
class RunManifest:
    """Provenance record written beside one output file."""
    subcommand: str
    flags: Dict[str, Any]
    seeds: List[int] = field(default_factory=list)
    version: str = __version__
    wall_time: float = 0.0
    output: str = ''
    digest: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def parse_vector(text: str) -> List[float]:
    """A k-grid point: "1.5" or comma-separated components "1,0"."""
    try:
        return [float(part) for part in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a vector: {text!r}")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('--out', '-o', help='Output directory (default: config, $ISE_LAB_OUTPUT_DIR, or ./output)')
    parser.add_argument('--threads', type=int, help='Worker processes for enumeration and sampling')
    parser.add_argument('--config', '-c', help='Path to a YAML configuration file')
    parser.add_argument('--quiet', '-q', action='store_true', help='Suppress status output')


def _add_lattice(parser: argparse.ArgumentParser, default_d: int = 2):
    parser.add_argument('--d', type=int, default=default_d, help=f'Dimension (default: {default_d})')
    parser.add_argument('--flavor', default='nearest-neighbour',
                        help='nearest-neighbour (nn) or spread-out (so)')
    parser.add_argument('--L', type=int, default=1, help='Spread-out range (default: 1)')


def _add_sampling(parser: argparse.ArgumentParser):
    parser.add_argument('--samples', type=int, help='Monte Carlo sample count (default: from config)')
    parser.add_argument('--seed', type=int, help='Base seed (default: from config)')
    parser.add_argument('--k-grid', dest='k_grid', nargs='+', type=parse_vector,
                        help='Frequency points, e.g. 0.5 1 2 or 1,0 0,1')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ise_lab',
        description='Numerical laboratory for ISE scaling limits of trees, branching walks and clusters'
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='subcommand', required=True)

    p = sub.add_parser('shapes', help='Enumerate m-shapes as JSON')
    _add_common(p)
    p.add_argument('--m', type=int, default=4, help='Number of external vertices (default: 4)')

    p = sub.add_parser('ise', help='ISE densities and Fourier transforms by quadrature')
    _add_common(p)
    p.add_argument('--m', type=int, default=2)
    p.add_argument('--d', type=int, default=1)
    p.add_argument('--k-grid', dest='k_grid', nargs='+', type=parse_vector, help='Frequencies (transform mode)')
    p.add_argument('--x-grid', dest='x_grid', nargs='+', type=parse_vector, help='Displacements (density mode)')

    p = sub.add_parser('genfun', help='Exact generating-function coefficient tables')
    _add_common(p)
    p.add_argument('--m', type=int, default=2)
    p.add_argument('--shape-index', dest='shape_index', type=int, default=0)
    p.add_argument('--n-max', dest='n_max', type=int, default=10)
    p.add_argument('--s-max', dest='s_max', type=int, default=5)
    p.add_argument('--k2', nargs='+', default=['0'], help='Exact squared frequencies "p/q", one or one per edge')
    p.add_argument('--n-list', dest='n_list', nargs='+', type=int, help='Also write ratio tables at these n')

    p = sub.add_parser('trees', help='Lattice-tree enumeration and decomposition tables')
    _add_common(p)
    _add_lattice(p)
    p.add_argument('--n', type=int, default=2, help='Number of bonds')
    p.add_argument('--m', type=int, help='Write the m-point count table')
    p.add_argument('--l', type=int, help='Write s/u/e tables for l marks')

    p = sub.add_parser('brw', help='Conditioned branching random walk samples vs ISE')
    _add_common(p)
    _add_sampling(p)
    p.add_argument('--d', type=int, default=2)
    p.add_argument('--n', type=int, default=1025, help='Total family size')
    p.add_argument('--p0', default='1/2', help='P(0 children) = P(2 children); 1/2 is binary branching')

    p = sub.add_parser('perc', help='Percolation clusters: exact small-n laws and Monte Carlo')
    _add_common(p)
    _add_lattice(p)
    _add_sampling(p)
    p.add_argument('--p', help='Bond probability: "p/q" (exact) or decimal; default is the recorded p_c')
    p.add_argument('--n', type=int, default=3, help='Cluster size')
    p.add_argument('--mode', choices=['exact', 'mc'], default='exact')

    p = sub.add_parser('verify', help='Run cross-module verification suites')
    _add_common(p)
    _add_lattice(p)
    _add_sampling(p)
    p.add_argument('--suite', nargs='+', choices=SUITES, help='Suites to run (default: all)')
    p.add_argument('--m', type=int)
    p.add_argument('--n', type=int)
    p.add_argument('--n-list', dest='n_list', nargs='+', type=int)
    p.add_argument('--p0')

    return parser


class ConsolePrinter:
    """Prints status lines and turns progress events into tracker output."""

    def __init__(self, quiet: bool = False):
        self.quiet = quiet
        self.trackers: Dict[str, ProgressTracker] = {}

    def status(self, message: str):
        if not self.quiet:
            if self.trackers.pop('samples', None) is not None:
                print()
            print(message)

    def progress(self, event_type: str, data: Dict[str, Any]):
        if self.quiet:
            return
        if event_type == 'shard_done':
            print(f"  ✓ shard {data['shard']}: {data['count']}")
        elif event_type == 'sample_batch':
            tracker = self.trackers.setdefault('samples', ProgressTracker(0, 'samples'))
            tracker.set_completed(data['accepted'])
            tracker.skipped = data['rejected']
            tracker.total = max(tracker.total, tracker.done)
            tracker.display()


def _print_summary(results: RunResults, elapsed: float):
    print()
    print("=" * 60)
    print(f"{results.subcommand.upper()} COMPLETE")
    print("=" * 60)
    for job in results.suites:
        glyph = {SuiteStatus.PASSED: '✓', SuiteStatus.FAILED: '✗', SuiteStatus.ERROR: '✗'}.get(job.status, '⊘')
        print(f"{glyph} {job.name:<14} {job.status.value:<8} {job.elapsed:8.1f}s")
        for failure in job.failures:
            print(f"    - {failure}")
        if job.error_message:
            print(f"    - {job.error_message}")
    for written in results.output_files:
        print(f"  {written.path}  sha256={written.digest[:16]}")
    print(f"Time elapsed:      {ProgressTracker._format_time(elapsed)}")
    print("=" * 60)


def write_manifests(results: RunResults, flags: Dict[str, Any], output_dir: Path, elapsed: float) -> List[Path]:
    """Write one <stem>.manifest.json per primary output file."""
    writer = ResultWriter(output_dir)
    paths = []
    for written in results.output_files:
        manifest = RunManifest(
            subcommand=results.subcommand,
            flags=flags,
            seeds=sorted(set(results.seeds)),
            wall_time=round(elapsed, 3),
            output=written.path.name,
            digest=written.digest,
        )
        stem = written.path.name.rsplit('.', 1)[0]
        paths.append(writer.write_json(f"{stem}.manifest", manifest.to_dict()).path)
    return paths


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, run the subcommand, write outputs and manifests.

    Returns:
        Process exit code; never raises for laboratory errors or usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    printer = ConsolePrinter(args.quiet)
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ('quiet',)}

    try:
        config = LabConfig.from_path(Path(args.config) if args.config else None)
        output_dir = config.resolve_output_dir(args.out)
        options = {k: v for k, v in vars(args).items() if k not in ('subcommand', 'out', 'config', 'quiet')}

        printer.status(f"Running {args.subcommand} -> {output_dir}")
        start = time.time()
        results = run_subcommand(
            args.subcommand,
            options,
            output_dir,
            config=config,
            progress_callback=printer.progress,
            status_callback=printer.status,
        )
        elapsed = time.time() - start
        write_manifests(results, flags, output_dir, elapsed)
        if not args.quiet:
            _print_summary(results, elapsed)

    except LabError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return exit_code_for(e)
    except (FileNotFoundError, yaml.YAMLError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("\n\nInterrupted by user", file=sys.stderr)
        return 130

    if results.subcommand == 'verify':
        return results.summary.get('exit_code', 1)
    return 1 if results.failures else 0


def main():
    """Main execution function."""
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
