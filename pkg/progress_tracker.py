"""
Progress Tracker for the ISE laboratory
Tracks and displays progress of enumeration shards, sample batches and verification suites.
"""

import time


class ProgressTracker:
    """Tracks and displays progress of a counted unit of work."""

    def __init__(self, total: int, label: str = 'items'):
        """
        Start the clock for a run of known size.

        Args:
            total: Total number of units (shards, samples or suites)
            label: Name of the unit, used in the progress line
        """
        self.total = total
        self.label = label
        self.completed = 0
        self.skipped = 0
        self.failed = 0
        self.start_time = time.time()

    def update(self, completed: int = 0, skipped: int = 0, failed: int = 0):
        """
        Record finished units of work.

        Args:
            completed: Units finished successfully
            skipped: Units skipped
            failed: Units failed
        """
        self.completed += completed
        self.skipped += skipped
        self.failed += failed

    def set_completed(self, completed: int):
        """Jump the success counter to an absolute value (for cumulative callbacks)."""
        self.completed = completed

    @property
    def done(self) -> int:
        return self.completed + self.skipped + self.failed

    def display(self):
        """Redraw the one-line progress display."""
        elapsed = time.time() - self.start_time
        remaining = max(self.total - self.done, 0)

        if self.done > 0 and elapsed > 0:
            rate = self.done / elapsed
            eta_str = self._format_time(remaining / rate if rate > 0 else 0)
        else:
            eta_str = "calculating..."

        percent = (self.done / self.total * 100) if self.total > 0 else 0

        print(f"\r[{self.done}/{self.total}] {percent:.1f}% {self.label} | "
              f"✓ {self.completed} done | "
              f"⊘ {self.skipped} skipped | "
              f"✗ {self.failed} failed | "
              f"ETA: {eta_str}", end='', flush=True)

    def display_summary(self, title: str = "RUN COMPLETE"):
        """Print the end-of-run banner."""
        print("\n")
        print("=" * 60)
        print(title)
        print("=" * 60)
        print(f"Total {self.label}:{'':<6}{self.total}")
        print(f"Completed:         {self.completed}")
        print(f"Skipped:           {self.skipped}")
        print(f"Failed:            {self.failed}")
        print(f"Time elapsed:      {self._format_time(time.time() - self.start_time)}")
        print("=" * 60)

    @staticmethod
    def _format_time(seconds: float) -> str:
        """
        Render a duration as 42s, 3m 5s or 1h 2m.

        Args:
            seconds: Duration

        Returns:
            Short duration label
        """
        if seconds < 60:
            return f"{int(seconds)}s"
        elif seconds < 3600:
            return f"{int(seconds / 60)}m {int(seconds % 60)}s"
        else:
            return f"{int(seconds / 3600)}h {int((seconds % 3600) / 60)}m"
