"""
Verification queue for running the cross-module suites one at a time.

Tracks each suite's status and results so the CLI can print a summary
and derive its exit code.
"""

import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional


class SuiteStatus(Enum):
    """Status of a verification suite in the queue."""
    QUEUED = "queued"
    RUNNING = "running"
    PASSED = "passed"
    FAILED = "failed"
    ERROR = "error"


@dataclass
class SuiteJob:
    """Represents a single verification suite run."""
    name: str
    options: Dict[str, Any] = field(default_factory=dict)
    status: SuiteStatus = SuiteStatus.QUEUED
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    error_message: Optional[str] = None
    exit_code: int = 0

    # Suite results
    rows: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    # Tables written by the suite
    output_files: List[Path] = field(default_factory=list)

    def __post_init__(self):
        """Normalise the suite name."""
        self.name = self.name.strip().lower()

    @property
    def elapsed(self) -> float:
        if self.started_at is None or self.completed_at is None:
            return 0.0
        return (self.completed_at - self.started_at).total_seconds()


class VerificationQueue:
    """Manages a queue of verification suites."""

    def __init__(self, suites: Optional[List[str]] = None):
        """
        Initialize the verification queue.

        Args:
            suites: Suite names to enqueue immediately
        """
        self.jobs: List[SuiteJob] = []
        self._lock = threading.Lock()
        for name in suites or []:
            self.add_job(name)

    def add_job(self, name: str, options: Optional[Dict[str, Any]] = None) -> SuiteJob:
        """
        Add a new suite to the queue.

        Args:
            name: Suite name
            options: Suite-specific options

        Returns:
            The created SuiteJob
        """
        job = SuiteJob(name=name, options=dict(options or {}))

        with self._lock:
            self.jobs.append(job)

        return job

    def get_next_job(self) -> Optional[SuiteJob]:
        """
        Get the next queued suite.

        Returns:
            The first suite still waiting to run, or None once the queue is drained
        """
        with self._lock:
            for job in self.jobs:
                if job.status == SuiteStatus.QUEUED:
                    return job
        return None

    def mark_running(self, job: SuiteJob) -> None:
        """Mark a suite as currently running."""
        with self._lock:
            job.status = SuiteStatus.RUNNING
            job.started_at = datetime.now()

    def mark_completed(self, job: SuiteJob, results: Dict[str, Any]) -> None:
        """
        Mark a suite as finished with results.

        Args:
            job: The finished job
            results: Dictionary containing suite results:
                - rows: Result table rows
                - failures: Descriptions of failed hard assertions
                - output_files: Tables the suite wrote
        """
        with self._lock:
            job.completed_at = datetime.now()
            job.rows = results.get('rows', [])
            job.failures = results.get('failures', [])
            job.output_files = results.get('output_files', [])
            job.status = SuiteStatus.FAILED if job.failures else SuiteStatus.PASSED
            job.exit_code = 1 if job.failures else 0

    def mark_error(self, job: SuiteJob, error_message: str, exit_code: int) -> None:
        """Mark a suite that raised, keeping the exit code of the error type."""
        with self._lock:
            job.status = SuiteStatus.ERROR
            job.completed_at = datetime.now()
            job.error_message = error_message
            job.exit_code = exit_code

    def get_queue_status(self) -> Dict[str, Any]:
        """
        Count suites by status.

        Returns:
            Totals keyed by status name, plus total_jobs
        """
        with self._lock:
            return {
                'total_jobs': len(self.jobs),
                'queued': sum(1 for j in self.jobs if j.status == SuiteStatus.QUEUED),
                'running': sum(1 for j in self.jobs if j.status == SuiteStatus.RUNNING),
                'passed': sum(1 for j in self.jobs if j.status == SuiteStatus.PASSED),
                'failed': sum(1 for j in self.jobs if j.status == SuiteStatus.FAILED),
                'error': sum(1 for j in self.jobs if j.status == SuiteStatus.ERROR),
            }

    def exit_code(self) -> int:
        """Worst exit code over finished suites; errors outrank assertion failures."""
        with self._lock:
            codes = [j.exit_code for j in self.jobs]
        errors = [c for c in codes if c > 1]
        if errors:
            return max(errors)
        return 1 if 1 in codes else 0

    def get_all_jobs(self) -> List[SuiteJob]:
        """Snapshot of every suite, in run order."""
        with self._lock:
            return self.jobs.copy()
