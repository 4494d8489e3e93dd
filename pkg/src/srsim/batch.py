"""Parallel job execution and phase-time profiling.

Jobs are independent (function, payload) pairs run across worker processes.
Each job's outcome is captured, so one failing job marks its slot instead of
aborting the batch, and results always come back ordered by job id no matter
which worker finished first. Workers are spawned fresh rather than forked:
the parent has often initialized jax / threaded BLAS, and forking those
thread pools deadlocks.

Profiling aggregates the per-step phase timers the solver already records
into one table; the Others phase is the closing remainder per step, so the
phase rows sum to the total by construction.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass

from .solver import PHASES


@dataclass
class JobResult:
    job_id: int
    ok: bool
    value: object = None
    error: str = ""


def _invoke(payload):
    fn, job_id, job = payload
    try:
        return JobResult(job_id, True, fn(job))
    except Exception as exc:
        return JobResult(job_id, False, None, f"{type(exc).__name__}: {exc}")


def batch_run(fn, jobs, workers: int = 1) -> list[JobResult]:
    """Run fn over every job with the given worker count; ordered results.

    fn must be a module-level function and each job picklable when
    workers > 1. Results are sorted by job id, and a job that raises is
    returned as a failed JobResult carrying the exception text.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    jobs = list(jobs)
    if not jobs:
        return []
    payloads = [(fn, i, job) for i, job in enumerate(jobs)]
    if workers == 1:
        return [_invoke(p) for p in payloads]
    ctx = mp.get_context("spawn")
    with ctx.Pool(min(workers, len(jobs))) as pool:
        results = list(pool.imap_unordered(_invoke, payloads, chunksize=1))
    return sorted(results, key=lambda r: r.job_id)


def _times_of(report) -> tuple[dict, float]:
    if isinstance(report, dict):
        return report["times"], report["total_time"]
    return report.times, report.total_time


def profile_phases(reports) -> dict:
    """Sum per-phase wall time over step reports (objects or their dicts).

    Returns {phase: seconds} plus a "Total" entry equal to the summed step
    wall time. Phases cover the total exactly, up to the per-step clamp of
    a negative timing remainder to zero.
    """
    if not reports:
        raise ValueError("empty report list")
    acc = {k: 0.0 for k in PHASES}
    total = 0.0
    for rep in reports:
        times, step_total = _times_of(rep)
        for k in PHASES:
            acc[k] += times[k]
        total += step_total
    acc["Total"] = total
    return acc


def format_profile(profile: dict) -> str:
    """Aligned phase table with absolute seconds and share of total."""
    total = profile["Total"]
    width = max(len(k) for k in profile)
    lines = []
    for k in (*PHASES, "Total"):
        share = 100.0 * profile[k] / total if total > 0 else 0.0
        lines.append(f"{k:<{width}}  {profile[k]:10.4f} s  {share:6.2f} %")
    return "\n".join(lines)
