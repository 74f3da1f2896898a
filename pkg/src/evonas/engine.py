"""Threaded execution engine: real concurrency over local or remote slots.

One dispatch thread per in-flight job blocks for a slot, runs the job through
a slot runner (an in-process backend or a TCP worker connection), and retries
on worker loss or job failure up to the retry budget. Jobs that exhaust the
budget resolve with the fitness-0.00 convention. The record bus collects
process/log/fitness records from all threads; the listener drains once after
the batch completes, so the cache and result files are written by exactly one
consumer.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import signal
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Protocol

from .backends import CommandBackend
from .bus import FitnessRecord, Listener, LogRecord, ProcessRecord, RecordBus
from .errors import DecodeError, JobFailed, LookupMiss, WorkerLostError
from .jobs import JobResult, JobSpec
from .simfarm import EngineStats
from .slots import SlotStore

logger = logging.getLogger(__name__)

#: Runs one job on one slot, publishing its records; returns (value, duration).
SlotRunner = Callable[[JobSpec, str, int, RecordBus], tuple[float, float]]

_RETRYABLE = (JobFailed, WorkerLostError, LookupMiss, DecodeError)


class ExecutionEngine(Protocol):
    stats: EngineStats

    def run_jobs(self, jobs: list[JobSpec]) -> dict[str, JobResult]: ...


def local_runner(backend) -> SlotRunner:
    """Slot runner that executes a backend in this process.

    Command backends register the spawned trainer's pid in the process record
    (that is the killable unit); other backends register this process. The
    backend is copied per job, so concurrent slots share no mutable state.
    """

    def run(job: JobSpec, node: str, slot: int, bus: RecordBus) -> tuple[float, float]:
        pid_box = {"pid": os.getpid()}

        def announce(pid: int) -> None:
            pid_box["pid"] = pid
            bus.process_started(ProcessRecord(node=node, pid=pid, job_name=job.name, started_at=time.time()))

        if isinstance(backend, CommandBackend):
            job_backend = dataclasses.replace(backend, on_spawn=announce)
        else:
            job_backend = backend
            announce(os.getpid())
        try:
            value, duration = job_backend.evaluate(
                job,
                emit_log=lambda line: bus.publish(LogRecord(job_name=job.name, line=line)),
                slot_id=slot,
            )
        finally:
            bus.process_ended(node, pid_box["pid"], job.name)
        bus.publish(
            FitnessRecord(job_name=job.name, identifier=job.identifier, value=value, duration_s=duration)
        )
        return value, duration

    return run


def local_terminator(node: str, pid: int) -> None:
    """Terminate a locally spawned trainer process; never this process itself."""
    if pid == os.getpid():
        return
    try:
        os.kill(pid, signal.SIGTERM)
    except (ProcessLookupError, PermissionError):
        pass


class ThreadedEngine:
    def __init__(
        self,
        store: SlotStore,
        bus: RecordBus,
        listener: Listener,
        runner: SlotRunner,
        retry_budget: int = 1,
        acquire_timeout: float | None = 120.0,
        terminator: Callable[[str, int], None] | None = None,
    ):
        self.store = store
        self.bus = bus
        self.listener = listener
        self.runner = runner
        self.retry_budget = retry_budget
        self.acquire_timeout = acquire_timeout
        self.terminator = terminator
        self.stats = EngineStats()

    def terminate(self, node: str, pid: int) -> None:
        if self.terminator is not None:
            self.terminator(node, pid)

    def _execute(self, job: JobSpec) -> JobResult:
        consumed = 0.0
        reason = "no live worker slots available"
        for tries in range(self.retry_budget + 1):
            grant = self.store.acquire_wait(job.name, timeout=self.acquire_timeout)
            if grant is None:
                break
            node, slot = grant
            started = time.monotonic()
            self.stats.attempts += 1
            try:
                value, duration = self.runner(job, node, slot, self.bus)
            except _RETRYABLE as exc:
                consumed += time.monotonic() - started
                reason = str(exc)
                logger.warning("job %s attempt %d failed on %s:%d: %s", job.name, tries, node, slot, exc)
                continue
            finally:
                self.store.release(node, slot)
            self.stats.busy_seconds += duration
            self.stats.jobs += 1
            return JobResult(job.name, job.identifier, value, duration, ok=True)
        self.bus.publish(
            LogRecord(job_name=job.name, line=f"evaluation failed: {reason}; assigning fitness 0.00")
        )
        self.bus.publish(
            FitnessRecord(job_name=job.name, identifier=job.identifier, value=0.0, duration_s=consumed)
        )
        self.stats.busy_seconds += consumed
        self.stats.failures += 1
        self.stats.jobs += 1
        return JobResult(job.name, job.identifier, 0.0, consumed, ok=False, error=reason)

    def run_jobs(self, jobs: list[JobSpec]) -> dict[str, JobResult]:
        if not jobs:
            return {}
        results: dict[str, JobResult] = {}
        workers = min(len(jobs), max(1, len(self.store)))
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="dispatch") as pool:
            for result in pool.map(self._execute, jobs):
                results[result.name] = result
        self.listener.drain()
        return results
