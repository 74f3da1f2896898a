"""Pluggable fitness producers bound to worker slots.

Three backends satisfy the same contract -- ``evaluate(job, emit_log, slot_id)
-> (fitness percent, duration seconds)`` with the percent quantized to two
decimals:

* ``surrogate`` -- a deterministic closed-form stand-in for training: each
  architecture has an asymptotic accuracy derived from its identifier hash and
  its structure (depth, width, parameter count), approached as a saturating
  function of the epoch budget. Enables desk-scale verification of the whole
  platform without GPUs.
* ``lookup`` -- exact-match retrieval from a CSV benchmark table.
* ``command`` -- runs an external trainer process and parses its final
  ``FITNESS=<dd.dd>`` line, streaming all other stdout lines as log records.

Backends hold no shared mutable state; one instance per slot is safe.
"""

from __future__ import annotations

import csv
import math
import random
import shlex
import subprocess
import tempfile
import time
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .arch import Conv, decode, flop_count, param_count, parse_canonical
from .arch.ir import ArchIR
from .datasets import dataset_spec
from .errors import ConfigError, JobFailed, LookupMiss
from .jobs import JobSpec

EmitLog = Callable[[str], None]

DEFAULT_TAU = 20.0
DEFAULT_SIGMA = 0.0
DEFAULT_TIME_BASE = 1.0      # fixed virtual seconds per job
DEFAULT_TIME_PER_MAC = 1e-9  # virtual seconds per multiply-accumulate per epoch


def _quantize(value: float) -> float:
    """Clamp to [0, 100] and quantize to the 2-decimal percent grid."""
    return round(min(max(value, 0.0), 100.0), 2)


def decode_job(job: JobSpec) -> ArchIR:
    """Decode a job's genotype payload using the decode parameters it carries."""
    genotype = parse_canonical(job.payload)
    shape, classes = dataset_spec(job.settings.get("dataset", "cifar10"))
    stage_channels = None
    if job.settings.get("stage_channels"):
        stage_channels = tuple(int(c) for c in job.settings["stage_channels"].split(","))
    cell_channels = int(job.settings.get("cell_channels", 32))
    return decode(
        genotype, shape, classes, stage_channels=stage_channels, cell_channels=cell_channels
    )


def architecture_asymptote(identifier: str, ir: ArchIR) -> float:
    """Asymptotic accuracy in [0, 1] for one architecture.

    Depth and width raise it with diminishing returns, parameter count drags
    it down, and the identifier hash contributes a small architecture-specific
    offset -- enough signal for selection pressure and for non-degenerate
    accuracy/size trade-off fronts.
    """
    convs = [layer for layer in ir.layers if isinstance(layer, Conv)]
    depth = len(convs)
    width = sum(c.c_out for c in convs) / depth if convs else 1.0
    params = param_count(ir)
    hash_frac = int(identifier[:12], 16) / float(16**12)
    a = (
        0.30
        + 0.40 * (1.0 - math.exp(-depth / 6.0))
        + 0.15 * (1.0 - math.exp(-width / 64.0))
        - 0.25 * (1.0 - math.exp(-params / 2.0e7))
        + 0.10 * (hash_frac - 0.5)
    )
    return min(max(a, 0.02), 0.98)


def saturation(epochs: int, tau: float) -> float:
    return 1.0 - math.exp(-epochs / tau)


@dataclass
class SurrogateBackend:
    """Closed-form fitness: ``100 * (a(g) * (1 - exp(-epochs/tau)) + noise)``.

    Deterministic given (genotype, settings, seed); with ``sigma == 0`` it is
    exactly reproducible and monotone in the epoch budget. Job settings
    override the instance defaults; ``fixed_asymptote`` pins ``a(g)`` for
    tests.
    """

    kind: str = "surrogate"
    tau: float = DEFAULT_TAU
    sigma: float = DEFAULT_SIGMA
    time_base: float = DEFAULT_TIME_BASE
    time_per_mac: float = DEFAULT_TIME_PER_MAC
    fixed_asymptote: float | None = None

    def _setting(self, job: JobSpec, key: str, default: float) -> float:
        raw = job.settings.get(key)
        return float(raw) if raw is not None else default

    def evaluate(self, job: JobSpec, emit_log: EmitLog | None = None, slot_id: int = 0) -> tuple[float, float]:
        ir = decode_job(job)
        tau = self._setting(job, "tau", self.tau)
        sigma = self._setting(job, "sigma", self.sigma)
        a = self.fixed_asymptote
        if a is None:
            a = architecture_asymptote(job.identifier, ir)
        noise = 0.0
        if sigma > 0.0:
            noise = random.Random(f"{job.identifier}:{job.seed}").gauss(0.0, sigma)
        fitness = _quantize(100.0 * (a * saturation(job.epochs, tau) + noise))
        flops = flop_count(ir)
        c0 = self._setting(job, "c0", self.time_base)
        c1 = self._setting(job, "c1", self.time_per_mac)
        duration = c0 + c1 * flops * job.epochs
        return fitness, duration


@dataclass
class LookupBackend:
    """Benchmark-table retrieval: ``identifier,fitness[,params,flops]`` CSV rows."""

    table_path: str
    fallback: str = "error"  # "error" | "surrogate"
    kind: str = "lookup"
    _table: dict[str, float] = field(default_factory=dict, repr=False)
    _loaded: bool = field(default=False, repr=False)

    def _load(self) -> None:
        path = Path(self.table_path)
        if not path.exists():
            raise ConfigError(f"lookup table {path} does not exist")
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or reader.fieldnames[:2] != ["identifier", "fitness"]:
                raise ConfigError(
                    f"lookup table {path} must start with columns identifier,fitness"
                )
            for row in reader:
                self._table.setdefault(row["identifier"], float(row["fitness"]))
        self._loaded = True

    def evaluate(self, job: JobSpec, emit_log: EmitLog | None = None, slot_id: int = 0) -> tuple[float, float]:
        if not self._loaded:
            self._load()
        value = self._table.get(job.identifier)
        if value is None:
            if self.fallback == "surrogate":
                return SurrogateBackend().evaluate(job, emit_log, slot_id)
            raise LookupMiss(f"identifier {job.identifier} not in {self.table_path}")
        return _quantize(value), 0.0


@dataclass
class CommandBackend:
    """External trainer command bound to a slot's device index.

    The template may reference ``{payload_path}``, ``{settings_path}``,
    ``{slot_id}`` and ``{seed}``. The command's stdout is streamed as log
    records; its final ``FITNESS=<dd.dd>`` line is the fitness.
    ``on_spawn`` (if set) receives the child pid, so hosts can register the
    killable process.
    """

    template: str
    timeout_s: float = 300.0
    kind: str = "command"
    on_spawn: Callable[[int], None] | None = None

    def evaluate(self, job: JobSpec, emit_log: EmitLog | None = None, slot_id: int = 0) -> tuple[float, float]:
        if not self.template:
            raise ConfigError("command backend requires a command template")
        started = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="evonas_job_") as tmp:
            payload_path = Path(tmp) / "payload.txt"
            settings_path = Path(tmp) / "settings.json"
            payload_path.write_text(job.payload, encoding="utf-8")
            settings_path.write_text(
                json.dumps({**job.settings, "epochs": str(job.epochs)}, indent=1),
                encoding="utf-8",
            )
            argv = shlex.split(
                self.template.format(
                    payload_path=payload_path,
                    settings_path=settings_path,
                    slot_id=slot_id,
                    seed=job.seed,
                )
            )
            tail: list[str] = []
            fitness: float | None = None
            try:
                proc = subprocess.Popen(
                    argv, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True
                )
            except OSError as exc:
                raise JobFailed(f"cannot launch trainer: {exc}") from exc
            if self.on_spawn is not None:
                self.on_spawn(proc.pid)
            assert proc.stdout is not None
            try:
                for line in proc.stdout:
                    line = line.rstrip("\n")
                    if time.monotonic() - started > self.timeout_s:
                        proc.kill()
                        raise JobFailed(f"trainer timed out after {self.timeout_s}s", "\n".join(tail[-20:]))
                    if line.startswith("FITNESS="):
                        try:
                            fitness = float(line.split("=", 1)[1])
                        except ValueError:
                            pass
                        continue
                    tail.append(line)
                    if emit_log is not None:
                        emit_log(line)
                code = proc.wait(timeout=self.timeout_s)
            finally:
                if proc.poll() is None:
                    proc.kill()
            if code != 0:
                raise JobFailed(f"trainer exited with status {code}", "\n".join(tail[-20:]))
            if fitness is None:
                raise JobFailed("trainer produced no FITNESS line", "\n".join(tail[-20:]))
        return _quantize(fitness), time.monotonic() - started


BACKEND_KINDS = ("surrogate", "lookup", "command")


def build_backend(kind: str, settings: dict[str, str] | None = None):
    """Instantiate a backend by kind, pulling its parameters from job settings."""
    settings = settings or {}
    if kind == "surrogate":
        return SurrogateBackend()
    if kind == "lookup":
        table = settings.get("table", "")
        if not table:
            raise ConfigError("lookup backend requires a 'table' setting")
        return LookupBackend(table_path=table, fallback=settings.get("fallback", "error"))
    if kind == "command":
        template = settings.get("command", "")
        if not template:
            raise ConfigError("command backend requires a 'command' setting")
        return CommandBackend(template=template, timeout_s=float(settings.get("timeout_s", 300.0)))
    raise ConfigError(f"unknown backend kind {kind!r}; known: {BACKEND_KINDS}")
