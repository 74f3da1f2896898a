"""The generational loop with log-based downtime restart.

All run state lives in the run directory:

* ``run_state.txt``   -- ``is_running`` flag plus the run's labels,
* ``begin_<t>.txt``   -- one population log per generation, written atomically
  after every member of that generation has fitness; one record per line::

      name=<string>;enc=<canonical serialization>;id=<56 hex>;fit=<percent 2dp or NA>

A fresh start initializes generation 0 and raises the flag; a restart loads
the newest ``begin_<t>.txt``, verifies every record's identifier against its
re-serialized genotype, and resumes. Variation for generation ``t+1`` draws
its RNG from ``H(master_seed, t)``, so a resumed run regenerates exactly the
offspring the uninterrupted run would have -- the cache makes re-evaluation of
anything already trained free, and subsequent population logs come out
byte-identical.

``max_gen`` counts generations including the initial one: a full run evaluates
``pop_size * max_gen`` candidates when nothing hits the cache.
"""

from __future__ import annotations

import hashlib
import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .arch import canonical_text, identifier as genotype_identifier, parse_canonical
from .errors import CorruptLogError, EvaluationOrderError, PersistError, RestartError
from .evaluator import Evaluator
from .evo.individual import Individual, Population, birth_generation
from .evo.strategies import SearchStrategy

logger = logging.getLogger(__name__)

RUN_STATE_FILE = "run_state.txt"
SETTINGS_FILE = "settings.txt"
_LOG_RE = re.compile(r"^begin_(\d+)\.txt$")
_RECORD_RE = re.compile(r"^name=([^;]+);enc=([^;]+);id=([0-9a-f]{56});fit=(NA|\d{1,3}\.\d{2})$")


def derive_rng(master_seed: int, tag) -> random.Random:
    digest = hashlib.sha256(f"{master_seed}:{tag}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class RunState:
    is_running: int = 0
    algorithm: str = ""
    strategy: str = ""
    generation: int = 0

    @staticmethod
    def load(run_dir: Path) -> "RunState":
        path = run_dir / RUN_STATE_FILE
        state = RunState()
        if not path.exists():
            return state
        for line in path.read_text(encoding="utf-8").splitlines():
            key, _, value = line.partition("=")
            if key == "is_running":
                state.is_running = int(value)
            elif key == "algorithm":
                state.algorithm = value
            elif key == "strategy":
                state.strategy = value
            elif key == "generation":
                state.generation = int(value)
        return state

    def save(self, run_dir: Path) -> None:
        path = run_dir / RUN_STATE_FILE
        body = (
            f"is_running={self.is_running}\n"
            f"algorithm={self.algorithm}\n"
            f"strategy={self.strategy}\n"
            f"generation={self.generation}\n"
        )
        tmp = path.with_suffix(".tmp")
        try:
            tmp.write_text(body, encoding="utf-8")
            tmp.rename(path)
        except OSError as exc:
            raise PersistError(f"cannot persist run state: {exc}") from exc


def format_record(member: Individual) -> str:
    if member.fitness is None:
        fit = "NA"
    else:
        fit = f"{100.0 * member.fitness[0]:.2f}"
    return f"name={member.name};enc={canonical_text(member.genotype)};id={member.identifier};fit={fit}"


def log_path(run_dir: Path, t: int) -> Path:
    return run_dir / f"begin_{t}.txt"


def list_generations(run_dir: Path) -> list[int]:
    out = []
    for path in run_dir.iterdir():
        m = _LOG_RE.match(path.name)
        if m:
            out.append(int(m.group(1)))
    return sorted(out)


def save_population(run_dir: Path, t: int, pop: Population) -> None:
    """Atomically write ``begin_<t>.txt``; every member must already have fitness."""
    pop.require_evaluated()
    path = log_path(run_dir, t)
    if path.exists():
        return  # logs are append-created, never rewritten
    body = "".join(format_record(m) + "\n" for m in pop.members)
    tmp = path.with_suffix(".tmp")
    try:
        tmp.write_text(body, encoding="utf-8")
        tmp.rename(path)
    except OSError as exc:
        raise PersistError(f"cannot write population log {path}: {exc}") from exc


def parse_record(line: str) -> Individual:
    m = _RECORD_RE.match(line)
    if m is None:
        raise CorruptLogError(f"malformed population record: {line!r}")
    name, enc, stored_id, fit = m.groups()
    genotype = parse_canonical(enc)
    actual = genotype_identifier(genotype)
    if actual != stored_id:
        raise CorruptLogError(
            f"identifier mismatch for {name}: log says {stored_id[:12]}.., encoding hashes to {actual[:12]}.."
        )
    member = Individual(name=name, genotype=genotype, identifier=actual, age=birth_generation(name))
    if fit != "NA":
        member.assign_fitness((float(fit) / 100.0,))
    return member


def load_latest_population(
    run_dir: Path,
    objectives: int = 1,
    augment: Callable[[Individual], tuple[float, ...]] | None = None,
) -> tuple[int, Population]:
    """Load the newest population log, verifying identifiers and log contiguity.

    ``augment`` supplies the derived extra objectives (e.g. parameter count)
    for multi-objective runs; objective 0 always comes from the log.
    """
    generations = list_generations(run_dir)
    if not generations:
        raise RestartError(f"run flagged as interrupted but {run_dir} holds no population logs")
    if generations != list(range(generations[-1] + 1)):
        raise RestartError(f"population logs are not contiguous in {run_dir}: {generations}")
    t = generations[-1]
    path = log_path(run_dir, t)
    members = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        try:
            member = parse_record(line)
        except CorruptLogError as exc:
            raise CorruptLogError(f"{path}:{lineno}: {exc}") from exc
        if objectives >= 2 and member.fitness is not None and augment is not None:
            base = member.fitness
            member.fitness = None
            member.assign_fitness(base + tuple(augment(member)))
        members.append(member)
    return t, Population(generation=t, members=members)


class Runner:
    """Executes one configured run inside a run directory, resumably."""

    def __init__(
        self,
        run_dir: Path | str,
        strategy: SearchStrategy,
        evaluator: Evaluator,
        label: str = "",
        master_seed: int = 0,
        on_save: Callable[[int], None] | None = None,
    ):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.strategy = strategy
        self.evaluator = evaluator
        self.label = label or strategy.cfg.strategy
        self.master_seed = master_seed
        self.on_save = on_save  # test hook, called after each persisted generation

    def _save(self, t: int, pop: Population) -> None:
        save_population(self.run_dir, t, pop)
        state = RunState(1, self.label, self.strategy.cfg.strategy, t)
        state.save(self.run_dir)
        if self.on_save is not None:
            self.on_save(t)

    def run(self) -> Individual:
        cfg = self.strategy.cfg
        state = RunState.load(self.run_dir)
        if state.is_running == 0:
            logger.info("fresh start in %s (strategy %s)", self.run_dir, cfg.strategy)
            pop = self.strategy.initial_population(derive_rng(self.master_seed, "init"))
            t = 0
            state = RunState(1, self.label, cfg.strategy, 0)
            state.save(self.run_dir)
        else:
            def augment(member: Individual) -> tuple[float, ...]:
                return (float(self.evaluator.params_of(member)),)

            t, pop = load_latest_population(
                self.run_dir, objectives=self.strategy.objectives, augment=augment
            )
            logger.info("resuming %s at generation %d", self.run_dir, t)

        self.evaluator.evaluate_population(pop)
        self._save(t, pop)

        while t + 1 < cfg.max_gen:
            rng = derive_rng(self.master_seed, t)
            pop = self.strategy.advance(pop, self.evaluator.evaluate_population, rng)
            if pop.generation != t + 1:
                raise EvaluationOrderError(
                    f"strategy advanced generation {t} to {pop.generation}, expected {t + 1}"
                )
            t += 1
            self._save(t, pop)

        best = pop.best()
        RunState(0, self.label, cfg.strategy, t).save(self.run_dir)
        logger.info("run complete: best %s fitness %.4f", best.name, best.fitness0)
        return best
