from __future__ import annotations

import random
import sys
from dataclasses import dataclass, field
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # sha224_reference import

from evonas.backends import SurrogateBackend
from evonas.bus import InProcessBus, Listener
from evonas.cache import ResultCache
from evonas.config import BackendConfig, TrainerSettings, canonical_settings_text, settings_digest, settings_map
from evonas.evaluator import Evaluator
from evonas.evo.strategies import StrategyConfig, build_strategy
from evonas.runner import Runner, SETTINGS_FILE
from evonas.simfarm import SimulatedFarm


@pytest.fixture
def rng():
    return random.Random(12345)


@dataclass
class RunHarness:
    """Builds fresh runner/farm stacks over one run directory.

    Every ``build()`` constructs new components that read their state from
    disk, which is exactly what a restarted process would do.
    """

    run_dir: Path
    cfg: StrategyConfig
    slots: int = 2
    use_cache: bool = True
    backend: object = field(default_factory=SurrogateBackend)
    train: TrainerSettings = field(default_factory=TrainerSettings)
    backend_cfg: BackendConfig = field(default_factory=BackendConfig)
    label: str = "test_run"
    space: object = None  # overrides the strategy's default encoding space
    engine_factory: object = None  # callable(bus, listener) -> execution engine

    def __post_init__(self) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        strategy = self._strategy()
        self.settings = settings_map(self.train, self.backend_cfg, strategy.space.decode_settings())
        (self.run_dir / SETTINGS_FILE).write_text(
            canonical_settings_text(self.settings), encoding="utf-8"
        )

    def _strategy(self):
        return build_strategy(self.cfg, space=self.space)

    def build(self, on_save=None) -> tuple[Runner, object]:
        strategy = self._strategy()
        cache = (
            ResultCache(self.run_dir / "cache.txt", settings_digest(self.settings))
            if self.use_cache
            else None
        )
        bus = InProcessBus()
        listener = Listener(bus, self.run_dir, cache)
        if self.engine_factory is not None:
            engine = self.engine_factory(bus, listener)
        else:
            engine = SimulatedFarm({"sim": self.slots}, self.backend, bus, listener)
        evaluator = Evaluator(
            engine,
            cache,
            self.settings,
            strategy.space,
            master_seed=self.cfg.seed,
            objectives=strategy.objectives,
        )
        runner = Runner(
            self.run_dir,
            strategy,
            evaluator,
            label=self.label,
            master_seed=self.cfg.seed,
            on_save=on_save,
        )
        return runner, engine


@pytest.fixture
def make_harness(tmp_path):
    def factory(name="run", strategy="elitist_ga", pop_size=4, max_gen=3, seed=7, **kwargs) -> RunHarness:
        cfg_kwargs = {}
        for key in ("crossover_prob", "mutation_prob", "tournament_size", "sample_size"):
            if key in kwargs:
                cfg_kwargs[key] = kwargs.pop(key)
        cfg = StrategyConfig(
            strategy=strategy, pop_size=pop_size, max_gen=max_gen, seed=seed, **cfg_kwargs
        )
        return RunHarness(run_dir=tmp_path / name, cfg=cfg, **kwargs)

    return factory
