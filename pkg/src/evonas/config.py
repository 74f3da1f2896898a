"""INI configuration: ``global.ini`` (what to search) and ``train.ini`` (how to train).

``global.ini``::

    [algorithm]
    name = my_run            ; folder label for the run's output
    run_algorithm = elitist_ga
    max_gen = 20
    pop_size = 20
    ; optional: seed, crossover_prob, mutation_prob, tournament_size, sample_size

``train.ini``::

    [optimizer]
    _optimizer_name = SGD
    _batch_size = 64
    _total_epoch = 50

    [LearningRate]
    lr = 0.025
    lr_strategy = CosineAnnealingLR

    [dataset]
    _name = cifar10

    [backend]
    kind = surrogate         ; surrogate | lookup | command
    ; command = python -m evonas.toy_trainer --payload {payload_path} ...
    ; table = bench.csv   fallback = error|surrogate
    ; tau / sigma / c0 / c1 tune the surrogate

Unknown sections or keys are rejected with their location named. The flattened
settings map (trainer + backend + decode parameters) is digested into the
cache header and the per-run ``settings.txt``; runs are only comparable --
and caches only reusable -- under an identical digest.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

from .backends import BACKEND_KINDS
from .datasets import DATASETS
from .errors import ConfigError
from .evo.strategies import STRATEGIES, StrategyConfig

KNOWN_OPTIMIZERS = ("SGD", "Adam", "RMSprop")
KNOWN_LR_STRATEGIES = (
    "StepLR",
    "MultiStepLR",
    "ExponentialLR",
    "CosineAnnealingLR",
    "ReduceLROnPlateau",
)

_GLOBAL_KEYS = {
    "algorithm": {
        "name",
        "run_algorithm",
        "max_gen",
        "pop_size",
        "seed",
        "crossover_prob",
        "mutation_prob",
        "tournament_size",
        "sample_size",
    }
}
_TRAIN_KEYS = {
    "optimizer": {"_optimizer_name", "_batch_size", "_total_epoch"},
    "LearningRate": {"lr", "lr_strategy"},
    "dataset": {"_name"},
    "backend": {"kind", "command", "table", "fallback", "tau", "sigma", "c0", "c1", "timeout_s"},
}


@dataclass
class GlobalConfig:
    name: str
    run_algorithm: str
    max_gen: int
    pop_size: int
    seed: int = 0
    crossover_prob: float = 0.9
    mutation_prob: float = 0.1
    tournament_size: int = 2
    sample_size: int = 3

    def strategy_config(self) -> StrategyConfig:
        return StrategyConfig(
            strategy=self.run_algorithm,
            pop_size=self.pop_size,
            max_gen=self.max_gen,
            crossover_prob=self.crossover_prob,
            mutation_prob=self.mutation_prob,
            tournament_size=self.tournament_size,
            sample_size=self.sample_size,
            seed=self.seed,
        )


@dataclass
class TrainerSettings:
    optimizer: str = "SGD"
    batch_size: int = 64
    total_epoch: int = 50
    lr: float = 0.025
    lr_strategy: str = "CosineAnnealingLR"
    dataset: str = "cifar10"

    def __post_init__(self) -> None:
        if self.optimizer not in KNOWN_OPTIMIZERS:
            raise ConfigError(
                f"section 'optimizer', key '_optimizer_name': unknown optimizer {self.optimizer!r}"
            )
        if self.batch_size <= 0:
            raise ConfigError("section 'optimizer', key '_batch_size': must be positive")
        if self.total_epoch <= 0:
            raise ConfigError("section 'optimizer', key '_total_epoch': must be positive")
        if self.lr <= 0:
            raise ConfigError("section 'LearningRate', key 'lr': must be positive")
        if self.lr_strategy not in KNOWN_LR_STRATEGIES:
            raise ConfigError(
                f"section 'LearningRate', key 'lr_strategy': unknown strategy {self.lr_strategy!r}"
            )
        if self.dataset.lower() not in DATASETS:
            raise ConfigError(f"section 'dataset', key '_name': unknown dataset {self.dataset!r}")


@dataclass
class BackendConfig:
    kind: str = "surrogate"
    command: str = ""
    table: str = ""
    fallback: str = "error"
    tau: float = 20.0
    sigma: float = 0.0
    c0: float = 1.0
    c1: float = 1e-9
    timeout_s: float = 300.0

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"section 'backend', key 'kind': unknown backend {self.kind!r}")
        if self.kind == "command" and not self.command:
            raise ConfigError("section 'backend', key 'command': required for the command backend")
        if self.kind == "lookup" and not self.table:
            raise ConfigError("section 'backend', key 'table': required for the lookup backend")
        if self.fallback not in ("error", "surrogate"):
            raise ConfigError(f"section 'backend', key 'fallback': unknown value {self.fallback!r}")


def _read_ini(path: Path | str) -> configparser.ConfigParser:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parser


def _reject_unknown(parser: configparser.ConfigParser, allowed: dict[str, set], path) -> None:
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"{path}: unknown section '{section}'")
        for key in parser[section]:
            if key not in allowed[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in section '{section}'")


def _get(parser, section: str, key: str, cast, default=None, required: bool = False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"missing key '{key}' in section '{section}'")
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(
            f"section '{section}', key '{key}': cannot interpret {raw!r} as {cast.__name__}"
        ) from None


def parse_global(path: Path | str) -> GlobalConfig:
    parser = _read_ini(path)
    _reject_unknown(parser, _GLOBAL_KEYS, path)
    if not parser.has_section("algorithm"):
        raise ConfigError(f"{path}: missing section 'algorithm'")
    cfg = GlobalConfig(
        name=_get(parser, "algorithm", "name", str, required=True),
        run_algorithm=_get(parser, "algorithm", "run_algorithm", str, required=True),
        max_gen=_get(parser, "algorithm", "max_gen", int, required=True),
        pop_size=_get(parser, "algorithm", "pop_size", int, required=True),
        seed=_get(parser, "algorithm", "seed", int, default=0),
        crossover_prob=_get(parser, "algorithm", "crossover_prob", float, default=0.9),
        mutation_prob=_get(parser, "algorithm", "mutation_prob", float, default=0.1),
        tournament_size=_get(parser, "algorithm", "tournament_size", int, default=2),
        sample_size=_get(parser, "algorithm", "sample_size", int, default=3),
    )
    if cfg.max_gen < 0:
        raise ConfigError("section 'algorithm', key 'max_gen': must be >= 0")
    if cfg.pop_size < 2:
        raise ConfigError("section 'algorithm', key 'pop_size': must be >= 2")
    if cfg.run_algorithm not in STRATEGIES:
        raise ConfigError(
            f"section 'algorithm', key 'run_algorithm': unknown strategy {cfg.run_algorithm!r}; "
            f"registered: {sorted(STRATEGIES)}"
        )
    return cfg


def parse_train(path: Path | str) -> tuple[TrainerSettings, BackendConfig]:
    parser = _read_ini(path)
    _reject_unknown(parser, _TRAIN_KEYS, path)
    train = TrainerSettings(
        optimizer=_get(parser, "optimizer", "_optimizer_name", str, default="SGD"),
        batch_size=_get(parser, "optimizer", "_batch_size", int, default=64),
        total_epoch=_get(parser, "optimizer", "_total_epoch", int, default=50),
        lr=_get(parser, "LearningRate", "lr", float, default=0.025),
        lr_strategy=_get(parser, "LearningRate", "lr_strategy", str, default="CosineAnnealingLR"),
        dataset=_get(parser, "dataset", "_name", str, default="cifar10"),
    )
    backend = BackendConfig(
        kind=_get(parser, "backend", "kind", str, default="surrogate"),
        command=_get(parser, "backend", "command", str, default=""),
        table=_get(parser, "backend", "table", str, default=""),
        fallback=_get(parser, "backend", "fallback", str, default="error"),
        tau=_get(parser, "backend", "tau", float, default=20.0),
        sigma=_get(parser, "backend", "sigma", float, default=0.0),
        c0=_get(parser, "backend", "c0", float, default=1.0),
        c1=_get(parser, "backend", "c1", float, default=1e-9),
        timeout_s=_get(parser, "backend", "timeout_s", float, default=300.0),
    )
    return train, backend


def parse_configs(global_path, train_path) -> tuple[GlobalConfig, TrainerSettings, BackendConfig]:
    train, backend = parse_train(train_path)
    return parse_global(global_path), train, backend


def dumps_global(cfg: GlobalConfig) -> str:
    lines = ["[algorithm]"]
    lines += [f"{k} = {v}" for k, v in asdict(cfg).items()]
    return "\n".join(lines) + "\n"


def dumps_train(train: TrainerSettings, backend: BackendConfig) -> str:
    return (
        "[optimizer]\n"
        f"_optimizer_name = {train.optimizer}\n"
        f"_batch_size = {train.batch_size}\n"
        f"_total_epoch = {train.total_epoch}\n\n"
        "[LearningRate]\n"
        f"lr = {train.lr}\n"
        f"lr_strategy = {train.lr_strategy}\n\n"
        "[dataset]\n"
        f"_name = {train.dataset}\n\n"
        "[backend]\n"
        + "".join(f"{k} = {v}\n" for k, v in asdict(backend).items())
    )


def settings_map(
    train: TrainerSettings, backend: BackendConfig, decode_settings: dict[str, str] | None = None
) -> dict[str, str]:
    """Flatten trainer, backend, and decode parameters into the per-job settings."""
    out = {
        "optimizer": train.optimizer,
        "batch_size": str(train.batch_size),
        "total_epoch": str(train.total_epoch),
        "lr": repr(train.lr),
        "lr_strategy": train.lr_strategy,
        "dataset": train.dataset.lower(),
        "backend": backend.kind,
        "tau": repr(backend.tau),
        "sigma": repr(backend.sigma),
        "c0": repr(backend.c0),
        "c1": repr(backend.c1),
    }
    if backend.kind == "command":
        out["command"] = backend.command
        out["timeout_s"] = repr(backend.timeout_s)
    if backend.kind == "lookup":
        out["table"] = backend.table
        out["fallback"] = backend.fallback
    out.update(decode_settings or {})
    return out


def canonical_settings_text(settings: dict[str, str]) -> str:
    return "".join(f"{k}={settings[k]}\n" for k in sorted(settings))


def settings_digest(settings: dict[str, str]) -> str:
    return hashlib.sha224(canonical_settings_text(settings).encode("utf-8")).hexdigest()
