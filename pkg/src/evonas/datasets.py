"""Benchmark dataset registry: name -> (input shape, class count).

Data preprocessing options (cutout, mixup, resize, denoise) are passed through
to external trainers by name only; nothing here touches pixels.
"""

from __future__ import annotations

from .errors import ConfigError

DATASETS: dict[str, tuple[tuple[int, int, int], int]] = {
    "mnist": ((1, 28, 28), 10),
    "cifar10": ((3, 32, 32), 10),
    "cifar100": ((3, 32, 32), 100),
    "imagenet": ((3, 224, 224), 1000),
}


def dataset_spec(name: str) -> tuple[tuple[int, int, int], int]:
    try:
        return DATASETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown dataset {name!r}; known: {sorted(DATASETS)}") from None
