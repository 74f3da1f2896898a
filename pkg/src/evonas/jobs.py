"""Dispatchable fitness-evaluation units and their results."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class JobSpec:
    """One fitness evaluation: a genotype payload plus the trainer snapshot.

    ``payload`` is the canonical genotype text (workers decode it themselves),
    ``settings`` the flattened trainer/backend/decode parameters, and
    ``epochs`` the phase's epoch budget.
    """

    name: str
    identifier: str
    payload: str
    backend: str
    settings: dict[str, str] = field(default_factory=dict)
    seed: int = 0
    epochs: int = 1

    def to_message(self) -> dict:
        return {
            "type": "job",
            "name": self.name,
            "identifier": self.identifier,
            "payload": self.payload,
            "backend": self.backend,
            "settings": dict(self.settings),
            "seed": self.seed,
            "epochs": self.epochs,
        }

    @staticmethod
    def from_message(msg: dict) -> "JobSpec":
        return JobSpec(
            name=msg["name"],
            identifier=msg["identifier"],
            payload=msg["payload"],
            backend=msg["backend"],
            settings=dict(msg.get("settings", {})),
            seed=int(msg.get("seed", 0)),
            epochs=int(msg.get("epochs", 1)),
        )


@dataclass(frozen=True)
class JobResult:
    name: str
    identifier: str
    value: float  # fitness as percent in [0, 100], quantized to 2 decimals
    duration_s: float
    ok: bool = True
    error: str = ""
