"""Durable fitness cache keyed by genotype identifier.

One UTF-8 text file per run directory. The first line records a digest of the
trainer settings; a cache whose digest differs from the current run's settings
is refused, because cached fitness values are only comparable under identical
data and trainer settings. Each following line is one entry::

    <56-hex identifier> = <fitness percent, 2 decimals>

Entries are append-only and first-write-wins; they are never updated.
"""

from __future__ import annotations

import re
from pathlib import Path

from .errors import ConfigError, InvariantViolation, PersistError

HEADER_PREFIX = "#traincfg="
ENTRY_RE = re.compile(r"^([0-9a-f]{56}) = (\d{1,3}\.\d{2})$")


class ResultCache:
    def __init__(self, path: Path | str, settings_digest: str):
        self.path = Path(path)
        self.settings_digest = settings_digest
        self._entries: dict[str, float] = {}
        if self.path.exists():
            self._load()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            try:
                self.path.write_text(f"{HEADER_PREFIX}{settings_digest}\n", encoding="utf-8")
            except OSError as exc:
                raise PersistError(f"cannot create cache file {self.path}: {exc}") from exc

    def _load(self) -> None:
        lines = self.path.read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith(HEADER_PREFIX):
            raise ConfigError(f"cache file {self.path} has no settings header")
        found = lines[0][len(HEADER_PREFIX):]
        if found != self.settings_digest:
            raise ConfigError(
                f"cache at {self.path} was built under different trainer settings "
                f"(digest {found[:12]}.. != {self.settings_digest[:12]}..); refusing to reuse it"
            )
        for lineno, line in enumerate(lines[1:], start=2):
            m = ENTRY_RE.match(line)
            if m is None:
                raise ConfigError(f"malformed cache entry at {self.path}:{lineno}: {line!r}")
            self._entries.setdefault(m.group(1), float(m.group(2)))

    def lookup(self, identifier: str) -> float | None:
        """Cached fitness (percent) for an identifier, or None on a miss."""
        return self._entries.get(identifier)

    def insert(self, identifier: str, value: float) -> bool:
        """Append an entry unless the identifier is already present.

        Returns True when the entry was written. The first value stored for an
        identifier is retained forever.
        """
        if not re.fullmatch(r"[0-9a-f]{56}", identifier):
            raise InvariantViolation(f"bad identifier {identifier!r}")
        if not 0.0 <= value <= 100.0:
            raise InvariantViolation(f"fitness percent out of range: {value}")
        if identifier in self._entries:
            return False
        quantized = float(f"{value:.2f}")
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(f"{identifier} = {quantized:.2f}\n")
                fh.flush()
        except OSError as exc:
            raise PersistError(f"cannot append to cache file {self.path}: {exc}") from exc
        self._entries[identifier] = quantized
        return True

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, identifier: str) -> bool:
        return identifier in self._entries
