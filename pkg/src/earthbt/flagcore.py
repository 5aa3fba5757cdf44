"""Global Blackboard: the shared boolean flag store all machine trees talk through.

Writes are linearized under one lock. A write that does not change the stored
value is a no-op: no version bump, no history event.
"""
from __future__ import annotations

import enum
import json
import queue
import re
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator

FLAG_NAME_RE = re.compile(r"^[A-Z][A-Z0-9_]*_FLG$")

SENSING_LOADED = "SENSING_LOADED_FLG"
SENSING_ARRIVAL = "SENSING_ARRIVAL_FLG"


class FlagError(Exception):
    pass


class DuplicateFlag(FlagError):
    def __init__(self, name: str):
        super().__init__(f"duplicate flag {name!r}")
        self.name = name


class UnknownFlag(FlagError, KeyError):
    def __init__(self, name: str):
        super().__init__(f"unknown flag {name!r}")
        self.name = name

    def __str__(self) -> str:
        return self.args[0]


class InvalidFlagName(FlagError, ValueError):
    pass


def is_flag_name(name: str) -> bool:
    return bool(FLAG_NAME_RE.match(name))


def check_flag_name(name: str) -> str:
    if not is_flag_name(name):
        raise InvalidFlagName(f"{name!r} is not a flag name (UPPER_SNAKE ending in _FLG)")
    return name


def place_flag(place: str) -> str:
    """Name of the sensing flag that is true while a machine stands at ``place``."""
    return f"SENSING_AT_{place.upper()}_FLG"


class FlagKind(str, enum.Enum):
    DEFAULT = "Default"
    GENERATED = "Generated"


class Source(str, enum.Enum):
    SENSING = "Sensing"
    ACTION = "Action"
    EXTERNAL = "External"


@dataclass(frozen=True)
class FlagRegistryEntry:
    name: str
    kind: FlagKind = FlagKind.DEFAULT
    initial: bool = False
    description: str = ""

    def __post_init__(self):
        check_flag_name(self.name)
        object.__setattr__(self, "kind", FlagKind(self.kind))
        if self.kind is FlagKind.GENERATED and not self.description.strip():
            raise ValueError(f"generated flag {self.name} needs a description")

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind.value,
                "initial": self.initial, "description": self.description}


@dataclass(frozen=True)
class FlagEvent:
    name: str
    old: bool
    new: bool
    version: int
    tick: int = 0
    source: Source = Source.EXTERNAL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source"] = Source(self.source).value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FlagEvent":
        return cls(name=d["name"], old=bool(d["old"]), new=bool(d["new"]),
                   version=int(d["version"]), tick=int(d.get("tick", 0)),
                   source=Source(d.get("source", "External")))


@dataclass(frozen=True)
class Snapshot:
    values: dict[str, bool]
    version: int

    def __getitem__(self, name: str) -> bool:
        return self.values[name]


class Subscription:
    """Single-consumer queue of FlagEvents for a fixed set of flag names."""

    def __init__(self, names: frozenset[str]):
        self.names = names
        self._queue: queue.SimpleQueue[FlagEvent] = queue.SimpleQueue()

    def _push(self, event: FlagEvent) -> None:
        self._queue.put(event)

    def get(self, timeout: float | None = None) -> FlagEvent:
        """Block for the next event; raises ``queue.Empty`` on timeout."""
        return self._queue.get(timeout=timeout)

    def drain(self) -> list[FlagEvent]:
        out = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out

    def __iter__(self) -> Iterator[FlagEvent]:
        return iter(self.drain())


class GlobalBlackboard:
    """Versioned boolean flag store, safe for concurrent readers and writers."""

    def __init__(self, registry: Iterable[FlagRegistryEntry] = ()):
        self._lock = threading.Lock()
        self._entries: dict[str, FlagRegistryEntry] = {}
        self._values: dict[str, bool] = {}
        self._version = 0
        self._history: list[FlagEvent] = []
        self._subs: list[Subscription] = []
        for entry in registry:
            if entry.name in self._entries:
                raise DuplicateFlag(entry.name)
            self._entries[entry.name] = entry
            self._values[entry.name] = bool(entry.initial)

    @property
    def version(self) -> int:
        with self._lock:
            return self._version

    @property
    def history(self) -> list[FlagEvent]:
        with self._lock:
            return list(self._history)

    @property
    def registry(self) -> list[FlagRegistryEntry]:
        return list(self._entries.values())

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return list(self._entries)

    def set_flag(self, name: str, value: bool, source: Source = Source.EXTERNAL,
                 tick: int = 0) -> int:
        value = bool(value)
        with self._lock:
            if name not in self._values:
                raise UnknownFlag(name)
            old = self._values[name]
            if old == value:
                return self._version
            self._version += 1
            self._values[name] = value
            event = FlagEvent(name, old, value, self._version, tick, Source(source))
            self._history.append(event)
            for sub in self._subs:
                if name in sub.names:
                    sub._push(event)
            return self._version

    def get_flag(self, name: str) -> bool:
        with self._lock:
            try:
                return self._values[name]
            except KeyError:
                raise UnknownFlag(name) from None

    def snapshot(self) -> Snapshot:
        with self._lock:
            return Snapshot(dict(self._values), self._version)

    def subscribe(self, names: Iterable[str]) -> Subscription:
        names = frozenset(names)
        with self._lock:
            for n in names:
                if n not in self._values:
                    raise UnknownFlag(n)
            sub = Subscription(names)
            self._subs.append(sub)
            return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def initial_values(self) -> dict[str, bool]:
        return {n: e.initial for n, e in self._entries.items()}


def create_blackboard(registry: Iterable[FlagRegistryEntry]) -> GlobalBlackboard:
    return GlobalBlackboard(registry)


def set_flag(bb: GlobalBlackboard, name: str, value: bool,
             source: Source = Source.EXTERNAL, tick: int = 0) -> int:
    return bb.set_flag(name, value, source, tick)


def get_flag(bb: GlobalBlackboard, name: str) -> bool:
    return bb.get_flag(name)


def snapshot(bb: GlobalBlackboard) -> Snapshot:
    return bb.snapshot()


def subscribe(bb: GlobalBlackboard, names: Iterable[str]) -> Subscription:
    return bb.subscribe(names)


def replay(registry: Iterable[FlagRegistryEntry], history: Iterable[FlagEvent]) -> GlobalBlackboard:
    """Rebuild a blackboard by re-applying ``history`` in order."""
    bb = GlobalBlackboard(registry)
    for event in history:
        bb.set_flag(event.name, event.new, event.source, event.tick)
    return bb


# -- registry helpers -------------------------------------------------------

def default_registry(places: Iterable[str] = ()) -> list[FlagRegistryEntry]:
    entries = [
        FlagRegistryEntry(SENSING_LOADED, FlagKind.DEFAULT, False,
                          "True when some dump truck bed holds soil; False otherwise."),
        FlagRegistryEntry(SENSING_ARRIVAL, FlagKind.DEFAULT, False,
                          "True when a dump truck occupies the loading place; False otherwise."),
    ]
    for place in sorted(set(places)):
        entries.append(FlagRegistryEntry(
            place_flag(place), FlagKind.DEFAULT, False,
            f"True when a machine stands at {place}; False otherwise."))
    return entries


def registry_from_json(data: list[dict]) -> list[FlagRegistryEntry]:
    return [FlagRegistryEntry(name=d["name"], kind=FlagKind(d.get("kind", "Default")),
                              initial=bool(d.get("initial", False)),
                              description=d.get("description", ""))
            for d in data]


def load_registry(path: str | Path) -> list[FlagRegistryEntry]:
    return registry_from_json(json.loads(Path(path).read_text()))


def dump_registry(entries: Iterable[FlagRegistryEntry], path: str | Path) -> None:
    Path(path).write_text(json.dumps([e.to_dict() for e in entries], indent=2) + "\n")


def history_to_jsonl(history: Iterable[FlagEvent]) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in history)


def history_from_jsonl(text: str) -> list[FlagEvent]:
    return [FlagEvent.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
