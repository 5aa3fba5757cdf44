"""Scenario files: site layout, machines, task description and goal predicate."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .actionseq import MachineKind
from .btcompile import TaskParamDB
from .flagcore import FlagRegistryEntry, default_registry

CATEGORIES = ("Single", "Coordinated")
GOAL_TYPES = ("soil_at", "bed_load", "machine_at", "pose", "completed")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Place:
    name: str
    x: float
    y: float
    slots: int = 1
    soil: int = 0
    near: tuple[str, ...] = ()


@dataclass(frozen=True)
class MachineSpec:
    id: str
    kind: MachineKind
    place: str
    pose: str = "initial"
    bed_load: int = 0


@dataclass
class Scenario:
    id: int
    instruction: str
    category: str
    excavators: int
    dump_trucks: int
    places: dict[str, Place]
    machines: list[MachineSpec]
    loading_place: str = "loading_site"
    task: list[dict] = field(default_factory=list)
    goal: list[dict] = field(default_factory=list)
    provenance: str = "derived"
    travel_speed: float = 2.0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ScenarioError(f"category must be one of {CATEGORIES}")
        if self.excavators < 0 or self.dump_trucks < 0:
            raise ScenarioError("machine counts must be >= 0")
        kinds = [m.kind for m in self.machines]
        if (kinds.count(MachineKind.EXCAVATOR), kinds.count(MachineKind.DUMP_TRUCK)) != \
                (self.excavators, self.dump_trucks):
            raise ScenarioError(f"scenario {self.id}: machine list does not match the counts")
        coordinated = len(self.machines) > 1
        if coordinated != (self.category == "Coordinated"):
            raise ScenarioError(f"scenario {self.id}: category {self.category} "
                                f"with {len(self.machines)} machine(s)")
        for m in self.machines:
            if m.place not in self.places:
                raise ScenarioError(f"{m.id} starts at unknown place {m.place!r}")
            if m.kind is MachineKind.EXCAVATOR and m.bed_load:
                raise ScenarioError(f"excavator {m.id} cannot carry a bed load")
        if self.loading_place not in self.places:
            raise ScenarioError(f"unknown loading place {self.loading_place!r}")
        for clause in self.goal:
            if clause.get("type") not in GOAL_TYPES:
                raise ScenarioError(f"unknown goal clause {clause!r}")

    @property
    def machine_kinds(self) -> dict[str, MachineKind]:
        return {m.id: m.kind for m in self.machines}

    def machine(self, machine_id: str) -> MachineSpec:
        for m in self.machines:
            if m.id == machine_id:
                return m
        raise KeyError(machine_id)

    def registry(self) -> list[FlagRegistryEntry]:
        return default_registry(self.places)

    def total_soil(self) -> int:
        return sum(p.soil for p in self.places.values()) + sum(m.bed_load for m in self.machines)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        site = d["site"]
        places = {name: Place(name, float(p["x"]), float(p["y"]), int(p.get("slots", 1)),
                              int(p.get("soil", 0)), tuple(p.get("near", ())))
                  for name, p in site["places"].items()}
        machines = [MachineSpec(m["id"], MachineKind(m["kind"]), m["place"],
                                m.get("pose", "initial"), int(m.get("bed_load", 0)))
                    for m in d["machines"]]
        return cls(id=int(d["id"]), instruction=d["instruction"], category=d["category"],
                   excavators=int(d["excavators"]), dump_trucks=int(d["dump_trucks"]),
                   places=places, machines=machines,
                   loading_place=site.get("loading_place", "loading_site"),
                   task=list(d.get("task", [])), goal=list(d.get("goal", [])),
                   provenance=d.get("provenance", "derived"),
                   travel_speed=float(site.get("travel_speed", 2.0)))

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "id": self.id,
            "instruction": self.instruction,
            "category": self.category,
            "excavators": self.excavators,
            "dump_trucks": self.dump_trucks,
            "site": {
                "loading_place": self.loading_place,
                "travel_speed": self.travel_speed,
                "places": {p.name: {"x": p.x, "y": p.y, "slots": p.slots, "soil": p.soil,
                                    "near": list(p.near)} for p in self.places.values()},
            },
            "machines": [{"id": m.id, "kind": m.kind.value, "place": m.place, "pose": m.pose,
                          "bed_load": m.bed_load} for m in self.machines],
            "task": self.task,
            "goal": self.goal,
        }


def load_scenario(path: str | Path) -> Scenario:
    try:
        return Scenario.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def catalog_dir() -> Path:
    return Path(str(resources.files("earthbt") / "data" / "catalog"))


def load_catalog(directory: str | Path | None = None) -> list[Scenario]:
    directory = Path(directory) if directory else catalog_dir()
    found = [load_scenario(p) for p in sorted(directory.glob("*.json"))]
    return sorted(found, key=lambda s: s.id)


def find_scenario(scenario_id: int, directory: str | Path | None = None) -> Scenario:
    for s in load_catalog(directory):
        if s.id == scenario_id:
            return s
    raise ScenarioError(f"no scenario {scenario_id} in catalog")


def base_paramdb_path() -> Path:
    return Path(str(resources.files("earthbt") / "data" / "paramdb.json"))


def paramdb_for(scenario: Scenario, base: TaskParamDB | None = None) -> TaskParamDB:
    """Joint targets and durations from ``base``; coordinates, start places and
    straight-line paths from the scenario site."""
    if base is None:
        base = TaskParamDB.load(base_paramdb_path())
    db = TaskParamDB(paths=dict(base.paths), joint_targets=dict(base.joint_targets),
                     skill_durations=dict(base.skill_durations),
                     place_coords={p.name: (p.x, p.y) for p in scenario.places.values()},
                     initial_places={m.id: m.place for m in scenario.machines})
    db.add_straight_paths(scenario.travel_speed)
    return db
