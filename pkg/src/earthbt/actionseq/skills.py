from __future__ import annotations

import enum
from dataclasses import dataclass


class MachineKind(str, enum.Enum):
    EXCAVATOR = "Excavator"
    DUMP_TRUCK = "DumpTruck"


class ParamKind(str, enum.Enum):
    MACHINE = "Machine"
    PLACE = "Place"


@dataclass(frozen=True)
class SkillSignature:
    name: str
    machine_kinds: frozenset[MachineKind]
    params: tuple[tuple[str, ParamKind], ...]
    description: str = ""

    @property
    def arity(self) -> int:
        return len(self.params)

    def usage(self) -> str:
        return f"{self.name}({', '.join(p for p, _ in self.params)})"


_EX = frozenset({MachineKind.EXCAVATOR})
_DT = frozenset({MachineKind.DUMP_TRUCK})
_BOTH = _EX | _DT
_M = ("machine", ParamKind.MACHINE)

SKILLS: dict[str, SkillSignature] = {s.name: s for s in [
    SkillSignature("move", _BOTH, (_M, ("destination", ParamKind.PLACE)),
                   "Drive the machine to a named place."),
    SkillSignature("initial_pose", _EX, (_M,),
                   "Bring the arm and bucket back to the stowed starting pose."),
    SkillSignature("excavate_and_release", _EX,
                   (_M, ("excavate_place", ParamKind.PLACE), ("release_place", ParamKind.PLACE)),
                   "Dig one bucket at excavate_place and empty it at release_place."),
    SkillSignature("level", _EX, (_M, ("level_place", ParamKind.PLACE)),
                   "Smooth the soil surface at level_place."),
    SkillSignature("gather", _EX, (_M, ("gather_place", ParamKind.PLACE)),
                   "Pull loose soil together into a pile at gather_place."),
    SkillSignature("dump_soil", _DT, (_M,),
                   "Tip the bed and unload where the truck stands."),
]}


def skills_table() -> str:
    """Plain-text skill table, grouped by machine kind, for prompts and docs."""
    lines = ["Machine Type | Skill | Description"]
    for kind in MachineKind:
        for sig in SKILLS.values():
            if kind in sig.machine_kinds:
                lines.append(f"{kind.value} | {sig.usage()} | {sig.description}")
    return "\n".join(lines)
