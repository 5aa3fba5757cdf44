from __future__ import annotations

from dataclasses import dataclass, field

from .expr import ALWAYS, FlagExpr, flag_names
from .skills import SKILLS, SkillSignature


@dataclass(frozen=True)
class ActionStatement:
    index: int
    skill: str
    machine: str
    params: tuple[str, ...] = ()
    precondition: FlagExpr = ALWAYS
    reasoning: str = ""

    @property
    def signature(self) -> SkillSignature:
        return SKILLS[self.skill]

    @property
    def args(self) -> tuple[str, ...]:
        """Machine followed by the remaining parameters, as written."""
        return (self.machine, *self.params)

    def flags(self) -> list[str]:
        return flag_names(self.precondition)


@dataclass(frozen=True)
class ActionSequence:
    statements: tuple[ActionStatement, ...] = ()
    generated_flags: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "statements", tuple(self.statements))
        object.__setattr__(self, "generated_flags", tuple(tuple(f) for f in self.generated_flags))

    def __len__(self) -> int:
        return len(self.statements)

    @property
    def machines(self) -> list[str]:
        """Machines in first-appearance order."""
        return list(dict.fromkeys(s.machine for s in self.statements))

    def statement(self, index: int) -> ActionStatement:
        return self.statements[index - 1]

    def flag_descriptions(self) -> dict[str, str]:
        return dict(self.generated_flags)

    def for_machine(self, machine: str) -> list[ActionStatement]:
        return [s for s in self.statements if s.machine == machine]
