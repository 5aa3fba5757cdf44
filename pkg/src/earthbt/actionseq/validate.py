from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ..flagcore import SENSING_ARRIVAL, SENSING_LOADED, FlagRegistryEntry, is_flag_name
from .binding import bind_flags
from .expr import leaves
from .model import ActionSequence
from .skills import SKILLS, MachineKind, ParamKind

_SENSED_RE = re.compile(r"^SENSING_AT_[A-Z0-9_]+_FLG$")


@dataclass(frozen=True)
class Problem:
    where: int | str  # statement index or flag name
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"where": self.where, "code": self.code, "message": self.message}


@dataclass
class ValidationReport:
    errors: list[Problem] = field(default_factory=list)
    warnings: list[Problem] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [p.code for p in self.errors]

    def to_dict(self) -> dict:
        return {"errors": [p.to_dict() for p in self.errors],
                "warnings": [p.to_dict() for p in self.warnings]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format(self) -> str:
        lines = []
        for label, items in (("error", self.errors), ("warning", self.warnings)):
            for p in items:
                where = f"statement {p.where}" if isinstance(p.where, int) else p.where
                lines.append(f"{label}: {where}: [{p.code}] {p.message}")
        return "\n".join(lines) if lines else "ok"


def is_sensed(name: str) -> bool:
    """Default flags the site sensing system keeps up to date."""
    return name in (SENSING_LOADED, SENSING_ARRIVAL) or bool(_SENSED_RE.match(name))


def validate(seq: ActionSequence, machines: Mapping[str, MachineKind | str],
             places: Iterable[str], registry: Iterable[FlagRegistryEntry] = ()) -> ValidationReport:
    report = ValidationReport()
    err = report.errors.append
    warn = report.warnings.append
    kinds = {m: MachineKind(k) for m, k in machines.items()}
    places = set(places)
    defaults = {e.name for e in registry}

    declared: dict[str, str] = {}
    for name, desc in seq.generated_flags:
        if not is_flag_name(name):
            err(Problem(name, "InvalidFlagName", "flag names are UPPER_SNAKE and end in _FLG"))
        if name in declared:
            err(Problem(name, "DuplicateFlagDeclaration", "declared more than once"))
        elif name in defaults:
            err(Problem(name, "DuplicateFlagDeclaration", "redeclares a default flag"))
        if not desc.strip():
            err(Problem(name, "MissingDescription", "generated flags need a description"))
        declared.setdefault(name, desc)

    for i, stmt in enumerate(seq.statements, start=1):
        if stmt.index != i:
            err(Problem(i, "BadIndex", f"statement numbered {stmt.index}, expected {i}"))
        sig = SKILLS.get(stmt.skill)
        if sig is None:
            err(Problem(i, "UnknownSkill", f"unknown skill {stmt.skill!r}"))
            continue
        if len(stmt.args) != sig.arity:
            err(Problem(i, "BadArity", f"{stmt.skill} takes {sig.arity} argument(s)"))
            continue
        kind = kinds.get(stmt.machine)
        if kind is None:
            err(Problem(i, "UnknownMachine", f"unknown machine {stmt.machine!r}"))
        elif kind not in sig.machine_kinds:
            allowed = "/".join(sorted(k.value for k in sig.machine_kinds))
            err(Problem(i, "SkillKindMismatch",
                        f"{stmt.skill} is a {allowed} skill, {stmt.machine} is a {kind.value}"))
        for (pname, pkind), value in zip(sig.params[1:], stmt.params):
            if pkind is ParamKind.MACHINE and value not in kinds:
                err(Problem(i, "UnknownMachine", f"{pname}={value!r} is not a machine"))
            elif pkind is ParamKind.PLACE and value not in places and value not in kinds:
                err(Problem(i, "UnknownPlace", f"{pname}={value!r} is not a place"))
        for leaf in leaves(stmt.precondition):
            if leaf.flag not in declared and leaf.flag not in defaults:
                err(Problem(i, "UndeclaredFlag", f"{leaf.flag} is neither default nor declared"))

    bindings, binding_errors = bind_flags(seq)
    for exc in binding_errors:
        err(Problem(exc.flag, exc.code, str(exc)))

    users: dict[str, list[int]] = {}
    for stmt in seq.statements:
        for name in stmt.flags():
            users.setdefault(name, []).append(stmt.index)
    for stmt in seq.statements:
        for leaf in leaves(stmt.precondition):
            name = leaf.flag
            if name in defaults and name not in declared and not is_sensed(name) and leaf.expected:
                warn(Problem(stmt.index, "FlagNeverSet",
                             f"{name} has no setter statement and no sensing source"))
            binding = bindings.get(name)
            if binding is None or not leaf.expected:
                continue
            setter = seq.statement(binding.statement)
            if setter.machine == stmt.machine and binding.statement >= stmt.index:
                warn(Problem(stmt.index, "FlagNeverSet",
                             f"{name} is set by statement {binding.statement} of the same machine, "
                             "which cannot run first"))
    for name in declared:
        if name not in users:
            warn(Problem(name, "UnusedFlag", "declared but no precondition uses it"))
    return report
