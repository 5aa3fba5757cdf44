"""Redundant-flag detection (the NRF count).

A generated flag is redundant when

* DuplicateSemantics: another generated flag is set at the same statement
  boundary and read by exactly the same statements, or
* IntraMachineSuperfluous: every statement reading it belongs to the machine
  that sets it (statement order on that machine already gives the ordering).
  A flag nobody reads falls under this rule vacuously.

Default flags have no setter statement, so a generated flag that mirrors a
sensed state is never counted.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .binding import bind_flags
from .model import ActionSequence


class Unvalidated(ValueError):
    pass


@dataclass
class FlagAnalysis:
    redundant: list[tuple[str, str]] = field(default_factory=list)

    @property
    def nrf(self) -> int:
        return len(self.redundant)

    def to_dict(self) -> dict:
        return {"nrf": self.nrf,
                "redundant": [{"flag": f, "reason": r} for f, r in self.redundant]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def use_sites(seq: ActionSequence) -> dict[str, frozenset[int]]:
    sites: dict[str, set[int]] = {name: set() for name, _ in seq.generated_flags}
    for stmt in seq.statements:
        for name in stmt.flags():
            if name in sites:
                sites[name].add(stmt.index)
    return {k: frozenset(v) for k, v in sites.items()}


def analyze_flags(seq: ActionSequence) -> FlagAnalysis:
    bindings, errors = bind_flags(seq)
    if errors:
        raise Unvalidated("; ".join(str(e) for e in errors))
    uses = use_sites(seq)
    result = FlagAnalysis()
    seen: dict[tuple[int, frozenset[int]], str] = {}
    for name, _ in seq.generated_flags:
        setter = bindings[name].statement
        key = (setter, uses[name])
        if key in seen:
            result.redundant.append((name, "DuplicateSemantics"))
            continue
        seen[key] = name
        owner = seq.statement(setter).machine
        if all(seq.statement(i).machine == owner for i in uses[name]):
            result.redundant.append((name, "IntraMachineSuperfluous"))
    return result
