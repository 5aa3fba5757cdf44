"""Deterministic planner for catalog scenarios.

Scenario tasks are lists of ops. Single-machine ops map to one statement each.
A ``haul`` op expands into the loading cycle::

    initial_pose(E)
    move(T, loading)          depends_on E reset (and the previous loader gone)
    excavate_and_release(E)   depends_on T at loading and SENSING_ARRIVAL_FLG
    [level(E, T)]
    initial_pose(E)
    move(T, dump)             depends_on E reset (and the previous dumper gone)
    dump_soil(T)
    [move(T, park)]           when another truck needs the dump place later

Only flags read by another machine are generated, so no flag is redundant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..actionseq import ActionSequence, ActionStatement, And, Leaf, flag_prefix
from ..actionseq.expr import ALWAYS
from ..flagcore import SENSING_ARRIVAL
from ..scenario import Scenario


class UnsupportedScenario(ValueError):
    pass


_STATE = {"initial_pose": "INITIAL_POSE", "excavate_and_release": "LOADED", "dump_soil": "DUMPED",
          "level": "LEVELED", "gather": "GATHERED"}
_DESC = {"initial_pose": "{m} has returned to its initial pose",
         "move": "{m} has arrived at {p}",
         "excavate_and_release": "{m} has released a bucket of soil",
         "dump_soil": "{m} has dumped its load",
         "level": "{m} has leveled {p}",
         "gather": "{m} has gathered soil at {p}"}


@dataclass
class _Step:
    skill: str
    machine: str
    params: tuple[str, ...]
    waits_on: list[int] = field(default_factory=list)  # indices into the step list
    sensed: list[str] = field(default_factory=list)
    why: str = ""


class _Builder:
    def __init__(self):
        self.steps: list[_Step] = []

    def add(self, skill: str, machine: str, *params: str, waits_on=(), sensed=(), why="") -> int:
        deps = []
        for i in waits_on:
            if i is not None and self.steps[i].machine != machine and i not in deps:
                deps.append(i)
        self.steps.append(_Step(skill, machine, params, deps, list(sensed), why))
        return len(self.steps) - 1

    def last(self, machine: str) -> _Step | None:
        for s in reversed(self.steps):
            if s.machine == machine:
                return s
        return None

    def _group(self, i: int) -> list[int]:
        s = self.steps[i]
        return [j for j, o in enumerate(self.steps)
                if o.machine == s.machine and o.skill == s.skill
                and (s.skill != "move" or o.params[:1] == s.params[:1])]

    def flag_name(self, i: int) -> str:
        s = self.steps[i]
        state = "AT_" + s.params[0].upper() if s.skill == "move" else _STATE[s.skill]
        group = self._group(i)
        nth = f"_{group.index(i) + 1}" if len(group) > 1 else ""
        return f"{flag_prefix(s.machine)}_{state}{nth}_FLG"

    def flag_description(self, i: int) -> str:
        s = self.steps[i]
        group = self._group(i)
        text = _DESC[s.skill].format(m=s.machine, p=s.params[0] if s.params else "")
        if len(group) > 1:
            text += f" (occurrence {group.index(i) + 1})"
        return f"True when {text}; False otherwise."

    def build(self) -> ActionSequence:
        used = sorted({i for s in self.steps for i in s.waits_on})
        statements = []
        for n, s in enumerate(self.steps, start=1):
            terms = [Leaf(self.flag_name(i), True) for i in s.waits_on]
            terms += [Leaf(f, True) for f in s.sensed]
            pre = And(tuple(terms)) if len(terms) > 1 else (terms[0] if terms else ALWAYS)
            statements.append(ActionStatement(n, s.skill, s.machine, s.params, pre, s.why))
        flags = tuple((self.flag_name(i), self.flag_description(i)) for i in used)
        return ActionSequence(tuple(statements), flags)


def _haul(b: _Builder, op: dict, scenario: Scenario, where: dict[str, str]) -> None:
    ex = op["excavator"]
    trips = op.get("trucks") or [op["truck"]] * int(op.get("trips", 1))
    loads = int(op.get("loads_per_trip", 1))
    source = op.get("source", "mound")
    dump_place = op.get("dump_place", "dumping_site")
    loading = scenario.loading_place
    for t in set(trips):
        if t not in scenario.machine_kinds:
            raise UnsupportedScenario(f"haul uses unknown truck {t!r}")

    last = b.last(ex)
    if last is None or last.skill != "initial_pose":
        e_init = b.add("initial_pose", ex, why="Return the excavator to its initial pose before "
                                                "any truck approaches.")
    else:
        e_init = len(b.steps) - 1 - b.steps[::-1].index(last)
    leave_loading: int | None = None   # arrival elsewhere of the last truck that loaded
    leave_dump: int | None = None      # departure of the last truck that dumped
    prev_loader = prev_dumper = None
    for k, truck in enumerate(trips):
        gate = [e_init] + ([leave_loading] if prev_loader not in (None, truck) else [])
        arrive = b.add("move", truck, loading, waits_on=gate,
                       why=f"Approach the loading place once the excavator is clear (trip {k + 1}).")
        where[truck] = loading
        for n in range(loads):
            b.add("excavate_and_release", ex, source, truck, waits_on=[arrive], sensed=[SENSING_ARRIVAL],
                  why=f"Load bucket {n + 1} of {loads} into {truck}.")
        if not op.get("deliver", True):
            if len(trips) > 1:
                raise UnsupportedScenario("a load-only haul takes a single trip")
            return
        if op.get("level"):
            b.add("level", ex, truck, why="Level the soil on the truck bed.")
        e_init = b.add("initial_pose", ex, why="Return to the initial pose so the truck can leave safely.")
        gate = [e_init] + ([leave_dump] if prev_dumper not in (None, truck) else [])
        at_dump = b.add("move", truck, dump_place, waits_on=gate,
                        why="Leave for the dumping place after the excavator has reset.")
        where[truck] = dump_place
        leave_loading, prev_loader = at_dump, truck
        b.add("dump_soil", truck, why="Unload the soil.")
        prev_dumper = truck
        if any(t != truck for t in trips[k + 1:]):
            park = scenario.machine(truck).place
            leave_dump = b.add("move", truck, park, why="Clear the dumping place for the other truck.")
            where[truck] = park
    after = op.get("return")
    if after:
        truck = trips[-1]
        place = scenario.machine(truck).place if after == "park" else after
        b.add("move", truck, place, why="Return after the final dump.")


def rule_planner(scenario: Scenario) -> ActionSequence:
    b = _Builder()
    where = {m.id: m.place for m in scenario.machines}
    for op in scenario.task:
        kind = op.get("op")
        if kind == "excavate":
            for _ in range(int(op.get("count", 1))):
                b.add("excavate_and_release", op["excavator"], op.get("source", "mound"),
                      op["target"], why="Excavate and release one bucket.")
        elif kind == "reset":
            b.add("initial_pose", op["machine"], why="Return to the initial pose.")
        elif kind == "move":
            b.add("move", op["machine"], op["place"], why=f"Move to {op['place']}.")
            where[op["machine"]] = op["place"]
        elif kind == "dump":
            b.add("dump_soil", op["machine"], why="Dump the soil at the current location.")
        elif kind == "level":
            b.add("level", op["machine"], op["place"], why=f"Level {op['place']}.")
        elif kind == "gather":
            b.add("gather", op["machine"], op["place"], why=f"Gather soil at {op['place']}.")
        elif kind == "haul":
            _haul(b, op, scenario, where)
        else:
            raise UnsupportedScenario(f"scenario {scenario.id}: unsupported op {kind!r}")
    return b.build()
