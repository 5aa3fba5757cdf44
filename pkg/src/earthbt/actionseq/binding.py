"""Resolve each generated flag to the statement whose completion sets it.

Flag names carry the binding: ``<MACHINE>_<STATE>[_<n>]_FLG``. The machine
prefix is the machine id upper-cased, with or without its underscores
(``dump_truck_1`` -> ``DUMP_TRUCK_1`` or ``DUMPTRUCK1``). The state part
selects a skill of that machine:

=====================  ==========================================
state                  skill
=====================  ==========================================
INITIAL_POSE, READY,   initial_pose
RESET, HOME
AT_<DEST>, ARRIVED_    move(machine, dest)
<DEST>
LOADED, LOADING_DONE,  excavate_and_release
EXCAVATED, RELEASED
DUMPED, DUMP_DONE      dump_soil
LEVELED, LEVELLED,     level
LEVEL_DONE
GATHERED, GATHER_DONE  gather
=====================  ==========================================

When a machine runs the matching skill more than once, a trailing ordinal
``_<n>`` picks the n-th occurrence; without it the name is ambiguous.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .model import ActionSequence, ActionStatement

STATE_WORDS: dict[str, tuple[str, ...]] = {
    "initial_pose": ("INITIAL_POSE", "READY", "RESET", "HOME"),
    "excavate_and_release": ("LOADED", "LOADING_DONE", "EXCAVATED", "RELEASED"),
    "dump_soil": ("DUMPED", "DUMP_DONE"),
    "level": ("LEVELED", "LEVELLED", "LEVEL_DONE"),
    "gather": ("GATHERED", "GATHER_DONE"),
}
MOVE_PREFIXES = ("AT_", "ARRIVED_")

_ORDINAL_RE = re.compile(r"^_(\d+)$")


class BindingError(ValueError):
    def __init__(self, flag: str, code: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag
        self.code = code


@dataclass(frozen=True)
class Binding:
    flag: str
    statement: int
    value: bool = True
    boundary: str = "OnCompletion"


def machine_keys(machine: str) -> tuple[str, ...]:
    up = machine.upper()
    return tuple(dict.fromkeys((up, up.replace("_", ""))))


def flag_prefix(machine: str) -> str:
    """Preferred flag-name prefix for ``machine`` (``dump_truck_1`` -> ``DUMPTRUCK1``)."""
    return machine.upper().replace("_", "")


def _state_match(state: str, stmt: ActionStatement) -> tuple[bool, int | None]:
    """(matches, ordinal) for one candidate statement; exact matches report ordinal None."""
    if stmt.skill == "move":
        words = tuple(p + stmt.params[0].upper() for p in MOVE_PREFIXES)
    else:
        words = STATE_WORDS.get(stmt.skill, ())
    for word in words:
        if state == word:
            return True, None
        if state.startswith(word):
            m = _ORDINAL_RE.match(state[len(word):])
            if m:
                return True, int(m.group(1))
    return False, None


def bind_flag(flag: str, seq: ActionSequence) -> Binding:
    if not flag.endswith("_FLG"):
        raise BindingError(flag, "FlagUnbound", "not a flag name")
    body = flag[: -len("_FLG")]
    best: list[tuple[str, str]] = []
    for machine in seq.machines:
        for key in machine_keys(machine):
            if body.startswith(key + "_"):
                best.append((machine, key))
    if not best:
        raise BindingError(flag, "FlagUnbound", "name does not start with a machine of the sequence")
    longest = max(len(k) for _, k in best)
    machines = sorted({m for m, k in best if len(k) == longest})
    if len(machines) > 1:
        raise BindingError(flag, "FlagAmbiguous", f"prefix matches machines {machines}")
    machine = machines[0]
    state = body[longest + 1:]

    own = seq.for_machine(machine)
    exact: list[ActionStatement] = []
    hits: list[ActionStatement] = []
    for stmt in own:
        ok, ordinal = _state_match(state, stmt)
        if not ok:
            continue
        if ordinal is None:
            exact.append(stmt)
            continue
        # ordinal counts among this machine's statements with the same skill (and destination)
        group = [s for s in own if s.skill == stmt.skill
                 and (s.skill != "move" or s.params[:1] == stmt.params[:1])]
        if 0 < ordinal <= len(group) and group[ordinal - 1] is stmt:
            hits.append(stmt)

    if exact:
        if len(exact) > 1:
            where = ", ".join(str(s.index) for s in exact)
            raise BindingError(flag, "FlagAmbiguous",
                               f"matches statements {where}; add an ordinal suffix")
        return Binding(flag, exact[0].index)
    if len(hits) == 1:
        return Binding(flag, hits[0].index)
    if len(hits) > 1:
        where = ", ".join(str(s.index) for s in hits)
        raise BindingError(flag, "FlagAmbiguous", f"matches statements {where}")
    raise BindingError(flag, "FlagUnbound",
                       f"no statement of {machine} matches state {state!r}")


def bind_flags(seq: ActionSequence) -> tuple[dict[str, Binding], list[BindingError]]:
    bindings: dict[str, Binding] = {}
    errors: list[BindingError] = []
    for name, _ in seq.generated_flags:
        try:
            bindings[name] = bind_flag(name, seq)
        except BindingError as exc:
            errors.append(exc)
    return bindings, errors
