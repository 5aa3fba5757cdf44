"""Discrete-tick earthwork site simulator.

Every tick runs four steps:

1. sensing update: default flags are rewritten from world truth,
2. every unfinished tree is ticked in machine-id order (or in parallel in
   concurrent mode),
3. in-flight primitive actions advance by one tick,
4. detectors: collision, synchronization violation, tree failure, deadlock.

An action of duration ``d`` started at tick ``t`` completes during step 3 of
tick ``t + d - 1``; its leaf reports Success when polled at tick ``t + d``.
"""
from __future__ import annotations

import csv
import io
import json
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import networkx as nx

from .actionseq import MachineKind, eval_expr, to_text
from .actionseq.expr import MissingFlag, leaves
from .btcompile import CompiledPlan, statement_index
from .btree import ConcurrentTicker, PrimitiveAction, TickStatus, TreeInstance, Verb, tick_round_robin
from .flagcore import (SENSING_ARRIVAL, SENSING_LOADED, FlagKind, FlagRegistryEntry, GlobalBlackboard,
                       Source, place_flag)
from .scenario import Place, Scenario

SAFE_POSES = frozenset({"initial", "transport"})
DEFAULT_BUDGET = 5000
VIOLATION_KINDS = ("Collision", "Deadlock", "SyncViolation", "Timeout")


@dataclass
class MachineState:
    id: str
    kind: MachineKind
    place: str | None
    pose: str = "initial"
    bed_load: int = 0
    edge: tuple[str, int, int] | None = None  # (path id, progress, length)
    busy: PrimitiveAction | None = None


@dataclass
class SiteState:
    places: dict[str, Place]
    machines: dict[str, MachineState]
    soil: dict[str, int]
    loading_place: str
    tick: int = 0
    completed: Counter = field(default_factory=Counter)

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "SiteState":
        machines = {m.id: MachineState(m.id, m.kind, m.place, m.pose, m.bed_load)
                    for m in scenario.machines}
        return cls(places=dict(scenario.places), machines=machines,
                   soil={p.name: p.soil for p in scenario.places.values()},
                   loading_place=scenario.loading_place)

    def occupants(self, place: str) -> list[str]:
        return sorted(m.id for m in self.machines.values() if m.place == place)

    def reach(self, machine_id: str) -> set[str]:
        here = self.machines[machine_id].place
        if here is None:
            return set()
        return {here, *self.places[here].near}

    def total_soil(self) -> int:
        return sum(self.soil.values()) + sum(m.bed_load for m in self.machines.values())

    def excavators(self) -> list[MachineState]:
        return [m for m in self.machines.values() if m.kind is MachineKind.EXCAVATOR]


@dataclass(frozen=True)
class Violation:
    kind: str
    tick: int
    machines: tuple[str, ...] = ()
    detail: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tick": self.tick, "machines": list(self.machines),
                "detail": self.detail}


@dataclass(frozen=True)
class Event:
    tick: int
    machine: str
    kind: str  # start, complete, cancel, fault, yield, flag
    node_id: str = ""
    label: str = ""
    detail: str = ""

    def to_dict(self) -> dict:
        return {"tick": self.tick, "machine": self.machine, "kind": self.kind,
                "node_id": self.node_id, "label": self.label, "detail": self.detail}


@dataclass
class RunReport:
    success: bool
    violations: list[Violation] = field(default_factory=list)
    ticks_used: int = 0
    event_log: list[Event] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    faults: list[str] = field(default_factory=list)
    goal_met: bool = False
    timeline: list[list] = field(default_factory=list)
    timeline_header: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "goal_met": self.goal_met,
            "ticks_used": self.ticks_used,
            "violations": [v.to_dict() for v in self.violations],
            "faults": list(self.faults),
            "metrics": dict(self.metrics),
            "event_log": [e.to_dict() for e in self.event_log],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def event_log_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.event_log)

    def timeline_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.timeline_header)
        w.writerows(self.timeline)
        return buf.getvalue()

    def events(self, kind: str | None = None, machine: str | None = None,
               label: str | None = None) -> list[Event]:
        return [e for e in self.event_log
                if (kind is None or e.kind == kind) and (machine is None or e.machine == machine)
                and (label is None or e.label == label)]


# -- sensing ----------------------------------------------------------------

def sensing_truth(state: SiteState) -> dict[str, bool]:
    """World predicate behind every default flag."""
    truth = {
        SENSING_ARRIVAL: any(m.kind is MachineKind.DUMP_TRUCK and m.place == state.loading_place
                             for m in state.machines.values()),
        SENSING_LOADED: any(m.bed_load > 0 for m in state.machines.values()
                            if m.kind is MachineKind.DUMP_TRUCK),
    }
    occupied = {m.place for m in state.machines.values()}
    for place in state.places:
        truth[place_flag(place)] = place in occupied
    return truth


def sensing_update(state: SiteState, bb: GlobalBlackboard) -> None:
    for name, value in sensing_truth(state).items():
        if name in bb:
            bb.set_flag(name, value, Source.SENSING, state.tick)


# -- world ------------------------------------------------------------------

@dataclass
class _Handle:
    machine: str
    node_id: str
    action: PrimitiveAction
    remaining: int
    status: TickStatus = TickStatus.RUNNING


class SiteWorld:
    """Executes primitive actions against a :class:`SiteState`.

    Implements the start/poll/cancel protocol the action leaves call.
    """

    def __init__(self, state: SiteState, bb: GlobalBlackboard, plan: CompiledPlan | None = None):
        self.state = state
        self.bb = bb
        self.preconditions = plan.preconditions if plan else {}
        self.log: list[Event] = []
        self.violations: list[Violation] = []
        self.faults: list[str] = []
        self._flight: list[_Handle] = []
        self._lock = threading.RLock()

    @property
    def in_flight(self) -> list[_Handle]:
        with self._lock:
            return list(self._flight)

    def _event(self, machine: str, kind: str, node_id: str = "", label: str = "", detail: str = ""):
        self.log.append(Event(self.state.tick, machine, kind, node_id, label, detail))

    def _fault(self, h: _Handle, why: str) -> None:
        h.status = TickStatus.FAILURE
        self.faults.append(f"tick {self.state.tick}: {h.machine} {h.node_id}: {why}")
        self._event(h.machine, "fault", h.node_id, h.action.label, why)

    def _swing_check(self, truck: MachineState, what: str) -> None:
        unsafe = [e.id for e in self.state.excavators() if e.pose not in SAFE_POSES]
        if truck.kind is MachineKind.DUMP_TRUCK and unsafe:
            self.violations.append(Violation(
                "Collision", self.state.tick, (truck.id, *unsafe),
                f"{truck.id} {what} {self.state.loading_place} while "
                + ", ".join(f"{e} is in pose {self.state.machines[e].pose!r}" for e in unsafe)))

    def start(self, machine: str, node_id: str, action: PrimitiveAction) -> _Handle:
        with self._lock:
            h = _Handle(machine, node_id, action, action.duration)
            self._check_gate(h)
            m = self.state.machines.get(machine)
            self._event(machine, "start", node_id, action.label)
            if m is None:
                self._fault(h, "machine is not on the site")
                return h
            if action.verb is Verb.MOVE_ALONG_PATH and action.get("from") != action.get("to"):
                if m.place != action.get("from"):
                    self._fault(h, f"move from {action.get('from')} but machine is at {m.place}")
                    return h
                if m.place == self.state.loading_place:
                    self._swing_check(m, "leaves")
                m.place = None
                m.edge = (action.get("path"), 0, action.duration)
            elif action.verb is Verb.SET_JOINT_TARGETS:
                m.pose = "~" + action.get("pose")
            m.busy = action
            self._flight.append(h)
            return h

    def _check_gate(self, h: _Handle) -> None:
        index = statement_index(h.node_id)
        expr = self.preconditions.get(index) if index is not None else None
        if expr is None:
            return
        values = self.bb.snapshot().values
        try:
            ok = eval_expr(expr, values)
        except MissingFlag:
            ok = False
        if not ok:
            self.violations.append(Violation(
                "SyncViolation", self.state.tick, (h.machine,),
                f"{h.node_id} started while {to_text(expr, 'dsl')} was false"))

    def poll(self, h: _Handle) -> TickStatus:
        return h.status

    def cancel(self, h: _Handle) -> None:
        with self._lock:
            if h not in self._flight:
                return
            self._flight.remove(h)
            m = self.state.machines[h.machine]
            m.busy = None
            if h.action.verb is Verb.MOVE_ALONG_PATH and m.place is None:
                # an interrupted move backs out to where it came from
                m.place = h.action.get("from")
                m.edge = None
            h.status = TickStatus.FAILURE
            self._event(h.machine, "cancel", h.node_id, h.action.label)

    def advance(self) -> None:
        """Step 3: progress every in-flight action by one tick."""
        with self._lock:
            due: list[_Handle] = []
            for h in sorted(self._flight, key=lambda h: h.machine):
                h.remaining -= 1
                m = self.state.machines[h.machine]
                if m.edge is not None:
                    path, progress, length = m.edge
                    m.edge = (path, min(progress + 1, length), length)
                if h.remaining <= 0:
                    due.append(h)
            claimed: set[str] = set()
            for h in due:
                dest = self._arrival_place(h)
                if dest is not None:
                    if dest in claimed:
                        h.remaining = 1
                        self._event(h.machine, "yield", h.node_id, h.action.label,
                                    f"{dest} claimed by a lower machine id this tick")
                        continue
                    claimed.add(dest)
                self._flight.remove(h)
                self.state.machines[h.machine].busy = None
                self._complete(h)

    def _arrival_place(self, h: _Handle) -> str | None:
        a = h.action
        if a.verb is Verb.MOVE_ALONG_PATH and a.get("from") != a.get("to"):
            return a.get("to")
        return None

    def _complete(self, h: _Handle) -> None:
        a, st = h.action, self.state
        m = st.machines[h.machine]
        if a.verb is Verb.MOVE_ALONG_PATH and a.get("from") != a.get("to"):
            dest = a.get("to")
            place = st.places.get(dest)
            if place is None:
                self._fault(h, f"unknown place {dest}")
                return
            others = st.occupants(dest)
            if len(others) >= place.slots:
                self.violations.append(Violation(
                    "Collision", st.tick, (h.machine, *others),
                    f"{h.machine} entered {dest} ({place.slots} slot) occupied by {', '.join(others)}"))
            m.place, m.edge = dest, None
            if dest == st.loading_place:
                self._swing_check(m, "enters")
        elif a.verb is Verb.SET_JOINT_TARGETS:
            m.pose = a.get("pose")
            if "soil_from" in a.params and not self._release(h):
                return
        elif a.verb is Verb.DUMP_BED:
            if m.bed_load < 1:
                self._fault(h, "dump with an empty bed")
                return
            st.soil[m.place] = st.soil.get(m.place, 0) + m.bed_load
            m.bed_load = 0
        h.status = TickStatus.SUCCESS
        st.completed[(h.machine, a.label)] += 1
        self._event(h.machine, "complete", h.node_id, a.label)

    def _release(self, h: _Handle) -> bool:
        st = self.state
        src, dst = h.action.get("soil_from"), h.action.get("soil_to")
        reach = st.reach(h.machine)
        if src not in reach or st.soil.get(src, 0) < 1:
            self._fault(h, f"no soil to take from {src}")
            return False
        if dst in st.machines:
            truck = st.machines[dst]
            if truck.kind is not MachineKind.DUMP_TRUCK or truck.place not in reach:
                self._fault(h, f"{dst} is not a dump truck within reach")
                return False
            truck.bed_load += 1
        elif dst in reach:
            st.soil[dst] = st.soil.get(dst, 0) + 1
        else:
            self._fault(h, f"{dst} is out of reach")
            return False
        st.soil[src] -= 1
        return True


# -- detectors --------------------------------------------------------------

def detect_collision(state: SiteState) -> Violation | None:
    """Slot overflow or a truck at the loading place beside a swinging excavator."""
    for name, place in sorted(state.places.items()):
        here = state.occupants(name)
        if len(here) > place.slots:
            return Violation("Collision", state.tick, tuple(here),
                             f"{len(here)} machines at {name} ({place.slots} slot)")
    trucks = [m.id for m in state.machines.values()
              if m.kind is MachineKind.DUMP_TRUCK and m.place == state.loading_place]
    unsafe = [e.id for e in state.excavators() if e.pose not in SAFE_POSES]
    if trucks and unsafe:
        return Violation("Collision", state.tick, tuple(trucks + unsafe),
                         f"truck in the swing zone of {', '.join(unsafe)}")
    return None


def wait_for_graph(trees: list[TreeInstance], bb: GlobalBlackboard) -> nx.DiGraph:
    """Edge a -> b labelled with a flag: tree a waits on a value only b can still write.
    Waits nobody can satisfy point at the pseudo node ``"(none)"``."""
    g = nx.DiGraph()
    writers: dict[tuple[str, bool], list[str]] = {}
    for t in trees:
        for fv in t.pending_writes():
            writers.setdefault(fv, []).append(t.machine)
    for t in trees:
        if t.finished:
            continue
        g.add_node(t.machine)
        for cond in t.failed_conditions:
            for leaf in leaves(cond.expr):
                flag = t.key_to_flag().get(leaf.flag, leaf.flag)
                try:
                    current = bb.get_flag(flag)
                except KeyError:
                    current = None
                if current == leaf.expected:
                    continue
                targets = [w for w in writers.get((flag, leaf.expected), []) if w != t.machine]
                for w in targets or ["(none)"]:
                    g.add_edge(t.machine, w, flag=flag)
    return g


def detect_deadlock(trees: list[TreeInstance], world: SiteWorld, bb: GlobalBlackboard,
                    version_before: int) -> Violation | None:
    """Every unfinished tree sits in a false condition, nothing is in flight
    and this tick's tree step wrote nothing, so no later tick can differ."""
    live = [t for t in trees if not t.finished]
    if not live or world.in_flight or bb.version != version_before:
        return None
    if not all(t.waiting for t in live):
        return None
    g = wait_for_graph(live, bb)
    edges = "; ".join(f"{a} -> {b} [{d['flag']}]" for a, b, d in sorted(g.edges(data=True)))
    cycles = []
    for c in nx.simple_cycles(g):
        k = c.index(min(c))
        c = c[k:] + c[:k]
        cycles.append(" -> ".join(c + c[:1]))
    detail = f"wait-for: {edges}"
    if cycles:
        detail += "; cycles: " + ", ".join(sorted(cycles))
    return Violation("Deadlock", world.state.tick, tuple(sorted(t.machine for t in live)), detail)


def check_goal(scenario: Scenario, state: SiteState) -> bool:
    for c in scenario.goal:
        kind = c["type"]
        if kind == "soil_at":
            ok = state.soil.get(c["place"], 0) == c["units"]
        elif kind == "bed_load":
            ok = state.machines[c["machine"]].bed_load == c["units"]
        elif kind == "machine_at":
            ok = state.machines[c["machine"]].place == c["place"]
        elif kind == "pose":
            ok = state.machines[c["machine"]].pose == c["pose"]
        elif kind == "completed":
            ok = state.completed[(c["machine"], c["label"])] == c["count"]
        else:
            ok = False
        if not ok:
            return False
    return True


# -- run --------------------------------------------------------------------

def blackboard_for(plan: CompiledPlan, scenario: Scenario) -> GlobalBlackboard:
    entries = list(scenario.registry())
    known = {e.name for e in entries}
    for name in dict.fromkeys([*plan.flag_contract, *plan.flag_descriptions]):
        if name not in known:
            contract = plan.flag_contract.get(name)
            fallback = f"Set when statement {contract.setter} completes." if contract else "Generated flag."
            entries.append(FlagRegistryEntry(name, FlagKind.GENERATED, False,
                                             plan.flag_descriptions.get(name) or fallback))
    return GlobalBlackboard(entries)


Observer = Callable[[int, SiteState, GlobalBlackboard], None]


def run(plan: CompiledPlan, scenario: Scenario, bb: GlobalBlackboard | None = None,
        budget: int = DEFAULT_BUDGET, mode: str = "deterministic",
        observer: Observer | None = None, metrics: dict | None = None) -> RunReport:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if mode not in ("deterministic", "concurrent"):
        raise ValueError(f"unknown mode {mode!r}")
    unknown = set(plan.trees) - set(scenario.machine_kinds)
    if unknown:
        raise ValueError(f"plan machines {sorted(unknown)} are not in scenario {scenario.id}")

    state = SiteState.from_scenario(scenario)
    bb = bb if bb is not None else blackboard_for(plan, scenario)
    world = SiteWorld(state, bb, plan)
    trees = [TreeInstance(m, root) for m, root in sorted(plan.trees.items())]
    report = RunReport(success=False, metrics=dict(metrics or {}))
    flag_names = sorted(bb.names())
    report.timeline_header = (["tick"] + flag_names + [f"place:{m}" for m in sorted(state.machines)])

    if not trees:
        report.goal_met = check_goal(scenario, state)
        report.success = report.goal_met
        return report

    ticker = ConcurrentTicker(trees, bb, world) if mode == "concurrent" else None
    seen_history = 0
    stop: Violation | None = None
    done = False
    try:
        if ticker:
            ticker.__enter__()
        for now in range(budget):
            state.tick = now
            sensing_update(state, bb)
            if observer:
                observer(now, state, bb)
            snap = bb.snapshot().values
            report.timeline.append([now] + [int(snap[n]) for n in flag_names]
                                   + [state.machines[m].place or "" for m in sorted(state.machines)])
            before = bb.version
            if ticker:
                ticker.tick_all(now)
            else:
                tick_round_robin(trees, bb, world, now)
            after = bb.version
            world.advance()

            history = bb.history
            for ev in history[seen_history:]:
                world.log.append(Event(ev.tick, ev.source.value, "flag", "", ev.name,
                                       "true" if ev.new else "false"))
            seen_history = len(history)
            report.ticks_used = now + 1

            if world.violations:
                stop = world.violations[0]
                break
            if any(t.status is TickStatus.FAILURE for t in trees):
                failed = [t.machine for t in trees if t.status is TickStatus.FAILURE]
                report.faults.append(f"tick {now}: tree failed: {', '.join(failed)}")
                break
            if all(t.status is TickStatus.SUCCESS for t in trees):
                done = True
                break
            if before == after:
                stop = detect_deadlock(trees, world, bb, before)
                if stop:
                    break
        else:
            stop = Violation("Timeout", budget, tuple(t.machine for t in trees if not t.finished),
                             f"budget of {budget} ticks exhausted")
    finally:
        if ticker:
            ticker.close()

    report.event_log = sorted(world.log, key=lambda e: e.tick)
    report.violations = list(world.violations) if world.violations else ([stop] if stop else [])
    report.faults = world.faults + report.faults
    report.goal_met = check_goal(scenario, state)
    report.success = done and not report.violations and not report.faults and report.goal_met
    report.metrics.setdefault("final_soil", dict(sorted(state.soil.items())))
    return report
