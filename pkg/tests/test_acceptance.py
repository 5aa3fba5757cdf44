"""Acceptance suite: the nine primary criteria, one test each.

Each test carries ``@criterion(n, text)``; conftest prints one PASS/FAIL line
per criterion at the end of the session.
"""
import threading
import time

import pytest

from conftest import FIGURE_TEXT, FIXTURES
from earthbt.actionseq import And, Leaf, analyze_flags, parse, serialize
from earthbt.btcompile import compile_plan, emit_tree_xml, parse_xml, plan_stats
from earthbt.btree import TreeInstance
from earthbt.evaluation import run_eval
from earthbt.flagcore import FlagKind, FlagRegistryEntry, GlobalBlackboard, Source, replay
from earthbt.planner import rule_planner
from earthbt.scenario import paramdb_for
from earthbt.sitesim import SiteState, SiteWorld, blackboard_for, run
from oracles import FIGURE_NN, SINGLE_DUMP_NN, sensing_oracle


def criterion(n, text):
    return pytest.mark.criterion(n, text)


def by_id(catalog, i):
    return next(s for s in catalog if s.id == i)


@criterion(1, "rules -> compile -> simulate: SR 1.00 on all 30 scenarios, no violations, < 5 s each")
def test_oracle_pipeline_success_rate(catalog):
    assert len(catalog) == 30
    for scen in catalog:
        t0 = time.perf_counter()
        plan = compile_plan(rule_planner(scen), paramdb_for(scen))
        report = run(plan, scen, mode="deterministic")
        wall = time.perf_counter() - t0
        assert report.success, (scen.id, report.violations, report.faults)
        assert report.violations == [], scen.id
        assert wall < 5.0, (scen.id, wall)
    assert sum(s.category == "Single" for s in catalog) == 15


@criterion(2, "figure example: 3 statements, 2 flags, And-of-two on statement 3, machines {1,3}/{2}")
def test_golden_example(site):
    seq = parse(FIGURE_TEXT)
    assert len(seq.statements) == 3
    assert len(seq.generated_flags) == 2
    assert seq.statements[2].precondition == And((Leaf("DUMPTRUCK_AT_LOADING_SITE_FLG", True),
                                                  Leaf("SENSING_ARRIVAL_FLG", True)))
    plan = compile_plan(seq, paramdb_for(site))
    owners = {}
    for index, machine in plan.statement_machine.items():
        owners.setdefault(machine, set()).add(index)
    assert owners == {"excavator": {1, 3}, "dump_truck": {2}}
    for machine, indices in owners.items():
        heads = {n.id for n in plan.trees[machine].children}
        assert heads == {f"s{i}" for i in indices}


@criterion(3, "scenario 6 ordering: approach after reset, excavate after arrival, departure after reset 2")
def test_real_world_ordering(catalog):
    scen = by_id(catalog, 6)
    report = run(compile_plan(rule_planner(scen), paramdb_for(scen)), scen)
    assert report.success
    resets = [e.tick for e in report.events("complete", "excavator", "initial")]
    truck_moves = [e for e in report.events("start", "dump_truck") if e.label.endswith("->loading_site")
                   or e.label.endswith("->dumping_site")]
    approach = next(e.tick for e in truck_moves if e.label.endswith("->loading_site"))
    departure = next(e.tick for e in truck_moves if e.label.endswith("->dumping_site"))
    excavate = report.events("start", "excavator", "dig_ready")[0].tick
    arrival_flag = next(e.tick for e in report.events("flag", label="DUMPTRUCK_AT_LOADING_SITE_FLG")
                        if e.detail == "true")
    sensed = next(e.tick for e in report.events("flag", label="SENSING_ARRIVAL_FLG") if e.detail == "true")
    assert len(resets) >= 2
    assert approach >= resets[0]
    assert excavate >= arrival_flag and excavate >= sensed
    assert departure >= resets[1]


@criterion(4, "interrupt: gate flipped false mid-action halts the running action within 1 tick")
def test_interrupt_semantics(figure_seq, site):
    plan = compile_plan(figure_seq, paramdb_for(site))
    state = SiteState.from_scenario(site)
    bb = blackboard_for(plan, site)
    world = SiteWorld(state, bb)
    truck = TreeInstance("dump_truck", plan.trees["dump_truck"])
    bb.set_flag("EXCAVATOR_INITIAL_POSE_FLG", True, Source.EXTERNAL, 0)
    flip_at = 3
    for now in range(6):
        state.tick = now
        if now == flip_at:
            assert truck.running_actions(), "move should be in flight before the flip"
            bb.set_flag("EXCAVATOR_INITIAL_POSE_FLG", False, Source.EXTERNAL, now)
        truck.tick(bb, world, now)
        world.advance()
    cancels = [e for e in world.log if e.kind == "cancel"]
    assert len(cancels) == 1 and cancels[0].node_id == "s2.a1"
    assert 0 <= cancels[0].tick - flip_at <= 1
    assert world.in_flight == []
    assert state.machines["dump_truck"].place == "truck_park"


@criterion(5, "mutual-wait fixture is a wait-for-confirmed Deadlock within 50 ticks, never Timeout")
def test_deadlock_not_timeout(site):
    plan = compile_plan(parse((FIXTURES / "deadlock.aseq").read_text()), paramdb_for(site))
    for budget in (50, 5000):
        report = run(plan, site, budget=budget)
        kinds = [v.kind for v in report.violations]
        assert kinds == ["Deadlock"]
        v = report.violations[0]
        assert v.tick <= 50
        assert "cycles: dump_truck -> excavator -> dump_truck" in v.detail


@criterion(6, "soil conservation and sensing truth at every tick of every catalog run")
def test_conservation_and_sensing(catalog):
    checked = 0
    for scen in catalog:
        total = scen.total_soil()
        bad = []

        def observe(tick, state, bb):
            nonlocal checked
            checked += 1
            if state.total_soil() != total:
                bad.append((tick, "soil"))
            snap = bb.snapshot().values
            for name, want in sensing_oracle(state).items():
                if snap[name] != want:
                    bad.append((tick, name))

        report = run(compile_plan(rule_planner(scen), paramdb_for(scen)), scen, observer=observe)
        assert report.success
        assert bad == [], (scen.id, bad[:5])
    assert checked > 0


@criterion(7, "DSL and XML round trips are identities on all catalog artifacts; emission byte-deterministic")
def test_round_trips(catalog):
    texts = [FIGURE_TEXT]
    for scen in catalog:
        seq = rule_planner(scen)
        text = serialize(seq)
        texts.append(text)
        assert parse(text) == seq
        db = paramdb_for(scen)
        first = compile_plan(seq, db).xml
        second = compile_plan(rule_planner(scen), paramdb_for(scen)).xml
        assert first == second
        for doc in first.values():
            tree = parse_xml(doc)
            assert emit_tree_xml(tree) == doc
            assert parse_xml(emit_tree_xml(tree)) == tree
    for text in texts:
        assert serialize(parse(text)) == text


@criterion(8, "NN goldens, NRF 0 for rules and 1 per injected fixture, 15/15 category split")
def test_metrics_plumbing(catalog, site):
    db = paramdb_for(site)
    assert plan_stats(compile_plan(parse(FIGURE_TEXT), db))["nn_per_machine"] == FIGURE_NN
    assert plan_stats(compile_plan(parse("1. dump_soil(dump_truck)"), db))["nn_total"] == SINGLE_DUMP_NN
    for scen in catalog:
        assert analyze_flags(rule_planner(scen)).nrf == 0, scen.id
    for name in ("redundant_duplicate", "redundant_intra"):
        assert analyze_flags(parse((FIXTURES / f"{name}.aseq").read_text())).nrf == 1
    agg = run_eval(catalog, "rules").to_dict()["aggregates"]
    assert (agg["Single"]["count"], agg["Coordinated"]["count"]) == (15, 15)


@criterion(9, "blackboard: 4 writers + 4 readers, >= 10k ops, observations embed in history, replay exact")
def test_blackboard_linearizability():
    names = [f"K{i}_FLG" for i in range(8)]
    bb = GlobalBlackboard([FlagRegistryEntry(n, FlagKind.DEFAULT, False, "stress") for n in names])
    writers, readers, writes_each, reads_each = 4, 4, 2000, 1000
    seen = []
    lock = threading.Lock()
    gate = threading.Barrier(writers + readers)

    def write(k):
        gate.wait()
        for i in range(writes_each):
            bb.set_flag(names[(3 * k + i) % len(names)], (i * 7 + k) % 3 != 0, Source.EXTERNAL, i)

    def read():
        gate.wait()
        mine = [bb.snapshot() for _ in range(reads_each)]
        with lock:
            seen.extend(mine)

    threads = [threading.Thread(target=write, args=(k,)) for k in range(writers)]
    threads += [threading.Thread(target=read) for _ in range(readers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert writers * writes_each + readers * reads_each >= 10_000
    history = bb.history
    prefix = {n: False for n in names}
    states = [dict(prefix)]
    for ev in history:
        assert prefix[ev.name] == ev.old
        prefix[ev.name] = ev.new
        states.append(dict(prefix))
    assert len(seen) == readers * reads_each
    for snap in seen:
        assert states[snap.version] == snap.values
    assert replay(bb.registry, history).snapshot() == bb.snapshot()
