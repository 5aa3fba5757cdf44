"""Command-line entry point: plan, compile, run, eval, inspect.

Exit codes: 0 success, 1 execution violation, 2 input or validation error,
3 planner or transport error.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

from .actionseq import (SequenceError, SequenceSyntaxError, analyze_flags, parse, parse_expr, serialize,
                        to_text, validate)
from .btcompile import (CompileError, MissingParam, TaskParamDB, XmlError, compile_plan, parse_xml,
                        plan_from_xml, plan_stats)
from .btree import BTNode
from .evaluation import run_eval, validate_report
from .planner import (FixtureTransport, LlmEndpointConfig, LlmError, PlanningError, generate_sequence,
                      make_hitl, rule_planner)
from .planner.pipeline import PipelineResult
from .planner.rules import UnsupportedScenario
from .scenario import Scenario, ScenarioError, find_scenario, load_catalog, load_scenario, paramdb_for
from .sitesim import DEFAULT_BUDGET, run

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_PLANNER = 0, 1, 2, 3
DEFAULT_SITE = 21  # excavator + one dump truck


class InputError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _scenario(args) -> Scenario | None:
    if getattr(args, "scenario_file", None):
        return load_scenario(args.scenario_file)
    if getattr(args, "scenario", None) is not None:
        return find_scenario(args.scenario, args.catalog)
    return None


def _llm(args) -> tuple[LlmEndpointConfig, FixtureTransport | None]:
    config = LlmEndpointConfig.load(args.llm_config) if args.llm_config else LlmEndpointConfig()
    transport = None
    if args.llm_fixture:
        transport = FixtureTransport.load(args.llm_fixture)
        config.auth_env = None
    return config, transport


def _write_atomic(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file or none: stage in a temp dir beside ``out_dir``, then move."""
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".earthbt-", dir=out_dir.parent))
    try:
        for name, text in files.items():
            (stage / name).write_text(text)
        out_dir.mkdir(exist_ok=True)
        for name in files:
            os.replace(stage / name, out_dir / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(str(exc)) from None


# -- commands ---------------------------------------------------------------

def cmd_plan(args) -> int:
    scenario = _scenario(args)
    if args.planner == "rules":
        if scenario is None:
            raise InputError("the rules planner needs --scenario or --scenario-file")
        seq = rule_planner(scenario)
    else:
        instruction = args.instruction or (scenario.instruction if scenario else None)
        if not instruction:
            raise InputError("give an instruction or --scenario")
        site = scenario or find_scenario(DEFAULT_SITE, args.catalog)
        config, transport = _llm(args)
        result = PipelineResult()
        try:
            seq = generate_sequence(instruction, site, config, transport,
                                    make_hitl(args.hitl, site.id), result)
        finally:
            if args.transcript:
                Path(args.transcript).write_text(json.dumps(result.transcript, indent=2) + "\n")
        scenario = site
    text = serialize(seq)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    report = validate(seq, scenario.machine_kinds, scenario.places, scenario.registry())
    print(report.format(), file=sys.stderr)
    if report.ok:
        print(f"nrf: {analyze_flags(seq).nrf}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_INPUT


def cmd_compile(args) -> int:
    text = _read(args.sequence)
    seq = parse(text)
    scenario = _scenario(args)
    if scenario is not None:
        report = validate(seq, scenario.machine_kinds, scenario.places, scenario.registry())
        if not report.ok:
            for p in report.errors:
                where = f"line {p.where}" if isinstance(p.where, int) else p.where
                _err(f"{args.sequence}: {where}: [{p.code}] {p.message}")
            return EXIT_INPUT
    if args.paramdb:
        db = TaskParamDB.load(args.paramdb)
    elif scenario is not None:
        db = paramdb_for(scenario)
    else:
        raise InputError("give --paramdb or a scenario")
    plan = compile_plan(seq, db)
    files = {f"{m}.xml": doc for m, doc in plan.xml.items()}
    files["stats.json"] = json.dumps(plan_stats(plan), indent=2) + "\n"
    files["plan.json"] = json.dumps(plan.contract_dict(), indent=2) + "\n"
    _write_atomic(Path(args.out), files)
    stats = plan_stats(plan)
    print(f"wrote {len(plan.xml)} tree(s) to {args.out}; nn={stats['nn_total']}", file=sys.stderr)
    return EXIT_OK


def load_plan_dir(directory: Path):
    docs = {p.stem: p.read_text() for p in sorted(directory.glob("*.xml"))}
    if not docs:
        raise InputError(f"no .xml trees in {directory}")
    plan = plan_from_xml(docs)
    contract = directory / "plan.json"
    if contract.is_file():
        data = json.loads(contract.read_text())
        plan.preconditions = {int(i): parse_expr(s["precondition"]) for i, s in data["statements"].items()}
        plan.statement_machine = {int(i): s["machine"] for i, s in data["statements"].items()}
        plan.flag_descriptions = {n: f.get("description", "") for n, f in data["flags"].items()}
    return plan


def cmd_run(args) -> int:
    scenario = _scenario(args)
    if scenario is None:
        raise InputError("give --scenario or --scenario-file")
    plan = load_plan_dir(Path(args.xml_dir))
    report = run(plan, scenario, budget=args.budget, mode=args.mode,
                 metrics={"nn": plan_stats(plan)["nn_total"]})
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    if args.events:
        Path(args.events).write_text(report.event_log_jsonl())
    if args.timeline:
        Path(args.timeline).write_text(report.timeline_csv())
    for v in report.violations:
        print(f"{v.kind} at tick {v.tick}: {v.detail}", file=sys.stderr)
    for f in report.faults:
        print(f"fault: {f}", file=sys.stderr)
    print(f"success={str(report.success).lower()} ticks={report.ticks_used}", file=sys.stderr)
    return EXIT_OK if report.success else EXIT_VIOLATION


def cmd_eval(args) -> int:
    scenarios = load_catalog(args.catalog)
    config, transport = _llm(args) if args.planner == "llm" else (None, None)
    report = run_eval(scenarios, args.planner, args.hitl, config, transport, jobs=args.jobs,
                      budget=args.budget)
    doc = report.to_dict()
    validate_report(doc)
    if args.json:
        Path(args.json).write_text(report.to_json())
    print(report.table())
    for r in report.results:
        if not r.success:
            why = r.error or ", ".join(r.violations + r.faults)
            print(f"scenario {r.id}: failed: {why}", file=sys.stderr)
    return EXIT_OK


def _tree_lines(node: BTNode, depth: int = 0) -> list[str]:
    extra = ""
    if hasattr(node, "action") and node.action is not None:
        extra = f" [{node.action.label}, {node.action.duration} ticks]"
    elif hasattr(node, "flag"):
        extra = f" [{node.flag}]"
    elif hasattr(node, "expr"):
        extra = f" [{to_text(node.expr, 'dsl')}]"
    out = [f"{'  ' * depth}{node.tag} {node.id}{extra}"]
    for child in node.children:
        out += _tree_lines(child, depth + 1)
    return out


def cmd_inspect(args) -> int:
    path = Path(args.file)
    text = _read(args.file)
    if path.suffix == ".xml" or text.lstrip().startswith("<"):
        root = parse_xml(text)
        print("\n".join(_tree_lines(root)))
        return EXIT_OK
    seq = parse(text)
    for s in seq.statements:
        print(f"{s.index:>3}  {s.machine:<14} {s.skill}({', '.join(s.params)})")
        cond = to_text(s.precondition, "dsl")
        if cond:
            print(f"     waits on {cond}")
    for name, desc in seq.generated_flags:
        print(f"flag {name}: {desc}")
    try:
        print(f"nrf: {analyze_flags(seq).nrf}")
    except ValueError as exc:
        print(f"nrf: n/a ({exc})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="earthbt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_opts(p):
        p.add_argument("--scenario", type=int, help="catalog scenario id")
        p.add_argument("--scenario-file", help="scenario JSON file")
        p.add_argument("--catalog", help="catalog directory (default: bundled)")

    def llm_opts(p):
        p.add_argument("--llm-config", help="endpoint config JSON")
        p.add_argument("--llm-fixture", help="replay canned responses instead of calling an endpoint")

    p = sub.add_parser("plan", help="instruction -> action sequence")
    p.add_argument("instruction", nargs="?")
    scenario_opts(p)
    llm_opts(p)
    p.add_argument("--planner", choices=("llm", "rules"), default="llm")
    p.add_argument("--hitl", default="interactive", help="interactive, off or scripted:<file>")
    p.add_argument("--out", "-o", help="write the sequence here instead of stdout")
    p.add_argument("--transcript", help="save prompts, raw responses and usage as JSON")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("compile", help="action sequence -> one XML tree per machine")
    p.add_argument("sequence")
    p.add_argument("--paramdb", help="task parameter database JSON")
    scenario_opts(p)
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="simulate compiled trees on a scenario")
    p.add_argument("xml_dir")
    scenario_opts(p)
    p.add_argument("--mode", choices=("deterministic", "concurrent"), default="deterministic")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--report", help="write the run report JSON here instead of stdout")
    p.add_argument("--events", help="write the event log as JSON lines")
    p.add_argument("--timeline", help="write flag and occupancy timelines as CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="run the whole pipeline over a catalog")
    p.add_argument("--catalog", help="catalog directory (default: bundled)")
    p.add_argument("--planner", choices=("llm", "rules"), default="rules")
    p.add_argument("--hitl", default="off", help="off or scripted:<dir>")
    llm_opts(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--json", help="write the EvalReport JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="pretty-print a sequence or XML tree")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SequenceSyntaxError as exc:
        _err(f"line {exc.line}: {exc}")
        return EXIT_INPUT
    except (InputError, ScenarioError, SequenceError, CompileError, MissingParam, XmlError,
            UnsupportedScenario, json.JSONDecodeError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (PlanningError, LlmError) as exc:
        _err(str(exc))
        return EXIT_PLANNER


if __name__ == "__main__":
    sys.exit(main())
