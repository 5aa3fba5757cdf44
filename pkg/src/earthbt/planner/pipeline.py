"""Two-stage generation with at most one human refinement per stage."""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

from ..actionseq import ActionSequence, SequenceError, parse, serialize, validate
from ..btcompile import (CompiledPlan, CompileError, TaskParamDB, XmlError, compile_plan, parse_xml,
                         plan_from_xml)
from ..scenario import Scenario, paramdb_for
from .llm import LlmEndpointConfig, NoArtifact, Transport, UsageRecord, extract_artifact, request
from .prompts import (HitlFeedback, Stage, build_prompt, refine, sequence_context, tree_context)
from .rules import rule_planner


class PlanningError(RuntimeError):
    def __init__(self, stage: Stage, message: str):
        super().__init__(f"{Stage(stage).value}: {message}")
        self.stage = Stage(stage)


class Hitl(Protocol):
    def feedback(self, stage: Stage, artifact: str, problems: str | None) -> str | None: ...


class NoHitl:
    def feedback(self, stage, artifact, problems):
        return None


class InteractiveHitl:
    def __init__(self, ask: Callable[[str], str] = input, out=sys.stderr):
        self.ask = ask
        self.out = out

    def feedback(self, stage, artifact, problems):
        print(f"--- generated {Stage(stage).value} ---\n{artifact}", file=self.out)
        if problems:
            print(f"--- problems ---\n{problems}", file=self.out)
        line = self.ask("feedback (empty to accept): ").strip()
        return line or None


class ScriptedHitl:
    """Feedback read from a file: JSON mapping stage name to text, or plain
    text used for the ActionSequence stage."""

    def __init__(self, entries: dict[str, str]):
        self.entries = {Stage(k): v for k, v in entries.items() if v and v.strip()}

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedHitl":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except ValueError:
            data = {Stage.ACTION_SEQUENCE.value: text}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: scripted feedback must be a JSON object or plain text")
        return cls(data)

    def feedback(self, stage, artifact, problems):
        return self.entries.get(Stage(stage))


def make_hitl(spec: str, scenario_id: int | None = None) -> Hitl:
    """``off``, ``interactive``, ``scripted:<file>`` or ``scripted:<dir>`` (one
    ``<id>.json`` / ``<id>.txt`` per scenario)."""
    if spec == "off":
        return NoHitl()
    if spec == "interactive":
        return InteractiveHitl()
    if spec.startswith("scripted:"):
        path = Path(spec.split(":", 1)[1])
        if path.is_dir():
            for name in (f"{scenario_id}.json", f"{scenario_id}.txt", f"scenario_{scenario_id:02d}.json"
                         if scenario_id is not None else ""):
                if name and (path / name).is_file():
                    return ScriptedHitl.load(path / name)
            return NoHitl()
        return ScriptedHitl.load(path)
    raise ValueError(f"unknown HITL mode {spec!r}")


@dataclass
class PipelineResult:
    sequence: ActionSequence | None = None
    plan: CompiledPlan | None = None
    usage: list[UsageRecord] = field(default_factory=list)
    transcript: list[dict] = field(default_factory=list)
    error: str | None = None
    error_stage: str | None = None


def _exchange(config, bundle, transport, transcript, usage) -> str:
    raw, record = request(config, bundle, transport)
    usage.append(record)
    transcript.append({"bundle": bundle.to_dict(), "raw": raw, "usage": record.to_dict()})
    return raw


def _generate(stage: Stage, bundle, check: Callable[[str], tuple[object, str | None]],
              config, transport, hitl: Hitl, transcript, usage):
    """Request, check, optionally refine once; returns the checked artifact."""
    while True:
        raw = _exchange(config, bundle, transport, transcript, usage)
        try:
            text = extract_artifact(raw)
            result, problem = check(text)
        except NoArtifact as exc:
            text, result, problem = raw, None, str(exc)
        note = hitl.feedback(stage, text, problem)
        if note and bundle.attempt == 1:
            bundle = refine(bundle, HitlFeedback(stage, note, text))
            continue
        if problem:
            raise PlanningError(stage, problem)
        return result


def generate_sequence(instruction: str, scenario: Scenario, config: LlmEndpointConfig,
                      transport: Transport | None = None, hitl: Hitl | None = None,
                      result: PipelineResult | None = None) -> ActionSequence:
    result = result if result is not None else PipelineResult()
    registry = scenario.registry()
    ctx = sequence_context(registry, {m: k.value for m, k in scenario.machine_kinds.items()},
                           scenario.places)
    bundle = build_prompt(Stage.ACTION_SEQUENCE, instruction, ctx)

    def check(text):
        try:
            seq = parse(text)
        except SequenceError as exc:
            return None, str(exc)
        report = validate(seq, scenario.machine_kinds, scenario.places, registry)
        return seq, None if report.ok else report.format()

    return _generate(Stage.ACTION_SEQUENCE, bundle, check, config, transport, hitl or NoHitl(),
                     result.transcript, result.usage)


def bt_example() -> str:
    return (resources.files("earthbt") / "data" / "bt_example.xml").read_text()


def generate_trees(seq: ActionSequence, db: TaskParamDB, config: LlmEndpointConfig,
                   transport: Transport | None = None, hitl: Hitl | None = None,
                   result: PipelineResult | None = None) -> CompiledPlan:
    """Stage two: one request per machine."""
    result = result if result is not None else PipelineResult()
    ctx = tree_context(serialize(seq), bt_example(), db.to_dict())
    docs = {}
    for machine in seq.machines:
        bundle = build_prompt(Stage.BEHAVIOR_TREE, f"Generate the behavior tree for machine {machine}.", ctx)

        def check(text):
            try:
                parse_xml(text)
            except XmlError as exc:
                return None, str(exc)
            return text, None

        docs[machine] = _generate(Stage.BEHAVIOR_TREE, bundle, check, config, transport,
                                  hitl or NoHitl(), result.transcript, result.usage)
    plan = plan_from_xml(docs)
    plan.preconditions = {s.index: s.precondition for s in seq.statements}
    plan.statement_machine = {s.index: s.machine for s in seq.statements}
    plan.flag_descriptions = seq.flag_descriptions()
    return plan


def plan_scenario(scenario: Scenario, planner: str = "rules", config: LlmEndpointConfig | None = None,
                  transport: Transport | None = None, hitl: Hitl | None = None,
                  db: TaskParamDB | None = None) -> PipelineResult:
    """Full generation for one scenario; failures are recorded, not raised."""
    result = PipelineResult()
    db = db or paramdb_for(scenario)
    try:
        if planner == "rules":
            result.sequence = rule_planner(scenario)
            result.plan = compile_plan(result.sequence, db)
        elif planner == "llm":
            config = config or LlmEndpointConfig()
            result.sequence = generate_sequence(scenario.instruction, scenario, config, transport,
                                                hitl, result)
            result.plan = generate_trees(result.sequence, db, config, transport, hitl, result)
        else:
            raise ValueError(f"unknown planner {planner!r}")
    except PlanningError as exc:
        result.error, result.error_stage = str(exc), exc.stage.value
    except (CompileError, ValueError, RuntimeError) as exc:
        result.error, result.error_stage = f"{type(exc).__name__}: {exc}", "pipeline"
    return result
