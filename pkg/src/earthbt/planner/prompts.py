"""Prompt assembly for the two generation stages, plus the one-shot refinement."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

from ..actionseq import skills_table
from ..flagcore import FlagRegistryEntry


class Stage(str, enum.Enum):
    ACTION_SEQUENCE = "ActionSequence"
    BEHAVIOR_TREE = "BehaviorTree"


REQUIRED = {
    Stage.ACTION_SEQUENCE: ("skills", "default_flags", "flag_rules"),
    Stage.BEHAVIOR_TREE: ("action_sequence", "template", "bt_example", "custom_nodes", "task_params"),
}
MAX_ATTEMPTS = 2


class MissingContext(ValueError):
    def __init__(self, item: str):
        super().__init__(f"prompt context is missing {item!r}")
        self.item = item


class BudgetExhausted(RuntimeError):
    pass


SYSTEM_TEXT = {
    Stage.ACTION_SEQUENCE: (
        "You plan work for construction machines on an earthwork site. Turn the operator's "
        "instruction into an Action Sequence: numbered skill calls, one per line, each optionally "
        "guarded by a depends_on condition over boolean flags and followed by a # comment that "
        "explains the step. After a blank line, declare every new flag as NAME: description. "
        "Answer with the sequence inside a single fenced code block."),
    Stage.BEHAVIOR_TREE: (
        "You write BehaviorTree.CPP (format 4) XML for one construction machine. Follow the "
        "template for every statement the machine owns, use only the listed custom nodes, and "
        "take paths, joint targets and durations from the task parameters. Answer with the XML "
        "inside a single fenced code block."),
}

FLAG_RULES = """\
- Name new flags <MACHINE>_<STATE>_FLG in upper case, e.g. EXCAVATOR_INITIAL_POSE_FLG or
  DUMPTRUCK_AT_LOADING_SITE_FLG. The machine part is the machine id without underscores.
- STATE names the completed skill: INITIAL_POSE, AT_<PLACE>, LOADED, DUMPED, LEVELED, GATHERED.
- When a machine runs the same skill more than once, append _<n> for the n-th run.
- A flag turns true when the statement it names finishes. Only add a flag when a statement of
  another machine must wait for it; statements of one machine already run in order.
- Do not add a flag that means the same thing as an existing one.
- Write conditions as FLAG==true / FLAG==false joined by and / or; and binds tighter than or."""

TEMPLATE = """\
For statement i with condition C_i:
ReactiveSequence
  RetryUntilSuccessful num_attempts="-1"
    Sequence
      DBReader (one per flag in C_i, output_key = flag name)
      ConditionalExpression expr="C_i"
  Sequence
    <primitive actions of the skill>
    SetFlag (each flag the statement sets, value="true")
Statements without a condition are just the inner Sequence. The machine's root is a Sequence
of its statements in order. Name nodes s<i>, s<i>.retry, s<i>.read, s<i>.db<k>, s<i>.cond,
s<i>.act, s<i>.a<k>, s<i>.set<k>."""

CUSTOM_NODES = """\
MoveAlongPath(path, from, to, duration)        drive along a stored path
SetJointTargets(pose, joints, duration, target?, soil_from?, soil_to?)
                                               move the excavator joints to a stored pose
DumpBed(duration)                              raise the truck bed and unload
DBReader(flag, output_key)                     copy a shared flag into the local blackboard
ConditionalExpression(expr)                    check a condition over local keys
SetFlag(flag, value)                           write a shared flag
Skill expansions: move -> MoveAlongPath; initial_pose -> SetJointTargets initial;
excavate_and_release -> dig_ready, dig, scoop, swing, release;
level -> SetJointTargets level_start, MoveAlongPath level_pass:<place>;
gather -> gather_start, gather_pull; dump_soil -> DumpBed."""


@dataclass(frozen=True)
class PromptBundle:
    stage: Stage
    system_text: str
    user_text: str
    attachments: dict[str, str] = field(default_factory=dict)
    attempt: int = 1

    def messages(self) -> list[dict]:
        parts = [self.user_text]
        for name in REQUIRED[self.stage]:
            parts.append(f"## {name}\n{self.attachments[name]}")
        return [{"role": "system", "content": self.system_text},
                {"role": "user", "content": "\n\n".join(parts)}]

    def to_dict(self) -> dict:
        return {"stage": self.stage.value, "system_text": self.system_text,
                "user_text": self.user_text, "attachments": dict(self.attachments),
                "attempt": self.attempt}


@dataclass(frozen=True)
class HitlFeedback:
    stage: Stage
    feedback: str
    target: str = ""

    def __post_init__(self):
        if not self.feedback.strip():
            raise ValueError("feedback must not be empty")


def default_flags_text(registry: list[FlagRegistryEntry]) -> str:
    return "\n".join(f"{e.name} (initially {str(e.initial).lower()}): {e.description}" for e in registry)


def build_prompt(stage: Stage | str, instruction: str, context: dict[str, str]) -> PromptBundle:
    stage = Stage(stage)
    for item in REQUIRED[stage]:
        if not str(context.get(item, "")).strip():
            raise MissingContext(item)
    if stage is Stage.ACTION_SEQUENCE:
        user = f"Instruction: {instruction.strip()}"
    else:
        user = instruction.strip() or "Generate the behavior tree."
    return PromptBundle(stage, SYSTEM_TEXT[stage], user,
                        {k: context[k] for k in REQUIRED[stage]})


def sequence_context(registry: list[FlagRegistryEntry], machines: dict[str, str] | None = None,
                     places=()) -> dict[str, str]:
    ctx = {"skills": skills_table(), "default_flags": default_flags_text(registry),
           "flag_rules": FLAG_RULES}
    if machines:
        ctx["skills"] += "\n\nMachines: " + ", ".join(f"{m} ({k})" for m, k in sorted(machines.items()))
    if places:
        ctx["skills"] += "\nPlaces: " + ", ".join(sorted(places))
    return ctx


def tree_context(sequence_text: str, bt_example: str, task_params: dict) -> dict[str, str]:
    return {"action_sequence": sequence_text, "template": TEMPLATE, "bt_example": bt_example,
            "custom_nodes": CUSTOM_NODES,
            "task_params": json.dumps(task_params, indent=1, sort_keys=True)}


def refine(bundle: PromptBundle, feedback: HitlFeedback) -> PromptBundle:
    if Stage(feedback.stage) is not bundle.stage:
        raise ValueError(f"feedback for {feedback.stage} cannot refine a {bundle.stage.value} prompt")
    if bundle.attempt >= MAX_ATTEMPTS:
        raise BudgetExhausted(f"{bundle.stage.value} stage already refined once")
    user = (f"{bundle.user_text}\n\nYour previous answer:\n```\n{feedback.target.rstrip()}\n```\n\n"
            f"Operator feedback: {feedback.feedback.strip()}\nRegenerate the full answer.")
    return replace(bundle, user_text=user, attempt=bundle.attempt + 1)
