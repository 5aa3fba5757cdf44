"""Template compiler: validated ActionSequence -> one behavior tree per machine.

Each statement becomes::

    ReactiveSequence
      RetryUntilSuccessful(num_attempts=-1)
        Sequence
          DBReader x (one per precondition flag)
          ConditionalExpression
      Sequence
        <primitive actions of the skill>
        SetFlag x (generated flags this statement sets)

A statement without a precondition is just the inner action Sequence. The
per-machine root is a Sequence of statement subtrees in statement order.
"""
from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import quoteattr

from .actionseq import ActionSequence, ExprError, FlagExpr, bind_flags, parse_expr, to_text
from .actionseq.expr import flag_names, is_always
from .btree import (ActionLeaf, BTNode, ConditionalExpression, DBReader, Fallback, PrimitiveAction,
                    ReactiveSequence, RetryUntilSuccessful, Sequence, SetFlag, Verb, check_tree,
                    count_nodes)


class CompileError(ValueError):
    pass


class Unvalidated(CompileError):
    pass


class MissingParam(CompileError):
    def __init__(self, kind: str, key):
        super().__init__(f"missing {kind} for {key!r} in task parameter database")
        self.kind = kind
        self.key = key


@dataclass(frozen=True)
class PathInfo:
    id: str
    length: int


@dataclass
class TaskParamDB:
    paths: dict[tuple[str, str], PathInfo] = field(default_factory=dict)
    joint_targets: dict[str, tuple[float, ...]] = field(default_factory=dict)
    skill_durations: dict[str, int] = field(default_factory=dict)
    place_coords: dict[str, tuple[float, float]] = field(default_factory=dict)
    initial_places: dict[str, str] = field(default_factory=dict)

    def path(self, a: str, b: str) -> PathInfo:
        try:
            return self.paths[(a, b)]
        except KeyError:
            raise MissingParam("path", (a, b)) from None

    def joints(self, pose: str) -> tuple[float, ...]:
        try:
            return self.joint_targets[pose]
        except KeyError:
            raise MissingParam("joint_target", pose) from None

    def duration(self, key: str) -> int:
        try:
            return int(self.skill_durations[key])
        except KeyError:
            raise MissingParam("skill_duration", key) from None

    def start_place(self, machine: str) -> str:
        try:
            return self.initial_places[machine]
        except KeyError:
            raise MissingParam("initial_place", machine) from None

    def to_dict(self) -> dict:
        return {
            "paths": [{"from": a, "to": b, "id": p.id, "length": p.length}
                      for (a, b), p in sorted(self.paths.items())],
            "joint_targets": {k: list(v) for k, v in sorted(self.joint_targets.items())},
            "skill_durations": dict(sorted(self.skill_durations.items())),
            "place_coords": {k: list(v) for k, v in sorted(self.place_coords.items())},
            "initial_places": dict(sorted(self.initial_places.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskParamDB":
        db = cls(
            paths={(p["from"], p["to"]): PathInfo(p.get("id", f"{p['from']}->{p['to']}"),
                                                  int(p["length"]))
                   for p in d.get("paths", [])},
            joint_targets={k: tuple(float(x) for x in v) for k, v in d.get("joint_targets", {}).items()},
            skill_durations={k: int(v) for k, v in d.get("skill_durations", {}).items()},
            place_coords={k: (float(v[0]), float(v[1])) for k, v in d.get("place_coords", {}).items()},
            initial_places=dict(d.get("initial_places", {})),
        )
        for key, ticks in db.skill_durations.items():
            if ticks < 1:
                raise ValueError(f"duration for {key} must be >= 1")
        for p in db.paths.values():
            if p.length < 1:
                raise ValueError(f"path {p.id} length must be >= 1")
        if d.get("travel_speed") and db.place_coords:
            db.add_straight_paths(float(d["travel_speed"]))
        return db

    @classmethod
    def load(cls, path: str | Path) -> "TaskParamDB":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def add_straight_paths(self, speed: float) -> None:
        """Add a straight-line path between every ordered pair of known places
        that has none yet; length in ticks is distance / speed, rounded up."""
        for a, pa in self.place_coords.items():
            for b, pb in self.place_coords.items():
                if a == b or (a, b) in self.paths:
                    continue
                ticks = max(1, math.ceil(math.dist(pa, pb) / speed))
                self.paths[(a, b)] = PathInfo(f"{a}->{b}", ticks)


@dataclass(frozen=True)
class FlagContract:
    setter: int
    value: bool = True
    boundary: str = "OnCompletion"


@dataclass
class CompiledPlan:
    trees: dict[str, BTNode]
    flag_contract: dict[str, FlagContract] = field(default_factory=dict)
    preconditions: dict[int, FlagExpr] = field(default_factory=dict)
    statement_machine: dict[int, str] = field(default_factory=dict)
    flag_descriptions: dict[str, str] = field(default_factory=dict)
    xml: dict[str, str] = field(default_factory=dict)

    @property
    def machines(self) -> list[str]:
        return list(self.trees)

    def contract_dict(self) -> dict:
        return {
            "flags": {name: {"setter": c.setter, "value": c.value, "boundary": c.boundary,
                             "description": self.flag_descriptions.get(name, "")}
                      for name, c in self.flag_contract.items()},
            "statements": {str(i): {"machine": self.statement_machine[i],
                                    "precondition": to_text(e, "dsl")}
                           for i, e in self.preconditions.items()},
        }


# -- compile ----------------------------------------------------------------

def _joint(db: TaskParamDB, node_id: str, pose: str, **extra) -> ActionLeaf:
    params = {"pose": pose, "joints": db.joints(pose)}
    params.update({k: v for k, v in extra.items() if v is not None})
    return ActionLeaf(node_id, action=PrimitiveAction(Verb.SET_JOINT_TARGETS, db.duration(pose), params))


def expand_skill(stmt, db: TaskParamDB, where: dict[str, str], prefix: str) -> list[ActionLeaf]:
    """Primitive actions for one statement. ``where`` tracks each machine's
    place so that a move can look up its path; it is updated in place."""
    ids = (f"{prefix}.a{k}" for k in range(1, 100))
    m = stmt.machine
    if stmt.skill == "move":
        dest = stmt.params[0]
        origin = where[m] if m in where else db.start_place(m)
        # already there: a one-tick stationary hold instead of a path lookup
        path = PathInfo(f"stay:{dest}", 1) if origin == dest else db.path(origin, dest)
        where[m] = dest
        return [ActionLeaf(next(ids), action=PrimitiveAction(
            Verb.MOVE_ALONG_PATH, path.length, {"path": path.id, "from": origin, "to": dest}))]
    if stmt.skill == "initial_pose":
        return [_joint(db, next(ids), "initial")]
    if stmt.skill == "excavate_and_release":
        src, dst = stmt.params
        return [
            _joint(db, next(ids), "dig_ready", target=src),
            _joint(db, next(ids), "dig", target=src),
            _joint(db, next(ids), "scoop", target=src),
            _joint(db, next(ids), "swing", target=dst),
            _joint(db, next(ids), "release", soil_from=src, soil_to=dst),
        ]
    if stmt.skill == "level":
        place = stmt.params[0]
        return [
            _joint(db, next(ids), "level_start", target=place),
            ActionLeaf(next(ids), action=PrimitiveAction(
                Verb.MOVE_ALONG_PATH, db.duration("level_pass"),
                {"path": f"level_pass:{place}", "from": place, "to": place})),
        ]
    if stmt.skill == "gather":
        place = stmt.params[0]
        return [_joint(db, next(ids), "gather_start", target=place),
                _joint(db, next(ids), "gather_pull", target=place)]
    if stmt.skill == "dump_soil":
        return [ActionLeaf(next(ids), action=PrimitiveAction(Verb.DUMP_BED, db.duration("dump"), {}))]
    raise CompileError(f"no expansion for skill {stmt.skill!r}")


def statement_subtree(stmt, actions: list[ActionLeaf], sets: list[tuple[str, bool]]) -> BTNode:
    p = f"s{stmt.index}"
    body = list(actions) + [SetFlag(f"{p}.set{k}", flag=f, value=v)
                            for k, (f, v) in enumerate(sets, start=1)]
    if is_always(stmt.precondition):
        return Sequence(p, body)
    readers = [DBReader(f"{p}.db{k}", flag=f, local_key=f)
               for k, f in enumerate(flag_names(stmt.precondition), start=1)]
    check = ConditionalExpression(f"{p}.cond", expr=stmt.precondition)
    gate = RetryUntilSuccessful(f"{p}.retry", [Sequence(f"{p}.read", readers + [check])],
                                max_attempts=-1)
    return ReactiveSequence(p, [gate, Sequence(f"{p}.act", body)])


def compile_plan(seq: ActionSequence, db: TaskParamDB) -> CompiledPlan:
    bindings, errors = bind_flags(seq)
    if errors:
        raise Unvalidated("; ".join(str(e) for e in errors))
    sets: dict[int, list[tuple[str, bool]]] = {}
    for name, _ in seq.generated_flags:
        b = bindings[name]
        sets.setdefault(b.statement, []).append((name, b.value))

    where: dict[str, str] = {}
    per_machine: dict[str, list[BTNode]] = {}
    for stmt in seq.statements:
        actions = expand_skill(stmt, db, where, f"s{stmt.index}")
        per_machine.setdefault(stmt.machine, []).append(
            statement_subtree(stmt, actions, sets.get(stmt.index, [])))

    trees = {m: Sequence(m, subtrees) for m, subtrees in per_machine.items()}
    for root in trees.values():
        check_tree(root)
    plan = CompiledPlan(
        trees=trees,
        flag_contract={n: FlagContract(b.statement, b.value, b.boundary) for n, b in bindings.items()},
        preconditions={s.index: s.precondition for s in seq.statements},
        statement_machine={s.index: s.machine for s in seq.statements},
        flag_descriptions=seq.flag_descriptions(),
    )
    plan.xml = emit_xml(plan)
    return plan


# -- XML --------------------------------------------------------------------

_PARAM_ORDER = ("path", "from", "to", "pose", "joints", "target", "soil_from", "soil_to")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(x)) for x in value)
    return str(value)


def _attrs(node: BTNode) -> list[tuple[str, str]]:
    attrs = [("name", node.id)]
    if isinstance(node, RetryUntilSuccessful):
        attrs.append(("num_attempts", str(node.max_attempts)))
    elif isinstance(node, DBReader):
        attrs += [("flag", node.flag), ("output_key", node.local_key)]
    elif isinstance(node, ConditionalExpression):
        attrs.append(("expr", to_text(node.expr, "infix")))
    elif isinstance(node, SetFlag):
        attrs += [("flag", node.flag), ("value", _fmt(node.value))]
    elif isinstance(node, ActionLeaf):
        params = node.action.params
        keys = [k for k in _PARAM_ORDER if k in params] + sorted(k for k in params if k not in _PARAM_ORDER)
        attrs += [(k, _fmt(params[k])) for k in keys]
        attrs.append(("duration", str(node.action.duration)))
    return attrs


def _emit_node(node: BTNode, depth: int, out: list[str]) -> None:
    pad = "  " * depth
    attrs = "".join(f" {k}={quoteattr(v)}" for k, v in _attrs(node))
    if not node.children:
        out.append(f"{pad}<{node.tag}{attrs}/>")
        return
    out.append(f"{pad}<{node.tag}{attrs}>")
    for child in node.children:
        _emit_node(child, depth + 1, out)
    out.append(f"{pad}</{node.tag}>")


def emit_tree_xml(root: BTNode) -> str:
    out = ['<root BTCPP_format="4" main_tree_to_execute="MainTree">',
           '  <BehaviorTree ID="MainTree">']
    _emit_node(root, 2, out)
    out += ["  </BehaviorTree>", "</root>"]
    return "\n".join(out) + "\n"


def emit_xml(plan: CompiledPlan) -> dict[str, str]:
    return {m: emit_tree_xml(root) for m, root in plan.trees.items() if root.children}


class XmlError(ValueError):
    pass


class XmlSyntax(XmlError):
    pass


class UnknownTag(XmlError):
    def __init__(self, name: str):
        super().__init__(f"unknown tag <{name}>")
        self.name = name


class BadAttribute(XmlError):
    pass


_COMPOSITES = {"Sequence": Sequence, "ReactiveSequence": ReactiveSequence, "Fallback": Fallback}


def _need(el: ET.Element, key: str) -> str:
    value = el.get(key)
    if value is None:
        raise BadAttribute(f"<{el.tag}> needs attribute {key!r}")
    return value


def _bool(el: ET.Element, key: str) -> bool:
    value = _need(el, key)
    if value not in ("true", "false"):
        raise BadAttribute(f"<{el.tag}> {key}={value!r} must be true or false")
    return value == "true"


def _build(el: ET.Element) -> BTNode:
    tag = el.tag
    nid = _need(el, "name")
    kids = list(el)
    if tag in _COMPOSITES:
        return _COMPOSITES[tag](nid, [_build(k) for k in kids])
    if tag == "RetryUntilSuccessful":
        try:
            attempts = int(_need(el, "num_attempts"))
        except ValueError:
            raise BadAttribute(f"<{tag}> num_attempts must be an integer") from None
        return RetryUntilSuccessful(nid, [_build(k) for k in kids], max_attempts=attempts)
    if kids:
        raise BadAttribute(f"<{tag} name={nid!r}> is a leaf and cannot have children")
    if tag == "DBReader":
        return DBReader(nid, flag=_need(el, "flag"), local_key=_need(el, "output_key"))
    if tag == "ConditionalExpression":
        try:
            return ConditionalExpression(nid, expr=parse_expr(_need(el, "expr")))
        except ExprError as exc:
            raise BadAttribute(f"<{tag} name={nid!r}> expr: {exc}") from None
    if tag == "SetFlag":
        return SetFlag(nid, flag=_need(el, "flag"), value=_bool(el, "value"))
    try:
        verb = Verb(tag)
    except ValueError:
        raise UnknownTag(tag) from None
    params = {}
    for key, value in el.attrib.items():
        if key in ("name", "duration"):
            continue
        if key == "joints":
            try:
                params[key] = tuple(float(x) for x in value.split(",")) if value else ()
            except ValueError:
                raise BadAttribute(f"<{tag} name={nid!r}> joints must be comma-separated numbers") from None
        else:
            params[key] = value
    try:
        action = PrimitiveAction(verb, int(_need(el, "duration")), params)
    except ValueError as exc:
        raise BadAttribute(f"<{tag} name={nid!r}>: {exc}") from None
    return ActionLeaf(nid, action=action)


def parse_xml(doc: str) -> BTNode:
    try:
        root = ET.fromstring(doc)
    except ET.ParseError as exc:
        raise XmlSyntax(str(exc)) from None
    if root.tag != "root":
        raise UnknownTag(root.tag)
    if root.get("BTCPP_format") != "4":
        raise BadAttribute("<root> needs BTCPP_format=\"4\"")
    main = root.get("main_tree_to_execute", "MainTree")
    trees = [el for el in root if el.tag == "BehaviorTree"]
    for el in root:
        if el.tag != "BehaviorTree":
            raise UnknownTag(el.tag)
    chosen = [t for t in trees if t.get("ID") == main]
    if len(chosen) != 1:
        raise BadAttribute(f"expected exactly one <BehaviorTree ID={main!r}>")
    body = list(chosen[0])
    if len(body) != 1:
        raise BadAttribute("<BehaviorTree> must have exactly one root node")
    node = _build(body[0])
    try:
        check_tree(node)
    except ValueError as exc:
        raise BadAttribute(str(exc)) from None
    return node


def plan_from_xml(docs: dict[str, str]) -> CompiledPlan:
    """Plan built from externally authored XML; statement preconditions are
    recovered from each statement's ConditionalExpression."""
    trees = {m: parse_xml(doc) for m, doc in docs.items()}
    plan = CompiledPlan(trees=trees, xml=dict(docs))
    for machine, root in trees.items():
        for node in root.walk():
            index = statement_index(node.id)
            if index is None:
                continue
            plan.statement_machine.setdefault(index, machine)
            if isinstance(node, ConditionalExpression) and node.id == f"s{index}.cond":
                plan.preconditions[index] = node.expr
            plan.preconditions.setdefault(index, parse_expr(""))
            if isinstance(node, SetFlag):
                plan.flag_contract.setdefault(node.flag, FlagContract(index, node.value))
    return plan


def statement_index(node_id: str) -> int | None:
    """``s3.a2`` -> 3; None for ids outside the statement naming scheme."""
    head = node_id.split(".", 1)[0]
    if head[:1] == "s" and head[1:].isascii() and head[1:].isdigit():
        return int(head[1:])
    return None


def plan_stats(plan: CompiledPlan) -> dict:
    per = {m: count_nodes(root) for m, root in plan.trees.items()}
    return {"nn_total": sum(per.values()), "nn_per_machine": per,
            "flag_count": len(plan.flag_contract)}


def merge_plans(*plans: CompiledPlan) -> CompiledPlan:
    merged = CompiledPlan(trees={})
    for p in plans:
        overlap = set(merged.trees) & set(p.trees)
        if overlap:
            raise CompileError(f"plans share machines {sorted(overlap)}")
        merged.trees.update(p.trees)
        merged.flag_contract.update(p.flag_contract)
        merged.preconditions.update(p.preconditions)
        merged.statement_machine.update(p.statement_machine)
        merged.flag_descriptions.update(p.flag_descriptions)
        merged.xml.update(p.xml)
    return merged
