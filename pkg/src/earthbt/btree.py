"""Behavior-tree engine: node set, tick/halt semantics, per-tree Local Blackboard.

Node semantics follow BehaviorTree.CPP:

* ``Sequence`` resumes at its running child.
* ``ReactiveSequence`` restarts from the leftmost child every tick and halts
  any running child to the right of a child that returns Running or Failure.
* ``RetryUntilSuccessful`` with ``max_attempts=-1`` yields Running after each
  failed attempt instead of looping internally, so cooperating trees get to
  tick in between.
* ``ConditionalExpression`` only sees the Local Blackboard; ``DBReader``
  copies one Global Blackboard flag into it.
"""
from __future__ import annotations

import enum
import json
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol

from .actionseq.expr import ALWAYS, FlagExpr, MissingFlag, eval_expr
from .flagcore import GlobalBlackboard, Source, UnknownFlag


class TickStatus(str, enum.Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    RUNNING = "Running"


class NodeState(str, enum.Enum):
    IDLE = "Idle"
    RUNNING = "Running"
    DONE = "Done"


class MalformedTree(ValueError):
    pass


class UnknownNode(KeyError):
    pass


class Verb(str, enum.Enum):
    MOVE_ALONG_PATH = "MoveAlongPath"
    SET_JOINT_TARGETS = "SetJointTargets"
    DUMP_BED = "DumpBed"
    WAIT = "Wait"


_REQUIRED_PARAMS = {
    Verb.MOVE_ALONG_PATH: ("path", "from", "to"),
    Verb.SET_JOINT_TARGETS: ("pose", "joints"),
    Verb.DUMP_BED: (),
    Verb.WAIT: (),
}


@dataclass(frozen=True)
class PrimitiveAction:
    verb: Verb
    duration: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "verb", Verb(self.verb))
        if int(self.duration) < 1:
            raise ValueError(f"{self.verb.value}: duration must be >= 1, got {self.duration}")
        missing = [p for p in _REQUIRED_PARAMS[self.verb] if p not in self.params]
        if missing:
            raise ValueError(f"{self.verb.value}: missing params {missing}")

    def get(self, key: str, default=None):
        return self.params.get(key, default)

    @property
    def label(self) -> str:
        """Short name used in event logs: pose, path id or verb."""
        if self.verb is Verb.SET_JOINT_TARGETS:
            return self.params["pose"]
        if self.verb is Verb.MOVE_ALONG_PATH:
            return self.params["path"]
        return self.verb.value


class ActionExecutor(Protocol):
    """World side of ActionLeaf: starts, polls and cancels primitive actions."""

    def start(self, machine: str, node_id: str, action: PrimitiveAction) -> object: ...

    def poll(self, handle: object) -> TickStatus: ...

    def cancel(self, handle: object) -> None: ...


class _Ctx:
    __slots__ = ("tree", "bb", "world", "now")

    def __init__(self, tree: "TreeInstance", bb, world, now: int):
        self.tree = tree
        self.bb = bb
        self.world = world
        self.now = now


# -- nodes ------------------------------------------------------------------

@dataclass
class BTNode:
    id: str
    children: list["BTNode"] = field(default_factory=list)
    state: NodeState = field(default=NodeState.IDLE, compare=False, repr=False)
    result: TickStatus | None = field(default=None, compare=False, repr=False)

    tag = "BTNode"
    is_composite = False

    def tick(self, ctx: _Ctx) -> TickStatus:
        status = self._tick(ctx)
        self.result = status
        self.state = NodeState.RUNNING if status is TickStatus.RUNNING else NodeState.DONE
        ctx.tree._record(ctx.now, self, status)
        return status

    def _tick(self, ctx: _Ctx) -> TickStatus:
        raise NotImplementedError

    def halt(self, ctx: _Ctx) -> None:
        if self.state is NodeState.RUNNING:
            self._halt(ctx)
        for child in self.children:
            if child.state is not NodeState.IDLE:
                child.halt(ctx)
        self._clear()
        self.state = NodeState.IDLE
        self.result = None

    def _halt(self, ctx: _Ctx) -> None:
        pass

    def _clear(self) -> None:
        pass

    def walk(self) -> Iterator["BTNode"]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class Sequence(BTNode):
    _index: int = field(default=0, compare=False, repr=False)

    tag = "Sequence"
    is_composite = True

    def _tick(self, ctx):
        while self._index < len(self.children):
            status = self.children[self._index].tick(ctx)
            if status is TickStatus.RUNNING:
                return status
            if status is TickStatus.FAILURE:
                self._index = 0
                return status
            self._index += 1
        self._index = 0
        return TickStatus.SUCCESS

    def _clear(self):
        self._index = 0


@dataclass
class ReactiveSequence(BTNode):
    tag = "ReactiveSequence"
    is_composite = True

    def _tick(self, ctx):
        for k, child in enumerate(self.children):
            status = child.tick(ctx)
            if status is not TickStatus.SUCCESS:
                for later in self.children[k + 1:]:
                    if later.state is NodeState.RUNNING:
                        later.halt(ctx)
                return status
        return TickStatus.SUCCESS


@dataclass
class Fallback(BTNode):
    _index: int = field(default=0, compare=False, repr=False)

    tag = "Fallback"
    is_composite = True

    def _tick(self, ctx):
        while self._index < len(self.children):
            status = self.children[self._index].tick(ctx)
            if status is TickStatus.RUNNING:
                return status
            if status is TickStatus.SUCCESS:
                self._index = 0
                return status
            self._index += 1
        self._index = 0
        return TickStatus.FAILURE

    def _clear(self):
        self._index = 0


@dataclass
class RetryUntilSuccessful(BTNode):
    max_attempts: int = -1
    attempts: int = field(default=0, compare=False, repr=False)

    tag = "RetryUntilSuccessful"

    def _tick(self, ctx):
        child = self.children[0]
        status = child.tick(ctx)
        if status is TickStatus.SUCCESS:
            self.attempts = 0
            return status
        if status is TickStatus.RUNNING:
            return status
        self.attempts += 1
        child.halt(ctx)
        if 0 <= self.max_attempts <= self.attempts:
            self.attempts = 0
            return TickStatus.FAILURE
        return TickStatus.RUNNING

    def _clear(self):
        self.attempts = 0


@dataclass
class DBReader(BTNode):
    flag: str = ""
    local_key: str = ""

    tag = "DBReader"

    def _tick(self, ctx):
        try:
            value = ctx.bb.get_flag(self.flag)
        except UnknownFlag:
            return TickStatus.FAILURE
        ctx.tree.local[self.local_key] = value
        return TickStatus.SUCCESS


@dataclass
class ConditionalExpression(BTNode):
    expr: FlagExpr = ALWAYS

    tag = "ConditionalExpression"

    def _tick(self, ctx):
        try:
            ok = eval_expr(self.expr, ctx.tree.local)
        except MissingFlag:
            ok = False
        if not ok:
            ctx.tree._failed_conditions.append(self)
        return TickStatus.SUCCESS if ok else TickStatus.FAILURE


@dataclass
class ActionLeaf(BTNode):
    action: PrimitiveAction | None = None
    _handle: object = field(default=None, compare=False, repr=False)

    @property
    def tag(self) -> str:  # type: ignore[override]
        return self.action.verb.value

    def _tick(self, ctx):
        if self.state is not NodeState.RUNNING:
            self._handle = ctx.world.start(ctx.tree.machine, self.id, self.action)
        status = TickStatus(ctx.world.poll(self._handle))
        if status is not TickStatus.RUNNING:
            self._handle = None
        return status

    def _halt(self, ctx):
        if self._handle is not None:
            ctx.world.cancel(self._handle)
        self._handle = None

    def _clear(self):
        self._handle = None


@dataclass
class SetFlag(BTNode):
    flag: str = ""
    value: bool = True

    tag = "SetFlag"

    def _tick(self, ctx):
        try:
            ctx.bb.set_flag(self.flag, self.value, Source.ACTION, ctx.now)
        except UnknownFlag:
            return TickStatus.FAILURE
        return TickStatus.SUCCESS


def check_tree(root: BTNode) -> None:
    seen: set[str] = set()
    for node in root.walk():
        if not node.id:
            raise MalformedTree("node without id")
        if node.id in seen:
            raise MalformedTree(f"duplicate node id {node.id!r}")
        seen.add(node.id)
        if node.is_composite and not node.children:
            raise MalformedTree(f"{node.tag} {node.id!r} has no children")
        if isinstance(node, RetryUntilSuccessful) and len(node.children) != 1:
            raise MalformedTree(f"RetryUntilSuccessful {node.id!r} needs exactly one child")
        if not node.is_composite and not isinstance(node, RetryUntilSuccessful) and node.children:
            raise MalformedTree(f"leaf {node.id!r} has children")
        if isinstance(node, ActionLeaf) and node.action is None:
            raise MalformedTree(f"action leaf {node.id!r} has no action")


def count_nodes(root: BTNode) -> int:
    return sum(1 for _ in root.walk())


# -- tree instance ----------------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    tick: int
    machine: str
    node_id: str
    status: TickStatus

    def to_dict(self) -> dict:
        return {"tick": self.tick, "machine": self.machine, "node_id": self.node_id,
                "status": self.status.value}


class TreeInstance:
    def __init__(self, machine: str, root: BTNode, trace: bool = False):
        check_tree(root)
        self.machine = machine
        self.root = root
        self.local: dict[str, bool] = {}
        self.status: TickStatus | None = None
        self.tracing = trace
        self.trace: list[TraceRecord] = []
        self._nodes = {n.id: n for n in root.walk()}
        self._failed_conditions: list[ConditionalExpression] = []
        self._lock = threading.Lock()

    def _record(self, now: int, node: BTNode, status: TickStatus) -> None:
        if self.tracing:
            self.trace.append(TraceRecord(now, self.machine, node.id, status))

    def node(self, node_id: str) -> BTNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    @property
    def node_states(self) -> dict[str, NodeState]:
        return {nid: n.state for nid, n in self._nodes.items()}

    @property
    def finished(self) -> bool:
        return self.status in (TickStatus.SUCCESS, TickStatus.FAILURE)

    def tick(self, bb: GlobalBlackboard, world: ActionExecutor, now: int = 0) -> TickStatus:
        with self._lock:
            self._failed_conditions = []
            self.status = self.root.tick(_Ctx(self, bb, world, now))
            return self.status

    def halt(self, node_id: str, world: ActionExecutor | None = None) -> None:
        node = self.node(node_id)
        node.halt(_Ctx(self, None, world, 0))

    def reset(self, world: ActionExecutor | None = None) -> None:
        self.root.halt(_Ctx(self, None, world, 0))
        self.local.clear()
        self.status = None
        self._failed_conditions = []

    def running_actions(self) -> list[ActionLeaf]:
        return [n for n in self._nodes.values()
                if isinstance(n, ActionLeaf) and n.state is NodeState.RUNNING]

    def key_to_flag(self) -> dict[str, str]:
        return {n.local_key: n.flag for n in self._nodes.values() if isinstance(n, DBReader)}

    @property
    def failed_conditions(self) -> list[ConditionalExpression]:
        """ConditionalExpressions that evaluated false during the last tick."""
        return list(self._failed_conditions)

    @property
    def waiting(self) -> bool:
        """Running only because some gate is false: no action is in flight."""
        return (self.status is TickStatus.RUNNING and not self.running_actions()
                and bool(self._failed_conditions))

    def pending_writes(self) -> set[tuple[str, bool]]:
        """(flag, value) pairs of SetFlag nodes that have not run yet."""
        return {(n.flag, n.value) for n in self._nodes.values()
                if isinstance(n, SetFlag) and n.state is NodeState.IDLE}

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.trace)


def tick(tree: TreeInstance, bb: GlobalBlackboard, world: ActionExecutor, now: int = 0) -> TickStatus:
    return tree.tick(bb, world, now)


def halt(tree: TreeInstance, node_id: str, world: ActionExecutor | None = None) -> None:
    tree.halt(node_id, world)


def reset(tree: TreeInstance, world: ActionExecutor | None = None) -> None:
    tree.reset(world)


# -- schedulers -------------------------------------------------------------

def tick_round_robin(trees: Iterable[TreeInstance], bb: GlobalBlackboard,
                     world: ActionExecutor, now: int) -> dict[str, TickStatus]:
    """Tick every unfinished tree once, in machine-id order."""
    out = {}
    for tree in sorted(trees, key=lambda t: t.machine):
        if not tree.finished:
            out[tree.machine] = tree.tick(bb, world, now)
    return out


class ConcurrentTicker:
    """One thread per tree; each call to :meth:`tick_all` is a tick barrier.

    Trees tick in parallel and share only the Global Blackboard (and whatever
    locking the world does). Use as a context manager so the threads stop.
    """

    def __init__(self, trees: Iterable[TreeInstance], bb: GlobalBlackboard, world: ActionExecutor):
        self.trees = sorted(trees, key=lambda t: t.machine)
        self.bb = bb
        self.world = world
        n = len(self.trees) + 1
        self._go = threading.Barrier(n)
        self._done = threading.Barrier(n)
        self._now = 0
        self._stop = False
        self._errors: list[BaseException] = []
        self._threads = [threading.Thread(target=self._loop, args=(t,), daemon=True,
                                          name=f"bt-{t.machine}") for t in self.trees]

    def __enter__(self):
        for th in self._threads:
            th.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def _loop(self, tree: TreeInstance) -> None:
        while True:
            self._go.wait()
            if self._stop:
                return
            try:
                if not tree.finished:
                    tree.tick(self.bb, self.world, self._now)
            except BaseException as e:  # surfaced in tick_all
                self._errors.append(e)
            self._done.wait()

    def tick_all(self, now: int) -> dict[str, TickStatus]:
        self._now = now
        before = {t.machine for t in self.trees if not t.finished}
        self._go.wait()
        self._done.wait()
        if self._errors:
            raise self._errors[0]
        return {t.machine: t.status for t in self.trees if t.machine in before}

    def close(self) -> None:
        if self._stop:
            return
        self._stop = True
        if any(th.is_alive() for th in self._threads):
            self._go.wait()
        for th in self._threads:
            th.join(timeout=1)
