"""Reader and writer for ``.aseq`` Action Sequence text.

Grammar, one statement per line::

    <int>. <skill>(<ident>(, <ident>)*) [depends_on <expr>] [# <reasoning>]

followed by generated-flag declarations ``<FLAG>: <description>``, usually
after a blank line.
"""
from __future__ import annotations

import re

from ..flagcore import is_flag_name
from .expr import ExprError, is_always, parse_expr, to_text
from .model import ActionSequence, ActionStatement
from .skills import SKILLS


class SequenceError(ValueError):
    """Base class for located parse errors."""

    line = 0


class SequenceSyntaxError(SequenceError):
    def __init__(self, line: int, column: int, expected: str, detail: str = ""):
        msg = f"line {line}, column {column}: expected {expected}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.line = line
        self.column = column
        self.expected = expected


class UnknownSkill(SequenceError):
    def __init__(self, name: str, line: int):
        super().__init__(f"line {line}: unknown skill {name!r}")
        self.name = name
        self.line = line


class BadArity(SequenceError):
    def __init__(self, skill: str, got: int, want: int, line: int = 0):
        super().__init__(f"line {line}: {skill} takes {want} argument(s), got {got}")
        self.skill = skill
        self.got = got
        self.want = want
        self.line = line


_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_HEAD_RE = re.compile(rf"(?P<index>\d+)\s*\.\s*(?P<skill>{_IDENT})\s*\(")
_DECL_RE = re.compile(r"(?P<name>[A-Z][A-Z0-9_]*)\s*:(?P<desc>.*)$")
_ARG_RE = re.compile(rf"\s*(?P<arg>{_IDENT})\s*")
_IDENT_RE = re.compile(rf"^{_IDENT}$")


def _split_comment(body: str) -> tuple[str, str | None, int]:
    pos = body.find("#")
    if pos < 0:
        return body, None, -1
    reasoning = body[pos + 1:]
    if reasoning.startswith(" "):
        reasoning = reasoning[1:]
    return body[:pos], reasoning.rstrip(), pos


def _parse_statement(text: str, lineno: int, indent: int, expected_index: int) -> ActionStatement:
    code, reasoning, _ = _split_comment(text)
    col = indent + 1
    head = _HEAD_RE.match(code)
    if head is None:
        if not re.match(r"[0-9]", code):
            raise SequenceSyntaxError(lineno, col, "statement number")
        m = re.match(r"[0-9]+\s*", code)
        rest = code[m.end():]
        if not rest.startswith("."):
            raise SequenceSyntaxError(lineno, col + m.end(), "'.' after statement number")
        raise SequenceSyntaxError(lineno, col + m.end() + 1, "skill call 'name('")
    index = int(head.group("index"))
    if index != expected_index:
        raise SequenceSyntaxError(lineno, col, f"statement number {expected_index}",
                                  f"got {index}")
    skill = head.group("skill")
    if skill not in SKILLS:
        raise UnknownSkill(skill, lineno)

    pos = head.end()
    args: list[str] = []
    if code[pos:].lstrip().startswith(")"):
        pos = code.index(")", pos) + 1
    else:
        while True:
            m = _ARG_RE.match(code, pos)
            if m is None:
                raise SequenceSyntaxError(lineno, col + pos, "identifier argument")
            args.append(m.group("arg"))
            pos = m.end()
            if code.startswith(",", pos):
                pos += 1
                continue
            if code.startswith(")", pos):
                pos += 1
                break
            raise SequenceSyntaxError(lineno, col + pos, "',' or ')'")

    sig = SKILLS[skill]
    if len(args) != sig.arity:
        raise BadArity(skill, len(args), sig.arity, lineno)

    rest = code[pos:]
    stripped = rest.strip()
    precondition = parse_expr("")
    if stripped:
        lead = len(rest) - len(rest.lstrip())
        if not stripped.startswith("depends_on") or (
                len(stripped) > len("depends_on") and not stripped[len("depends_on")].isspace()):
            raise SequenceSyntaxError(lineno, col + pos + lead, "'depends_on', '#' or end of line")
        expr_text = rest.lstrip()[len("depends_on"):]
        expr_offset = indent + pos + lead + len("depends_on")
        if not expr_text.strip():
            raise SequenceSyntaxError(lineno, expr_offset + 1, "precondition expression")
        try:
            precondition = parse_expr(expr_text, expr_offset, is_flag_name)
        except ExprError as exc:
            raise SequenceSyntaxError(lineno, exc.column, exc.expected, str(exc)) from None

    return ActionStatement(index=index, skill=skill, machine=args[0], params=tuple(args[1:]),
                           precondition=precondition, reasoning=reasoning or "")


def parse(source: str) -> ActionSequence:
    statements: list[ActionStatement] = []
    declarations: list[tuple[str, str]] = []
    in_declarations = False
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.lstrip()
        if not stripped:
            continue
        indent = len(line) - len(stripped)
        decl = _DECL_RE.match(stripped)
        if decl is not None:
            name = decl.group("name")
            if not is_flag_name(name):
                raise SequenceSyntaxError(lineno, indent + 1, "flag name ending in _FLG")
            desc = decl.group("desc").strip()
            if not desc:
                raise SequenceSyntaxError(lineno, indent + decl.end("name") + 2, "flag description")
            declarations.append((name, desc))
            in_declarations = True
            continue
        if in_declarations:
            raise SequenceSyntaxError(lineno, indent + 1, "flag declaration 'NAME_FLG: description'",
                                      "statements must precede flag declarations")
        statements.append(_parse_statement(stripped, lineno, indent, len(statements) + 1))
    return ActionSequence(tuple(statements), tuple(declarations))


def serialize_statement(stmt: ActionStatement) -> str:
    text = f"{stmt.index}. {stmt.skill}({', '.join(stmt.args)})"
    if not is_always(stmt.precondition):
        text += f" depends_on {to_text(stmt.precondition, 'dsl')}"
    if stmt.reasoning:
        text += f" # {stmt.reasoning}"
    return text


def serialize(seq: ActionSequence) -> str:
    if not seq.statements and not seq.generated_flags:
        return ""
    lines = [serialize_statement(s) for s in seq.statements]
    if seq.generated_flags:
        if lines:
            lines.append("")
        lines.extend(f"{name}: {desc}" for name, desc in seq.generated_flags)
    return "\n".join(lines) + "\n"


def is_identifier(text: str) -> bool:
    return bool(_IDENT_RE.match(text))
