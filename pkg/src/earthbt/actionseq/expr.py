"""Boolean precondition expressions over (flag, expected value) pairs.

Two concrete syntaxes share one recursive-descent parser:

    dsl:   A==true and (B==false or C==true)
    infix: A == true && (B == false || C == true)

``and``/``&&`` binds tighter than ``or``/``||``. The always-true expression is
the empty conjunction.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Union


class ExprError(ValueError):
    def __init__(self, message: str, column: int = 0, expected: str = ""):
        super().__init__(message)
        self.column = column
        self.expected = expected


class MissingFlag(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"flag {self.name!r} missing from snapshot"


@dataclass(frozen=True)
class Leaf:
    flag: str
    expected: bool = True


@dataclass(frozen=True)
class And:
    terms: tuple["FlagExpr", ...] = ()


@dataclass(frozen=True)
class Or:
    terms: tuple["FlagExpr", ...] = ()


FlagExpr = Union[Leaf, And, Or]

ALWAYS = And(())


def is_always(expr: FlagExpr) -> bool:
    return isinstance(expr, And) and not expr.terms


def eval_expr(expr: FlagExpr, values: Mapping[str, bool]) -> bool:
    if isinstance(expr, Leaf):
        try:
            return bool(values[expr.flag]) == expr.expected
        except KeyError:
            raise MissingFlag(expr.flag) from None
    if isinstance(expr, And):
        return all(eval_expr(t, values) for t in expr.terms)
    return any(eval_expr(t, values) for t in expr.terms)


def leaves(expr: FlagExpr) -> Iterator[Leaf]:
    """Leaves in left-to-right order."""
    if isinstance(expr, Leaf):
        yield expr
    else:
        for t in expr.terms:
            yield from leaves(t)


def flag_names(expr: FlagExpr) -> list[str]:
    """Distinct flag names in first-appearance order."""
    seen: dict[str, None] = {}
    for leaf in leaves(expr):
        seen.setdefault(leaf.flag)
    return list(seen)


def conjoin(*exprs: FlagExpr) -> FlagExpr:
    terms = [e for e in exprs if not is_always(e)]
    if not terms:
        return ALWAYS
    if len(terms) == 1:
        return terms[0]
    return And(tuple(terms))


# -- printing ---------------------------------------------------------------

_STYLES = {
    "dsl": {"and": " and ", "or": " or ", "eq": "=="},
    "infix": {"and": " && ", "or": " || ", "eq": " == "},
}


def to_text(expr: FlagExpr, style: str = "dsl") -> str:
    """Render ``expr``; nested same-operator groups keep their parentheses so
    that parsing the output rebuilds the same tree."""
    s = _STYLES[style]
    if is_always(expr):
        return ""

    def render(e: FlagExpr) -> str:
        if isinstance(e, Leaf):
            return f"{e.flag}{s['eq']}{'true' if e.expected else 'false'}"
        op = s["and"] if isinstance(e, And) else s["or"]
        parts = []
        for t in e.terms:
            text = render(t)
            if isinstance(t, (And, Or)) and (isinstance(e, And) or isinstance(t, Or)):
                text = f"({text})"
            parts.append(text)
        return op.join(parts)

    return render(expr)


# -- parsing ----------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<and>&&|\band\b)
  | (?P<or>\|\||\bor\b)
  | (?P<eq>==)
  | (?P<bool>\b(?:true|false|True|False)\b)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<lparen>\()
  | (?P<rparen>\))
""", re.VERBOSE)


def tokenize(text: str, offset: int = 0) -> list[tuple[str, str, int]]:
    """(kind, text, column) triples; columns are 1-based and shifted by ``offset``."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprError(f"unexpected character {text[pos]!r}", offset + pos + 1,
                            "flag comparison, 'and', 'or' or parenthesis")
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), offset + pos + 1))
        pos = m.end()
    tokens.append(("end", "", offset + len(text) + 1))
    return tokens


class _ExprParser:
    def __init__(self, tokens, name_check=None):
        self.tokens = tokens
        self.i = 0
        self.name_check = name_check

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: str, expected: str):
        tok = self.tokens[self.i]
        if tok[0] != kind:
            got = tok[1] or "end of input"
            raise ExprError(f"expected {expected}, got {got!r}", tok[2], expected)
        self.i += 1
        return tok

    def expr(self) -> FlagExpr:
        terms = [self.term()]
        while self.peek()[0] == "or":
            self.i += 1
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def term(self) -> FlagExpr:
        atoms = [self.atom()]
        while self.peek()[0] == "and":
            self.i += 1
            atoms.append(self.atom())
        return atoms[0] if len(atoms) == 1 else And(tuple(atoms))

    def atom(self) -> FlagExpr:
        if self.peek()[0] == "lparen":
            self.i += 1
            inner = self.expr()
            self.take("rparen", "')'")
            return inner
        name = self.take("name", "flag name or '('")
        if self.name_check is not None and not self.name_check(name[1]):
            raise ExprError(f"{name[1]!r} is not a valid flag name", name[2], "flag name")
        self.take("eq", "'=='")
        value = self.take("bool", "true or false")
        return Leaf(name[1], value[1].lower() == "true")


def parse_expr(text: str, offset: int = 0, name_check=None) -> FlagExpr:
    """Parse a precondition; empty text is the always-true expression."""
    if not text.strip():
        return ALWAYS
    p = _ExprParser(tokenize(text, offset), name_check)
    result = p.expr()
    p.take("end", "'and', 'or' or end of expression")
    return result
