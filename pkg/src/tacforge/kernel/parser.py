"""Concrete syntax for terms, goals, tactic expressions, and tactic sources.

Terms use prefix application with parentheses: ``plus(S(0), y)``. Decimal
numerals abbreviate constructor chains over nat. Goal statements are
``forall (x : nat) (l : list), lhs = rhs`` with the quantifier prefix
optional. Tactic sources are line-oriented: ``import NAME`` lines plus
``tactic NAME := EXPR`` definitions, where a definition extends until the
next top-level ``tactic``/``import`` line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .goals import Goal, Hypothesis
from .terms import Ctor, Fun, KernelError, Signature, Term, Var, nat_term, term_to_text
from .tactics import (
    Alt,
    Call,
    ConclusionHead,
    ForallOfSort,
    GoalPattern,
    HypothesisHead,
    MatchArm,
    MatchGoal,
    PRIMITIVE_NAMES,
    Prim,
    Repeat,
    Seq,
    TacticExpr,
    Try,
    Wildcard,
    collect_calls,
    collect_patterns,
)


class ParseError(KernelError):
    pass


class UnresolvedName(KernelError):
    """A tactic definition calls a name that nothing in scope defines."""


RESERVED = frozenset(
    {
        "try", "repeat", "match", "goal", "with", "end",
        "tactic", "import", "forall", "conclusion", "hypothesis",
    }
) | PRIMITIVE_NAMES

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>\#[^\n]*)
    | (?P<op>=>|:=|\|\||\|-)
    | (?P<name>[A-Za-z][A-Za-z0-9_']*)
    | (?P<num>[0-9]+)
    | (?P<punct>[(),:;|\[\]=+_])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "name" | "num" | literal text for operators/punctuation
    value: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind in ("ws", "comment"):
            continue
        value = m.group()
        if kind in ("op", "punct"):
            tokens.append(_Token(value, value, m.start()))
        else:
            tokens.append(_Token(kind, value, m.start()))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, offset: int = 0) -> _Token | None:
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(f"unexpected end of input in {self.text!r}")
        self.i += 1
        return tok

    def accept(self, kind: str) -> _Token | None:
        tok = self.peek()
        if tok is not None and tok.kind == kind:
            self.i += 1
            return tok
        return None

    def accept_name(self, value: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.kind == "name" and tok.value == value:
            self.i += 1
            return True
        return False

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            found = "end of input" if tok is None else repr(tok.value)
            raise ParseError(f"expected {kind!r}, found {found} in {self.text!r}")
        self.i += 1
        return tok

    def expect_name(self) -> str:
        tok = self.expect("name")
        return tok.value

    def done(self) -> bool:
        return self.i >= len(self.tokens)

    def expect_done(self) -> None:
        if not self.done():
            tok = self.peek()
            raise ParseError(f"trailing input starting at {tok.value!r} in {self.text!r}")

    # --- terms ---------------------------------------------------------

    def term(self, sig: Signature) -> Term:
        tok = self.next()
        if tok.kind == "num":
            n = int(tok.value)
            if n == 0:
                if "0" not in sig.ctor_by_name:
                    raise ParseError("this signature has no numeral constructors")
                return Ctor("0")
            if "S" not in sig.ctor_by_name:
                raise ParseError("this signature has no numeral constructors")
            return nat_term(n)
        if tok.kind != "name":
            raise ParseError(f"expected a term, found {tok.value!r}")
        name = tok.value
        args: tuple[Term, ...] = ()
        if self.accept("("):
            items = [self.term(sig)]
            while self.accept(","):
                items.append(self.term(sig))
            self.expect(")")
            args = tuple(items)
        if name in sig.ctor_by_name:
            decl = sig.ctor_by_name[name]
            if len(args) != len(decl.arg_sorts):
                raise ParseError(f"{name!r} expects {len(decl.arg_sorts)} arguments, got {len(args)}")
            return Ctor(name, args)
        if name in sig.fun_by_name:
            decl = sig.fun_by_name[name]
            if len(args) != len(decl.arg_sorts):
                raise ParseError(f"{name!r} expects {len(decl.arg_sorts)} arguments, got {len(args)}")
            return Fun(name, args)
        if args:
            raise ParseError(f"unknown symbol {name!r} applied to arguments")
        return Var(name)

    # --- goals ---------------------------------------------------------

    def goal(self, sig: Signature) -> Goal:
        binders: list[tuple[str, str]] = []
        if self.accept_name("forall"):
            while self.accept("("):
                names = [self.expect_name()]
                while (tok := self.peek()) is not None and tok.kind == "name":
                    names.append(self.next().value)
                self.expect(":")
                sort = self.expect_name()
                if sort not in sig.sorts:
                    raise ParseError(f"unknown sort {sort!r}")
                self.expect(")")
                for n in names:
                    binders.append((n, sort))
            if not binders:
                raise ParseError("forall needs at least one (name : sort) group")
            self.expect(",")
        lhs = self.term(sig)
        self.expect("=")
        rhs = self.term(sig)
        seen: set[str] = set()
        for n, _ in binders:
            if n in seen:
                raise ParseError(f"duplicate binder {n!r}")
            seen.add(n)
        return Goal(lhs=lhs, rhs=rhs, binders=tuple(binders))

    # --- tactic expressions ---------------------------------------------

    def tactic_expr(self) -> TacticExpr:
        parts = [self.tactic_alt()]
        while self.accept(";"):
            parts.append(self.tactic_alt())
        expr = parts[-1]
        for p in reversed(parts[:-1]):
            expr = Seq(p, expr)
        return expr

    def tactic_alt(self) -> TacticExpr:
        left = self.tactic_prefix()
        while self.accept("||") or self.accept("+"):
            left = Alt(left, self.tactic_prefix())
        return left

    def tactic_prefix(self) -> TacticExpr:
        if self.accept_name("try"):
            return Try(self.tactic_prefix())
        if self.accept_name("repeat"):
            return Repeat(self.tactic_prefix())
        return self.tactic_atom()

    def tactic_atom(self) -> TacticExpr:
        if self.accept("("):
            expr = self.tactic_expr()
            self.expect(")")
            return expr
        tok = self.peek()
        if tok is None:
            raise ParseError(f"expected a tactic in {self.text!r}")
        if tok.kind == "name" and tok.value == "match":
            return self.match_goal()
        if tok.kind != "name" or tok.value in RESERVED - PRIMITIVE_NAMES:
            raise ParseError(f"expected a tactic, found {tok.value!r}")
        name = self.next().value
        if name in PRIMITIVE_NAMES:
            args: tuple[str, ...] = ()
            if name in ("induction", "rewrite"):
                nxt = self.peek()
                if nxt is not None and nxt.kind == "name" and nxt.value not in RESERVED:
                    args = (self.next().value,)
            return Prim(name, args)
        return Call(name)

    def match_goal(self) -> TacticExpr:
        self.expect("name")  # match
        if not self.accept_name("goal"):
            raise ParseError("expected 'goal' after 'match'")
        if not self.accept_name("with"):
            raise ParseError("expected 'with' after 'match goal'")
        arms: list[MatchArm] = []
        while self.accept("|"):
            pattern = self.goal_pattern()
            self.expect("=>")
            body = self.tactic_expr()
            arms.append(MatchArm(pattern, body))
        if not self.accept_name("end"):
            raise ParseError("expected 'end' to close 'match goal'")
        if not arms:
            raise ParseError("match goal needs at least one arm")
        return MatchGoal(tuple(arms))

    def goal_pattern(self) -> GoalPattern:
        if self.accept("_"):
            return Wildcard()
        if self.accept("["):
            # bracketed spelling: [ |- forall _ : nat, _ ] or [ |- _ ]
            self.expect("|-")
            if self.accept("_"):
                self.expect("]")
                return Wildcard()
            pattern = self.forall_pattern()
            self.expect("]")
            return pattern
        if self.accept_name("conclusion"):
            return ConclusionHead(self.expect_name())
        if self.accept_name("hypothesis"):
            return HypothesisHead(self.expect_name())
        tok = self.peek()
        if tok is not None and tok.kind == "name" and tok.value == "forall":
            return self.forall_pattern()
        found = "end of input" if tok is None else repr(tok.value)
        raise ParseError(f"expected a goal pattern, found {found}")

    def forall_pattern(self) -> GoalPattern:
        if not self.accept_name("forall"):
            raise ParseError("expected 'forall'")
        # accepted spellings: forall SORT | forall _ : SORT | forall x : SORT
        # with an optional trailing ", _"
        if self.accept("_"):
            self.expect(":")
            sort = self.expect_name()
        else:
            first = self.expect_name()
            if self.accept(":"):
                sort = self.expect_name()
            else:
                sort = first
        if self.accept(","):
            self.expect("_")
        return ForallOfSort(sort)


def parse_term(text: str, sig: Signature) -> Term:
    p = _Parser(text)
    t = p.term(sig)
    p.expect_done()
    return t


def parse_goal(text: str, sig: Signature) -> Goal:
    p = _Parser(text)
    g = p.goal(sig)
    p.expect_done()
    return g


def parse_tactic_expr(text: str) -> TacticExpr:
    p = _Parser(text)
    e = p.tactic_expr()
    p.expect_done()
    return e


def split_steps(text: str) -> list[str]:
    """Split a script string into step strings at top-level semicolons."""
    steps: list[str] = []
    depth = 0
    match_depth = 0
    current: list[str] = []
    for tok in _tokenize(text):
        if tok.kind == "(" or tok.kind == "[":
            depth += 1
        elif tok.kind == ")" or tok.kind == "]":
            depth -= 1
        elif tok.kind == "name" and tok.value == "match":
            match_depth += 1
        elif tok.kind == "name" and tok.value == "end":
            match_depth -= 1
        elif tok.kind == ";" and depth == 0 and match_depth == 0:
            steps.append(" ".join(current))
            current = []
            continue
        current.append(tok.value)
    if current:
        steps.append(" ".join(current))
    return [s for s in (s.strip() for s in steps) if s]


# --- tactic sources -----------------------------------------------------

@dataclass(frozen=True)
class TacticDefinition:
    name: str
    body: TacticExpr
    source_text: str


@dataclass(frozen=True)
class TacticSource:
    imports: tuple[str, ...]
    definitions: tuple[TacticDefinition, ...]


def parse_source(text: str) -> TacticSource:
    """Parse a line-oriented tactic source into imports and definitions."""
    imports: list[str] = []
    blocks: list[list[str]] = []
    current: list[str] | None = None
    for raw in text.splitlines():
        line = raw.rstrip()
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        first = stripped.split(None, 1)[0]
        if first == "import":
            parts = stripped.split()
            if len(parts) != 2:
                raise ParseError(f"malformed import line: {stripped!r}")
            imports.append(stripped)
            current = None
        elif first == "tactic":
            current = [line]
            blocks.append(current)
        else:
            if current is None:
                raise ParseError(f"unexpected top-level line: {stripped!r}")
            current.append(line)

    definitions: list[TacticDefinition] = []
    for block in blocks:
        block_text = "\n".join(block).strip()
        p = _Parser(block_text)
        if not p.accept_name("tactic"):
            raise ParseError(f"definition must start with 'tactic': {block_text!r}")
        name = p.expect_name()
        if name in RESERVED:
            raise ParseError(f"{name!r} cannot name a tactic")
        p.expect(":=")
        body = p.tactic_expr()
        p.expect_done()
        definitions.append(TacticDefinition(name, body, block_text))
    return TacticSource(tuple(imports), tuple(definitions))


def compile_source_text(text: str, sig: Signature, extra_names: frozenset[str] = frozenset()) -> TacticSource:
    """Static check of a tactic source: syntax, call closure, pattern symbols.

    Returns the parsed source on success; raises ParseError or UnresolvedName.
    """
    src = parse_source(text)
    defined = {d.name for d in src.definitions} | set(extra_names)
    for d in src.definitions:
        for call in sorted(collect_calls(d.body)):
            if call not in defined:
                raise UnresolvedName(f"tactic {d.name!r} calls undefined name {call!r}")
        for pattern in collect_patterns(d.body):
            if isinstance(pattern, ForallOfSort) and pattern.sort not in sig.sorts:
                raise ParseError(f"tactic {d.name!r} matches unknown sort {pattern.sort!r}")
            if isinstance(pattern, (ConclusionHead, HypothesisHead)):
                if pattern.symbol not in sig.symbol_names:
                    raise ParseError(f"tactic {d.name!r} matches unknown symbol {pattern.symbol!r}")
    return src


def source_environment(src: TacticSource) -> dict[str, TacticExpr]:
    return {d.name: d.body for d in src.definitions}


# --- rendering -----------------------------------------------------------

def pattern_to_text(pattern: GoalPattern) -> str:
    if isinstance(pattern, Wildcard):
        return "_"
    if isinstance(pattern, ForallOfSort):
        return f"forall {pattern.sort}"
    if isinstance(pattern, ConclusionHead):
        return f"conclusion {pattern.symbol}"
    if isinstance(pattern, HypothesisHead):
        return f"hypothesis {pattern.symbol}"
    raise TypeError(f"unknown pattern {pattern!r}")


def tactic_to_text(expr: TacticExpr) -> str:
    # precedence: 0 = sequence context, 1 = alternation, 2 = prefix/atom
    def go(e: TacticExpr, prec: int) -> str:
        if isinstance(e, Seq):
            s = f"{go(e.first, 1)}; {go(e.second, 0)}"
            return f"({s})" if prec > 0 else s
        if isinstance(e, Alt):
            s = f"{go(e.left, 2)} || {go(e.right, 1)}"
            return f"({s})" if prec > 1 else s
        if isinstance(e, Try):
            return f"try {go(e.body, 2)}"
        if isinstance(e, Repeat):
            return f"repeat {go(e.body, 2)}"
        if isinstance(e, Prim):
            return " ".join((e.name, *e.args))
        if isinstance(e, Call):
            return e.name
        if isinstance(e, MatchGoal):
            arms = " ".join(
                f"| {pattern_to_text(a.pattern)} => {go(a.body, 0)}" for a in e.arms
            )
            return f"match goal with {arms} end"
        raise TypeError(f"unknown tactic expression {e!r}")

    return go(expr, 0)


def render_definition(name: str, body: TacticExpr) -> str:
    return f"tactic {name} := {tactic_to_text(body)}"


# --- goal JSON round-trip --------------------------------------------------

def goal_to_json(goal: Goal) -> dict:
    return {
        "binders": [[n, s] for n, s in goal.binders],
        "fixed": [[n, s] for n, s in goal.fixed],
        "hypotheses": [[h.name, term_to_text(h.lhs), term_to_text(h.rhs)] for h in goal.hypotheses],
        "lhs": term_to_text(goal.lhs),
        "rhs": term_to_text(goal.rhs),
    }


def goal_from_json(data: dict, sig: Signature) -> Goal:
    try:
        return Goal(
            lhs=parse_term(data["lhs"], sig),
            rhs=parse_term(data["rhs"], sig),
            binders=tuple((n, s) for n, s in data["binders"]),
            fixed=tuple((n, s) for n, s in data["fixed"]),
            hypotheses=tuple(
                Hypothesis(name, parse_term(lhs, sig), parse_term(rhs, sig))
                for name, lhs, rhs in data["hypotheses"]
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed goal record: {exc}") from exc
