"""First-order terms, signatures, and innermost normalization.

The kernel works over plain first-order terms: variables, constructor
applications, and applications of defined functions. A signature fixes the
available sorts, the constructors of each sort, and the defined functions,
each with one defining equation per constructor of its recursive argument.
Normalization rewrites innermost redexes with those equations until no redex
remains; the signature invariants below make that process terminating and
confluent, so normal forms are unique.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property


class KernelError(Exception):
    """Base class for kernel failures."""


class UnboundVariable(KernelError):
    """A term mentions a variable the environment does not cover."""


@dataclass(frozen=True)
class Term:
    pass


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Ctor(Term):
    name: str
    args: tuple[Term, ...] = ()


@dataclass(frozen=True)
class Fun(Term):
    name: str
    args: tuple[Term, ...] = ()


def term_to_text(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    args = getattr(t, "args", ())
    if not args:
        return t.name
    return f"{t.name}({', '.join(term_to_text(a) for a in args)})"


def free_vars(t: Term) -> frozenset[str]:
    if isinstance(t, Var):
        return frozenset((t.name,))
    out: frozenset[str] = frozenset()
    for a in t.args:
        out |= free_vars(a)
    return out


def substitute(t: Term, binding: dict[str, Term]) -> Term:
    if isinstance(t, Var):
        return binding.get(t.name, t)
    if isinstance(t, Ctor):
        return Ctor(t.name, tuple(substitute(a, binding) for a in t.args))
    return Fun(t.name, tuple(substitute(a, binding) for a in t.args))


def is_ground_constructor_term(t: Term) -> bool:
    if isinstance(t, Var) or isinstance(t, Fun):
        return False
    return all(is_ground_constructor_term(a) for a in t.args)


def term_size(t: Term) -> int:
    if isinstance(t, Var):
        return 1
    return 1 + sum(term_size(a) for a in t.args)


@dataclass(frozen=True)
class Constructor:
    name: str
    arg_sorts: tuple[str, ...]
    sort: str


@dataclass(frozen=True)
class FunctionSym:
    name: str
    arg_sorts: tuple[str, ...]
    sort: str
    recursive_arg: int


@dataclass(frozen=True)
class Equation:
    """One defining rule: ``lhs`` is ``f(x.., C(y..), x..)``; ``rhs`` uses only
    the pattern variables, and recursive calls of ``f`` only apply it to the
    constructor's own variables."""

    lhs: Fun
    rhs: Term

    @property
    def function(self) -> str:
        return self.lhs.name

    @property
    def constructor(self) -> str:
        rec = self.lhs.args[_pattern_rec_index(self.lhs)]
        assert isinstance(rec, Ctor)
        return rec.name


def _pattern_rec_index(lhs: Fun) -> int:
    for i, a in enumerate(lhs.args):
        if isinstance(a, Ctor):
            return i
    raise ValueError(f"defining equation lhs has no constructor pattern: {term_to_text(lhs)}")


@dataclass(frozen=True)
class Signature:
    sorts: tuple[str, ...]
    constructors: tuple[Constructor, ...]
    functions: tuple[FunctionSym, ...]
    equations: tuple[Equation, ...]

    @cached_property
    def ctor_by_name(self) -> dict[str, Constructor]:
        return {c.name: c for c in self.constructors}

    @cached_property
    def fun_by_name(self) -> dict[str, FunctionSym]:
        return {f.name: f for f in self.functions}

    @cached_property
    def equation_by_key(self) -> dict[tuple[str, str], Equation]:
        return {(e.function, e.constructor): e for e in self.equations}

    @cached_property
    def symbol_names(self) -> frozenset[str]:
        return frozenset(self.ctor_by_name) | frozenset(self.fun_by_name)

    def constructors_of(self, sort: str) -> tuple[Constructor, ...]:
        return tuple(c for c in self.constructors if c.sort == sort)

    def validate(self) -> None:
        """Check every structural invariant; raise ValueError on the first hole."""
        seen: set[str] = set()
        for name in [c.name for c in self.constructors] + [f.name for f in self.functions]:
            if name in seen:
                raise ValueError(f"duplicate symbol {name!r}")
            seen.add(name)
        for c in self.constructors:
            for s in (*c.arg_sorts, c.sort):
                if s not in self.sorts:
                    raise ValueError(f"constructor {c.name!r} uses unknown sort {s!r}")
        for f in self.functions:
            for s in (*f.arg_sorts, f.sort):
                if s not in self.sorts:
                    raise ValueError(f"function {f.name!r} uses unknown sort {s!r}")
            if not 0 <= f.recursive_arg < len(f.arg_sorts):
                raise ValueError(f"function {f.name!r} has an out-of-range recursive argument")
            rec_sort = f.arg_sorts[f.recursive_arg]
            ctors = self.constructors_of(rec_sort)
            if not ctors:
                raise ValueError(f"function {f.name!r} recurses on sort {rec_sort!r} with no constructors")
            keys = {(f.name, c.name) for c in ctors}
            have = {(e.function, e.constructor) for e in self.equations if e.function == f.name}
            if have != keys:
                raise ValueError(
                    f"function {f.name!r} needs exactly one equation per constructor of "
                    f"{rec_sort!r}; missing {sorted(keys - have)}, extra {sorted(have - keys)}"
                )
        for e in self.equations:
            self._validate_equation(e)
        self._validate_call_graph()

    def _validate_equation(self, e: Equation) -> None:
        f = self.fun_by_name.get(e.lhs.name)
        if f is None:
            raise ValueError(f"equation for unknown function {e.lhs.name!r}")
        if len(e.lhs.args) != len(f.arg_sorts):
            raise ValueError(f"equation lhs arity mismatch for {f.name!r}")
        pattern_vars: list[str] = []
        ctor_vars: list[str] = []
        for i, a in enumerate(e.lhs.args):
            if i == f.recursive_arg:
                if not isinstance(a, Ctor):
                    raise ValueError(f"equation for {f.name!r} must match a constructor at position {i}")
                c = self.ctor_by_name.get(a.name)
                if c is None or c.sort != f.arg_sorts[i]:
                    raise ValueError(f"equation for {f.name!r} matches a bad constructor {a.name!r}")
                for sub in a.args:
                    if not isinstance(sub, Var):
                        raise ValueError(f"nested patterns are not allowed in {term_to_text(e.lhs)}")
                    pattern_vars.append(sub.name)
                    ctor_vars.append(sub.name)
            else:
                if not isinstance(a, Var):
                    raise ValueError(f"non-recursive positions must be variables in {term_to_text(e.lhs)}")
                pattern_vars.append(a.name)
        if len(set(pattern_vars)) != len(pattern_vars):
            raise ValueError(f"equation lhs is not left-linear: {term_to_text(e.lhs)}")
        if not free_vars(e.rhs) <= set(pattern_vars):
            raise ValueError(f"equation rhs uses variables outside the pattern: {term_to_text(e.rhs)}")
        for call in _fun_calls(e.rhs):
            if call.name == f.name:
                rec = call.args[f.recursive_arg]
                if not (isinstance(rec, Var) and rec.name in ctor_vars):
                    raise ValueError(
                        f"recursive call in {term_to_text(e.rhs)} must consume a variable "
                        f"bound by the matched constructor"
                    )

    def _validate_call_graph(self) -> None:
        edges: dict[str, set[str]] = {f.name: set() for f in self.functions}
        for e in self.equations:
            for call in _fun_calls(e.rhs):
                if call.name != e.function:
                    if call.name not in edges:
                        raise ValueError(f"equation rhs calls unknown function {call.name!r}")
                    edges[e.function].add(call.name)
        state: dict[str, int] = {}

        def visit(name: str) -> None:
            state[name] = 1
            for nxt in edges[name]:
                mark = state.get(nxt)
                if mark == 1:
                    raise ValueError(f"cyclic calls between defined functions at {name!r} -> {nxt!r}")
                if mark is None:
                    visit(nxt)
            state[name] = 2

        for name in edges:
            if state.get(name) is None:
                visit(name)


def _fun_calls(t: Term) -> list[Fun]:
    out: list[Fun] = []
    if isinstance(t, Fun):
        out.append(t)
    if not isinstance(t, Var):
        for a in t.args:
            out.extend(_fun_calls(a))
    return out


def infer_sort(t: Term, sig: Signature, var_sorts: dict[str, str]) -> str:
    """Sort of a well-formed term; raises KernelError on arity or sort mismatches."""
    if isinstance(t, Var):
        sort = var_sorts.get(t.name)
        if sort is None:
            raise UnboundVariable(f"variable {t.name!r} is not bound by any binder or context")
        return sort
    if isinstance(t, Ctor):
        decl = sig.ctor_by_name.get(t.name)
    else:
        decl = sig.fun_by_name.get(t.name)
    if decl is None:
        raise KernelError(f"unknown symbol {t.name!r}")
    if len(t.args) != len(decl.arg_sorts):
        raise KernelError(f"{t.name!r} expects {len(decl.arg_sorts)} arguments, got {len(t.args)}")
    for a, want in zip(t.args, decl.arg_sorts):
        got = infer_sort(a, sig, var_sorts)
        if got != want:
            raise KernelError(f"argument of {t.name!r} has sort {got!r}, expected {want!r}")
    return decl.sort


def _match_pattern(pattern: Term, value: Term, binding: dict[str, Term]) -> bool:
    if isinstance(pattern, Var):
        binding[pattern.name] = value
        return True
    if type(pattern) is type(value) and pattern.name == value.name and len(pattern.args) == len(value.args):
        return all(_match_pattern(p, v, binding) for p, v in zip(pattern.args, value.args))
    return False


def normalize(t: Term, sig: Signature, max_steps: int | None = None) -> Term:
    """Unique normal form under innermost rewriting with the defining equations.

    Iterative, so rewrite chains are bounded by memory rather than the
    interpreter stack. ``max_steps`` bounds the number of equation
    applications; it exists for fuzzing unvalidated signatures and is not
    needed for validated ones.
    """
    steps = max_steps if max_steps is not None else -1
    EVAL, BUILD = 0, 1
    work: list[tuple[int, Term]] = [(EVAL, t)]
    values: list[Term] = []
    while work:
        tag, node = work.pop()
        if tag == EVAL:
            if isinstance(node, Var):
                values.append(node)
                continue
            work.append((BUILD, node))
            for a in reversed(node.args):
                work.append((EVAL, a))
            continue
        n = len(node.args)
        args = tuple(values[len(values) - n :]) if n else ()
        if n:
            del values[len(values) - n :]
        if isinstance(node, Ctor):
            values.append(Ctor(node.name, args))
            continue
        fn = sig.fun_by_name.get(node.name)
        if fn is None:
            raise KernelError(f"unknown function {node.name!r}")
        rec = args[fn.recursive_arg]
        if not isinstance(rec, Ctor):
            values.append(Fun(node.name, args))
            continue
        eq = sig.equation_by_key.get((node.name, rec.name))
        if eq is None:
            raise KernelError(f"no defining equation for {node.name!r} on {rec.name!r}")
        binding: dict[str, Term] = {}
        if not _match_pattern(eq.lhs, Fun(node.name, args), binding):
            raise KernelError(f"defining equation for {node.name!r}/{rec.name!r} does not match")
        if steps == 0:
            raise KernelError("normalization step bound exceeded")
        if steps > 0:
            steps -= 1
        work.append((EVAL, substitute(eq.rhs, binding)))
    assert len(values) == 1
    return values[0]


def ground_eval(t: Term, env: dict[str, Term], sig: Signature) -> Term:
    """Substitute a ground constructor environment into ``t`` and normalize.

    The result is constructor-only; missing variables raise UnboundVariable.
    """
    for name, value in env.items():
        if not is_ground_constructor_term(value):
            raise ValueError(f"environment value for {name!r} is not a ground constructor term")
    missing = free_vars(t) - set(env)
    if missing:
        raise UnboundVariable(f"no value for {sorted(missing)[0]!r}")
    result = normalize(substitute(t, env), sig)
    if not is_ground_constructor_term(result):
        raise KernelError(f"ground evaluation left a stuck term: {term_to_text(result)}")
    return result


def nat_term(n: int) -> Term:
    t: Term = Ctor("0")
    for _ in range(n):
        t = Ctor("S", (t,))
    return t


def list_term(items: list[Term]) -> Term:
    t: Term = Ctor("nil")
    for item in reversed(items):
        t = Ctor("cons", (item, t))
    return t


def default_signature() -> Signature:
    """Naturals and lists of naturals with plus, mult, append, rev, length."""
    v = Var
    sig = Signature(
        sorts=("nat", "list"),
        constructors=(
            Constructor("0", (), "nat"),
            Constructor("S", ("nat",), "nat"),
            Constructor("nil", (), "list"),
            Constructor("cons", ("nat", "list"), "list"),
        ),
        functions=(
            FunctionSym("plus", ("nat", "nat"), "nat", 0),
            FunctionSym("mult", ("nat", "nat"), "nat", 0),
            FunctionSym("append", ("list", "list"), "list", 0),
            FunctionSym("rev", ("list",), "list", 0),
            FunctionSym("length", ("list",), "nat", 0),
        ),
        equations=(
            Equation(Fun("plus", (Ctor("0"), v("y"))), v("y")),
            Equation(Fun("plus", (Ctor("S", (v("x"),)), v("y"))), Ctor("S", (Fun("plus", (v("x"), v("y"))),))),
            Equation(Fun("mult", (Ctor("0"), v("y"))), Ctor("0")),
            Equation(Fun("mult", (Ctor("S", (v("x"),)), v("y"))), Fun("plus", (v("y"), Fun("mult", (v("x"), v("y")))))),
            Equation(Fun("append", (Ctor("nil"), v("l"))), v("l")),
            Equation(
                Fun("append", (Ctor("cons", (v("h"), v("t"))), v("l"))),
                Ctor("cons", (v("h"), Fun("append", (v("t"), v("l"))))),
            ),
            Equation(Fun("rev", (Ctor("nil"),)), Ctor("nil")),
            Equation(
                Fun("rev", (Ctor("cons", (v("h"), v("t"))),)),
                Fun("append", (Fun("rev", (v("t"),)), Ctor("cons", (v("h"), Ctor("nil"))))),
            ),
            Equation(Fun("length", (Ctor("nil"),)), Ctor("0")),
            Equation(Fun("length", (Ctor("cons", (v("h"), v("t"))),)), Ctor("S", (Fun("length", (v("t"),)),))),
        ),
    )
    sig.validate()
    return sig
