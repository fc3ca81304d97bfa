"""Primitive tactics and the combinator language that composes them.

Primitives act on a single goal and return zero or more subgoals. Combinator
evaluation is goal-local: sequencing runs the second expression on every
subgoal of the first, alternation backtracks on failure, ``try`` absorbs
failure, ``repeat`` iterates until failure or a fixpoint, and goal matching
selects the first arm whose pattern fits. At the state level a tactic applies
to the first open goal; an evaluation that leaves the state structurally
unchanged reports no progress rather than progress.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .goals import Goal, Hypothesis, ProofState, canonical_goal_key, canonical_state_key
from .terms import (
    Ctor,
    Fun,
    KernelError,
    Signature,
    Term,
    Var,
    free_vars,
    normalize,
    substitute,
    term_to_text,
)

DEFAULT_EVAL_FUEL = 10_000
REPEAT_BOUND = 100

PRIMITIVE_NAMES = frozenset({"intros", "induction", "simpl", "rewrite", "reflexivity", "assumption"})


class TacticError(KernelError):
    """Recoverable tactic failure; alternation and ``try`` absorb these."""


class PrimitiveFailed(TacticError):
    """A primitive tactic was inapplicable to the goal."""


class MatchFailed(TacticError):
    pass


class UnknownTactic(TacticError):
    pass


class FuelExhausted(KernelError):
    """Hard evaluation bound; not absorbed by combinators."""


class KernelTimeout(KernelError):
    """Deadline exceeded during evaluation; escapes to the caller."""


# --- tactic expression AST -------------------------------------------------

@dataclass(frozen=True)
class TacticExpr:
    pass


@dataclass(frozen=True)
class Prim(TacticExpr):
    name: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class Seq(TacticExpr):
    first: TacticExpr
    second: TacticExpr


@dataclass(frozen=True)
class Alt(TacticExpr):
    left: TacticExpr
    right: TacticExpr


@dataclass(frozen=True)
class Try(TacticExpr):
    body: TacticExpr


@dataclass(frozen=True)
class Repeat(TacticExpr):
    body: TacticExpr


@dataclass(frozen=True)
class Call(TacticExpr):
    name: str


@dataclass(frozen=True)
class GoalPattern:
    pass


@dataclass(frozen=True)
class ForallOfSort(GoalPattern):
    sort: str


@dataclass(frozen=True)
class ConclusionHead(GoalPattern):
    symbol: str


@dataclass(frozen=True)
class HypothesisHead(GoalPattern):
    symbol: str


@dataclass(frozen=True)
class Wildcard(GoalPattern):
    pass


@dataclass(frozen=True)
class MatchArm:
    pattern: GoalPattern
    body: TacticExpr


@dataclass(frozen=True)
class MatchGoal(TacticExpr):
    arms: tuple[MatchArm, ...]


def collect_calls(expr: TacticExpr) -> set[str]:
    if isinstance(expr, Call):
        return {expr.name}
    if isinstance(expr, Seq):
        return collect_calls(expr.first) | collect_calls(expr.second)
    if isinstance(expr, Alt):
        return collect_calls(expr.left) | collect_calls(expr.right)
    if isinstance(expr, (Try, Repeat)):
        return collect_calls(expr.body)
    if isinstance(expr, MatchGoal):
        out: set[str] = set()
        for arm in expr.arms:
            out |= collect_calls(arm.body)
        return out
    return set()


def collect_patterns(expr: TacticExpr) -> list[GoalPattern]:
    if isinstance(expr, Seq):
        return collect_patterns(expr.first) + collect_patterns(expr.second)
    if isinstance(expr, Alt):
        return collect_patterns(expr.left) + collect_patterns(expr.right)
    if isinstance(expr, (Try, Repeat)):
        return collect_patterns(expr.body)
    if isinstance(expr, MatchGoal):
        out: list[GoalPattern] = []
        for arm in expr.arms:
            out.append(arm.pattern)
            out.extend(collect_patterns(arm.body))
        return out
    return []


# --- primitives ------------------------------------------------------------

def _fresh_name(base: str, used: set[str]) -> str:
    i = 0
    while f"{base}{i}" in used:
        i += 1
    name = f"{base}{i}"
    used.add(name)
    return name


def _intros(goal: Goal) -> Goal:
    if not goal.binders:
        return goal
    return Goal(
        lhs=goal.lhs,
        rhs=goal.rhs,
        binders=(),
        fixed=goal.fixed + goal.binders,
        hypotheses=goal.hypotheses,
    )


def _head_symbol(t: Term) -> str | None:
    if isinstance(t, Var):
        return None
    return t.name


def _induction(args: tuple[str, ...], goal: Goal, sig: Signature) -> list[Goal]:
    if args:
        target = args[0]
    elif goal.binders:
        target = goal.binders[0][0]
    else:
        raise PrimitiveFailed("induction: no quantified variable to induct on")
    # Induction works on introduced variables; introduce everything first so
    # the induction hypotheses stay plain equations.
    goal = _intros(goal)
    fixed = dict(goal.fixed)
    sort = fixed.get(target)
    if sort is None:
        raise PrimitiveFailed(f"induction: unknown variable {target!r}")
    ctors = sig.constructors_of(sort)
    if not ctors:
        raise PrimitiveFailed(f"induction: sort {sort!r} has no constructors")
    for h in goal.hypotheses:
        if target in free_vars(h.lhs) | free_vars(h.rhs):
            raise PrimitiveFailed(f"induction: {target!r} is constrained by hypothesis {h.name}")

    target_pos = next(i for i, (n, _) in enumerate(goal.fixed) if n == target)
    subgoals: list[Goal] = []
    for ctor in ctors:
        used = goal.all_names()
        fresh: list[tuple[str, str]] = []
        for arg_sort in ctor.arg_sorts:
            fresh.append((_fresh_name(arg_sort[0], used), arg_sort))
        ctor_term = Ctor(ctor.name, tuple(Var(n) for n, _ in fresh))
        new_fixed = goal.fixed[:target_pos] + tuple(fresh) + goal.fixed[target_pos + 1 :]
        hyps = list(goal.hypotheses)
        for name, arg_sort in fresh:
            if arg_sort == sort:
                ih_sub = {target: Var(name)}
                hyps.append(
                    Hypothesis(
                        _ih_name(used),
                        substitute(goal.lhs, ih_sub),
                        substitute(goal.rhs, ih_sub),
                    )
                )
        sub = {target: ctor_term}
        subgoals.append(
            Goal(
                lhs=substitute(goal.lhs, sub),
                rhs=substitute(goal.rhs, sub),
                binders=(),
                fixed=new_fixed,
                hypotheses=tuple(hyps),
            )
        )
    return subgoals


def _ih_name(used: set[str]) -> str:
    if "IH" not in used:
        used.add("IH")
        return "IH"
    return _fresh_name("IH", used)


def _simpl(goal: Goal, sig: Signature) -> Goal:
    return Goal(
        lhs=normalize(goal.lhs, sig),
        rhs=normalize(goal.rhs, sig),
        binders=goal.binders,
        fixed=goal.fixed,
        hypotheses=tuple(
            Hypothesis(h.name, normalize(h.lhs, sig), normalize(h.rhs, sig)) for h in goal.hypotheses
        ),
    )


def _replace_first(t: Term, target: Term, replacement: Term) -> tuple[Term, bool]:
    if t == target:
        return replacement, True
    if isinstance(t, Var):
        return t, False
    new_args: list[Term] = []
    done = False
    for a in t.args:
        if done:
            new_args.append(a)
        else:
            na, done = _replace_first(a, target, replacement)
            new_args.append(na)
    if isinstance(t, Ctor):
        return Ctor(t.name, tuple(new_args)), done
    return Fun(t.name, tuple(new_args)), done


def _rewrite_with(goal: Goal, hyp: Hypothesis) -> Goal | None:
    new_lhs, done = _replace_first(goal.lhs, hyp.lhs, hyp.rhs)
    if done:
        return Goal(new_lhs, goal.rhs, goal.binders, goal.fixed, goal.hypotheses)
    new_rhs, done = _replace_first(goal.rhs, hyp.lhs, hyp.rhs)
    if done:
        return Goal(goal.lhs, new_rhs, goal.binders, goal.fixed, goal.hypotheses)
    return None


def _rewrite(args: tuple[str, ...], goal: Goal, sig: Signature) -> Goal:
    if args:
        name = args[0]
        hyp = next((h for h in goal.hypotheses if h.name == name), None)
        if hyp is None:
            raise PrimitiveFailed(f"rewrite: no hypothesis named {name!r}")
        rewritten = _rewrite_with(goal, hyp)
        if rewritten is None:
            raise PrimitiveFailed(f"rewrite: {term_to_text(hyp.lhs)} does not occur in the conclusion")
        return rewritten
    for hyp in goal.hypotheses:
        rewritten = _rewrite_with(goal, hyp)
        if rewritten is not None:
            return rewritten
    raise PrimitiveFailed("rewrite: no hypothesis equation matches the conclusion")


def _reflexivity(goal: Goal, sig: Signature) -> list[Goal]:
    lhs = normalize(goal.lhs, sig)
    rhs = normalize(goal.rhs, sig)
    if lhs == rhs:
        return []
    raise PrimitiveFailed(
        f"reflexivity: normal forms differ: {term_to_text(lhs)} vs {term_to_text(rhs)}"
    )


def _assumption(goal: Goal, sig: Signature) -> list[Goal]:
    lhs = normalize(goal.lhs, sig)
    rhs = normalize(goal.rhs, sig)
    for h in goal.hypotheses:
        if normalize(h.lhs, sig) == lhs and normalize(h.rhs, sig) == rhs:
            return []
    raise PrimitiveFailed("assumption: no hypothesis matches the conclusion")


def apply_primitive(name: str, args: tuple[str, ...], goal: Goal, sig: Signature) -> list[Goal]:
    """Apply one primitive to one goal; raises PrimitiveFailed when inapplicable."""
    if name == "intros":
        return [_intros(goal)]
    if name == "induction":
        return _induction(args, goal, sig)
    if name == "simpl":
        return [_simpl(goal, sig)]
    if name == "rewrite":
        return [_rewrite(args, goal, sig)]
    if name == "reflexivity":
        return _reflexivity(goal, sig)
    if name == "assumption":
        return _assumption(goal, sig)
    raise PrimitiveFailed(f"unknown primitive {name!r}")


# --- combinator evaluation ---------------------------------------------------

class _Budget:
    __slots__ = ("remaining", "deadline")

    def __init__(self, fuel: int, deadline: float | None):
        self.remaining = fuel
        self.deadline = deadline

    def spend(self) -> None:
        if self.deadline is not None and time.monotonic() >= self.deadline:
            raise KernelTimeout("tactic evaluation exceeded its deadline")
        self.remaining -= 1
        if self.remaining < 0:
            raise FuelExhausted("tactic evaluation exceeded its fuel bound")


def _pattern_matches(pattern: GoalPattern, goal: Goal) -> bool:
    if isinstance(pattern, Wildcard):
        return True
    if isinstance(pattern, ForallOfSort):
        return bool(goal.binders) and goal.binders[0][1] == pattern.sort
    if isinstance(pattern, ConclusionHead):
        return pattern.symbol in (_head_symbol(goal.lhs), _head_symbol(goal.rhs))
    if isinstance(pattern, HypothesisHead):
        return any(
            pattern.symbol in (_head_symbol(h.lhs), _head_symbol(h.rhs)) for h in goal.hypotheses
        )
    raise TypeError(f"unknown pattern {pattern!r}")


def _run(
    expr: TacticExpr,
    goal: Goal,
    env: dict[str, TacticExpr],
    sig: Signature,
    budget: _Budget,
) -> tuple[Goal, ...]:
    if isinstance(expr, Prim):
        budget.spend()
        return tuple(apply_primitive(expr.name, expr.args, goal, sig))
    if isinstance(expr, Seq):
        out: list[Goal] = []
        for g in _run(expr.first, goal, env, sig, budget):
            out.extend(_run(expr.second, g, env, sig, budget))
        return tuple(out)
    if isinstance(expr, Alt):
        try:
            return _run(expr.left, goal, env, sig, budget)
        except TacticError:
            return _run(expr.right, goal, env, sig, budget)
    if isinstance(expr, Try):
        try:
            return _run(expr.body, goal, env, sig, budget)
        except TacticError:
            return (goal,)
    if isinstance(expr, Repeat):
        return _repeat(expr.body, goal, env, sig, budget, [REPEAT_BOUND])
    if isinstance(expr, MatchGoal):
        for arm in expr.arms:
            if _pattern_matches(arm.pattern, goal):
                return _run(arm.body, goal, env, sig, budget)
        raise MatchFailed("match goal: no arm matches the current goal")
    if isinstance(expr, Call):
        budget.spend()
        target = env.get(expr.name)
        if target is None:
            raise UnknownTactic(f"unknown tactic {expr.name!r}")
        return _run(target, goal, env, sig, budget)
    raise TypeError(f"unknown tactic expression {expr!r}")


def _repeat(
    body: TacticExpr,
    goal: Goal,
    env: dict[str, TacticExpr],
    sig: Signature,
    budget: _Budget,
    iterations: list[int],
) -> tuple[Goal, ...]:
    if iterations[0] <= 0:
        return (goal,)
    iterations[0] -= 1
    try:
        subgoals = _run(body, goal, env, sig, budget)
    except TacticError:
        return (goal,)
    if len(subgoals) == 1 and canonical_goal_key(subgoals[0]) == canonical_goal_key(goal):
        return (goal,)
    out: list[Goal] = []
    for g in subgoals:
        out.extend(_repeat(body, g, env, sig, budget, iterations))
    return tuple(out)


@dataclass(frozen=True)
class Progress:
    state: ProofState


@dataclass(frozen=True)
class NoProgress:
    pass


@dataclass(frozen=True)
class Failure:
    message: str


TacticOutcome = Progress | NoProgress | Failure


def eval_tactic(
    expr: TacticExpr,
    state: ProofState,
    env: dict[str, TacticExpr],
    sig: Signature,
    fuel: int = DEFAULT_EVAL_FUEL,
    deadline: float | None = None,
) -> TacticOutcome:
    """Evaluate a tactic expression against the first open goal of ``state``.

    Fuel exhaustion reports as Failure; an exceeded ``deadline`` raises
    KernelTimeout for the caller to classify.
    """
    if not state.goals:
        return Failure("no open goals to act on")
    budget = _Budget(fuel, deadline)
    try:
        produced = _run(expr, state.goals[0], env, sig, budget)
    except TacticError as exc:
        return Failure(str(exc))
    except FuelExhausted as exc:
        return Failure(str(exc))
    new_state = ProofState(tuple(produced) + state.goals[1:])
    if canonical_state_key(new_state) == canonical_state_key(state):
        return NoProgress()
    return Progress(new_state)


@dataclass(frozen=True)
class CheckResult:
    accepted: bool
    error: str | None = None


def check_proof(theorem, script, env, sig, fuel: int = DEFAULT_EVAL_FUEL) -> CheckResult:
    """Replay a script against a theorem; accepted means zero goals remain.

    ``theorem`` may be a Goal, a statement string, or any record with a
    ``parsed_goal``/``statement`` attribute. Script steps may be expressions
    or step strings. Never raises; failures come back in the result.
    """
    from . import parser as _parser

    goal: Goal | None = None
    if isinstance(theorem, Goal):
        goal = theorem
    else:
        goal = getattr(theorem, "parsed_goal", None)
        if goal is None:
            statement = theorem if isinstance(theorem, str) else getattr(theorem, "statement", None)
            if statement is None:
                return CheckResult(False, "theorem carries no goal or statement")
            try:
                goal = _parser.parse_goal(statement, sig)
            except KernelError as exc:
                return CheckResult(False, f"statement does not parse: {exc}")

    state = ProofState((goal,))
    for i, step in enumerate(script, 1):
        if isinstance(step, str):
            try:
                expr = _parser.parse_tactic_expr(step)
            except KernelError as exc:
                return CheckResult(False, f"step {i} does not parse: {exc}")
        else:
            expr = step
        outcome = eval_tactic(expr, state, env, sig, fuel=fuel)
        if isinstance(outcome, Failure):
            return CheckResult(False, f"step {i} failed: {outcome.message}")
        if isinstance(outcome, Progress):
            state = outcome.state
    if state.solved:
        return CheckResult(True)
    return CheckResult(False, f"{len(state.goals)} open goal(s) remain")
