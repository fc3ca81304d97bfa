"""Goals and proof states, with canonical serialization for change detection.

A goal is an equation to prove under ordered universal binders, a context of
already-introduced (fixed) variables, and named hypothesis equations. A proof
state is the ordered list of open goals; the empty state is solved.

Canonical serialization renames binders, fixed variables, and hypothesis
slots positionally before printing, so two states compare equal exactly when
they differ only in generated names.
"""

from __future__ import annotations

from dataclasses import dataclass

from .terms import Term, Var, free_vars, substitute, term_to_text


@dataclass(frozen=True)
class Hypothesis:
    name: str
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class Goal:
    lhs: Term
    rhs: Term
    binders: tuple[tuple[str, str], ...] = ()
    fixed: tuple[tuple[str, str], ...] = ()
    hypotheses: tuple[Hypothesis, ...] = ()

    def all_names(self) -> set[str]:
        names = {n for n, _ in self.binders} | {n for n, _ in self.fixed}
        names |= {h.name for h in self.hypotheses}
        names |= set(free_vars(self.lhs)) | set(free_vars(self.rhs))
        for h in self.hypotheses:
            names |= set(free_vars(h.lhs)) | set(free_vars(h.rhs))
        return names

    def var_sorts(self) -> dict[str, str]:
        return {**dict(self.fixed), **dict(self.binders)}


@dataclass(frozen=True)
class ProofState:
    goals: tuple[Goal, ...] = ()

    @property
    def solved(self) -> bool:
        return not self.goals


def goal_to_text(goal: Goal) -> str:
    """Display form with the original names; parseable when the goal has no
    fixed variables and no hypotheses."""
    parts: list[str] = []
    if goal.fixed:
        parts.append("fixed " + " ".join(f"({n} : {s})" for n, s in goal.fixed))
    for h in goal.hypotheses:
        parts.append(f"hyp {h.name} : {term_to_text(h.lhs)} = {term_to_text(h.rhs)}")
    concl = f"{term_to_text(goal.lhs)} = {term_to_text(goal.rhs)}"
    if goal.binders:
        concl = "forall " + " ".join(f"({n} : {s})" for n, s in goal.binders) + ", " + concl
    if parts:
        return "; ".join(parts) + " |- " + concl
    return concl


def state_to_text(state: ProofState) -> str:
    if state.solved:
        return "no open goals"
    lines = [f"{len(state.goals)} open goal(s)"]
    for i, g in enumerate(state.goals, 1):
        lines.append(f"goal {i}: {goal_to_text(g)}")
    return "\n".join(lines)


def canonical_goal_key(goal: Goal) -> str:
    rename: dict[str, Term] = {}
    fixed_parts = []
    for i, (name, sort) in enumerate(goal.fixed):
        rename[name] = Var(f"c{i}")
        fixed_parts.append(f"c{i}:{sort}")
    binder_parts = []
    for i, (name, sort) in enumerate(goal.binders):
        rename[name] = Var(f"b{i}")
        binder_parts.append(f"b{i}:{sort}")

    def show(t: Term) -> str:
        return term_to_text(substitute(t, rename))

    hyp_parts = [f"{show(h.lhs)} = {show(h.rhs)}" for h in goal.hypotheses]
    return (
        f"fix[{', '.join(fixed_parts)}]"
        f" hyp[{'; '.join(hyp_parts)}]"
        f" forall[{', '.join(binder_parts)}]"
        f" |- {show(goal.lhs)} = {show(goal.rhs)}"
    )


def canonical_state_key(state: ProofState) -> str:
    return " ;; ".join(canonical_goal_key(g) for g in state.goals)


def state_dump_text(state: ProofState) -> str:
    """Stable multi-line rendering used by state dumps in checker output."""
    lines = [f"open-goals {len(state.goals)}"]
    for i, g in enumerate(state.goals, 1):
        lines.append(f"goal {i}: {canonical_goal_key(g)}")
    return "\n".join(lines)


def goal_query_text(goal: Goal) -> str:
    """Flat text of binders, context, hypotheses, and conclusion for retrieval."""
    chunks: list[str] = []
    for name, sort in goal.binders:
        chunks += ["forall", name, sort]
    for name, sort in goal.fixed:
        chunks += [name, sort]
    for h in goal.hypotheses:
        chunks += [term_to_text(h.lhs), term_to_text(h.rhs)]
    chunks += [term_to_text(goal.lhs), term_to_text(goal.rhs)]
    return " ".join(chunks)
