"""A small deterministic proof kernel: inductive naturals and lists, equational
goals, primitive tactics, and a combinator language to compose them."""

from .terms import (
    Constructor,
    Ctor,
    Equation,
    Fun,
    FunctionSym,
    KernelError,
    Signature,
    Term,
    UnboundVariable,
    Var,
    default_signature,
    free_vars,
    ground_eval,
    is_ground_constructor_term,
    list_term,
    nat_term,
    normalize,
    substitute,
    term_to_text,
)
from .goals import (
    Goal,
    Hypothesis,
    ProofState,
    canonical_goal_key,
    canonical_state_key,
    goal_query_text,
    goal_to_text,
    state_dump_text,
    state_to_text,
)
from .tactics import (
    Alt,
    Call,
    CheckResult,
    ConclusionHead,
    DEFAULT_EVAL_FUEL,
    Failure,
    ForallOfSort,
    FuelExhausted,
    GoalPattern,
    HypothesisHead,
    KernelTimeout,
    MatchArm,
    MatchGoal,
    NoProgress,
    PRIMITIVE_NAMES,
    Prim,
    PrimitiveFailed,
    Progress,
    REPEAT_BOUND,
    Repeat,
    Seq,
    TacticError,
    TacticExpr,
    TacticOutcome,
    Try,
    Wildcard,
    apply_primitive,
    check_proof,
    collect_calls,
    eval_tactic,
)
from .parser import (
    ParseError,
    TacticDefinition,
    TacticSource,
    UnresolvedName,
    compile_source_text,
    goal_from_json,
    goal_to_json,
    parse_goal,
    parse_source,
    parse_tactic_expr,
    parse_term,
    pattern_to_text,
    render_definition,
    source_environment,
    split_steps,
    tactic_to_text,
)

__all__ = [name for name in dir() if not name.startswith("_")]
