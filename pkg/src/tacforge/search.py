"""And-Or tree proof search alternating an automated-prover hook with
retrieved-tactic application.

Each goal is an Or-node, solved when the hook closes it directly or when any
tactic application (an And-node) has all of its subgoals solved. The queue
discipline is breadth-first, tactics are tried in retrieval order, and solved
flags propagate upward until a flag stops changing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

from .kernel import (
    Failure,
    Goal,
    Progress,
    ProofState,
    Signature,
    TacticExpr,
    canonical_goal_key,
    default_signature,
    eval_tactic,
    goal_query_text,
    parse_tactic_expr,
)
from .retrieval import TacticIndex, get_tactics, retrieve_theorems

TraceFn = Callable[[dict], None]


@dataclass
class SearchConfig:
    k: int = 20
    atp_timeout: float | None = 20.0
    total_timeout: float | None = 600.0
    depth_cap: int = 5
    dedup_open_goals: bool = True

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        for name in ("atp_timeout", "total_timeout"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SearchStats:
    nodes_expanded: int = 0
    atp_calls: int = 0
    tactic_applications: int = 0
    wall_time: float = 0.0


class OrNode:
    """One open goal; solved when the hook closed it or some child is solved."""

    __slots__ = ("goal", "depth", "parent", "children", "solved", "atp_closed", "atp_step", "dedup_of", "followers")

    def __init__(self, goal: Goal, depth: int, parent: "AndNode | None"):
        self.goal = goal
        self.depth = depth
        self.parent = parent
        self.children: list[AndNode] = []
        self.solved = False
        self.atp_closed = False
        self.atp_step: str | None = None
        self.dedup_of: OrNode | None = None
        self.followers: list[OrNode] = []


class AndNode:
    """One tactic application; solved when every resulting subgoal is solved,
    vacuously when the tactic closed the goal outright."""

    __slots__ = ("unit_id", "parent", "children", "solved")

    def __init__(self, unit_id: str, parent: OrNode):
        self.unit_id = unit_id
        self.parent = parent
        self.children: list[OrNode] = []
        self.solved = False


@dataclass
class SearchResult:
    solved: bool
    tree: OrNode
    proof_script: list[str] | None
    stats: SearchStats


def propagate(node: OrNode | AndNode, trace: TraceFn | None = None) -> None:
    """Walk upward from a node that just became solved, updating ancestors and
    stopping at the first flag that does not change. Solved Or-nodes also
    release any duplicate goals that share their verdict."""
    pending: list[OrNode | AndNode] = [node]
    while pending:
        current = pending.pop()
        if isinstance(current, OrNode):
            for follower in current.followers:
                if not follower.solved:
                    follower.solved = True
                    pending.append(follower)
        parent = current.parent
        if parent is None or parent.solved:
            continue
        if isinstance(parent, AndNode):
            flips = all(child.solved for child in parent.children)
        else:
            flips = parent.atp_closed or any(child.solved for child in parent.children)
        if flips:
            parent.solved = True
            if trace is not None:
                trace({"event": "propagated", "node": type(parent).__name__, "solved": True})
            pending.append(parent)


class KernelAtp:
    """Hook that tries one fixed finisher script against the goal.

    Returns the finisher text when it closes the goal, so a reconstructed
    proof can replay the closing step verbatim.
    """

    def __init__(
        self,
        sig: Signature | None = None,
        env: dict[str, TacticExpr] | None = None,
        finisher: str = "intros; simpl; (assumption || reflexivity)",
    ):
        self.sig = sig or default_signature()
        self.env = dict(env or {})
        self.finisher = finisher
        self._expr = parse_tactic_expr(finisher)

    def __call__(self, goal: Goal, timeout: float | None = None) -> str | None:
        from .kernel import KernelError

        deadline = time.monotonic() + timeout if timeout is not None else None
        try:
            outcome = eval_tactic(self._expr, ProofState((goal,)), self.env, self.sig, deadline=deadline)
        except KernelError:
            return None
        if isinstance(outcome, Progress) and outcome.state.solved:
            return self.finisher
        return None


def apply_tactic(unit_id: str, goal: Goal, bridge, timeout: float | None = None):
    """Fire one loaded tactic against a single-goal state; the bridge reports
    progress with subgoals, no progress, or failure (timeouts fail)."""
    return bridge.apply_tactic(unit_id, goal, timeout)


def solve(
    goal: Goal,
    index: TacticIndex,
    atp,
    bridge,
    cfg: SearchConfig | None = None,
    trace: TraceFn | None = None,
) -> SearchResult:
    """Breadth-first And-Or search from one goal.

    Every dequeued goal first goes to the hook; only if that fails are the
    top-k source theorems retrieved and their tactics applied in retrieval
    order. Applications that fail or change nothing create no node; an
    application with zero subgoals propagates immediately. The loop stops on
    a solved root, an empty queue, the total timeout, or the depth cap.
    """
    cfg = cfg or SearchConfig()
    start = time.perf_counter()
    deadline = start + cfg.total_timeout if cfg.total_timeout is not None else None
    stats = SearchStats()
    root = OrNode(goal, 0, None)
    queue: list[OrNode] = [root]
    head = 0
    # dedup is keyed on (goal, depth): a duplicate at the same depth is the
    # same subproblem with the same remaining budget, so sharing its verdict
    # can never change what a duplicate-free search would decide
    expanded: dict[tuple[str, int], OrNode] = {}

    while head < len(queue) and not root.solved:
        if deadline is not None and time.perf_counter() > deadline:
            break
        node = queue[head]
        head += 1
        if node.solved:
            continue
        key = canonical_goal_key(node.goal)
        if cfg.dedup_open_goals:
            representative = expanded.get((key, node.depth))
            if representative is not None:
                node.dedup_of = representative
                if trace is not None:
                    trace({"event": "nodeExpanded", "goal": key, "depth": node.depth, "dedup": True})
                if representative.solved:
                    node.solved = True
                    propagate(node, trace)
                else:
                    representative.followers.append(node)
                continue
            expanded[(key, node.depth)] = node
        stats.nodes_expanded += 1
        if trace is not None:
            trace({"event": "nodeExpanded", "goal": key, "depth": node.depth})

        stats.atp_calls += 1
        closing = atp(node.goal, cfg.atp_timeout)
        if trace is not None:
            trace({"event": "atpCall", "goal": key, "closed": closing is not None})
        if closing is not None:
            node.atp_closed = True
            node.atp_step = closing
            node.solved = True
            propagate(node, trace)
            continue

        if node.depth >= cfg.depth_cap:
            continue
        theorem_ids = retrieve_theorems(goal_query_text(node.goal), cfg.k, index)
        unit_ids = get_tactics(theorem_ids, index)
        for unit_id in unit_ids:
            stats.tactic_applications += 1
            result = bridge.apply_tactic(unit_id, node.goal, cfg.atp_timeout)
            if trace is not None:
                trace(
                    {
                        "event": "tacticApplied",
                        "goal": key,
                        "unit": unit_id,
                        "result": result.kind,
                        "subgoals": len(result.subgoals),
                    }
                )
            if result.kind != "progress":
                continue
            and_node = AndNode(unit_id, node)
            node.children.append(and_node)
            if not result.subgoals:
                # the batch still finishes even if this solves the root;
                # the while-guard stops expansion at the top of the loop
                and_node.solved = True
                propagate(and_node, trace)
            else:
                for subgoal in result.subgoals:
                    child = OrNode(subgoal, node.depth + 1, and_node)
                    and_node.children.append(child)
                    queue.append(child)

    stats.wall_time = time.perf_counter() - start
    script = reconstruct_script(root, bridge) if root.solved else None
    return SearchResult(root.solved, root, script, stats)


def reconstruct_script(root: OrNode, bridge) -> list[str]:
    """Preorder walk of the solved subtree: the tactic invocation at each
    And-node, the hook's closing step at hook-closed leaves."""

    def walk(node: OrNode) -> list[str]:
        if node.atp_closed:
            return [node.atp_step or ""]
        if node.dedup_of is not None and not any(c.solved for c in node.children):
            return walk(node.dedup_of)
        for and_node in node.children:
            if and_node.solved:
                steps = [bridge.invocation_name(and_node.unit_id)]
                for child in and_node.children:
                    steps.extend(walk(child))
                return steps
        raise ValueError("node is marked solved but no solved child exists")

    return walk(root)


def audit_tree(root: OrNode) -> list[str]:
    """Check the solved-flag invariants over a finished tree; returns a list
    of violation descriptions, empty when the tree is consistent."""
    violations: list[str] = []
    stack: list[OrNode | AndNode] = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, OrNode):
            expected = (
                node.atp_closed
                or any(c.solved for c in node.children)
                or (node.dedup_of is not None and node.dedup_of.solved)
            )
            if node.solved != expected:
                violations.append(
                    f"or-node {canonical_goal_key(node.goal)!r}: solved={node.solved}, expected={expected}"
                )
            stack.extend(node.children)
        else:
            expected = all(c.solved for c in node.children)
            if node.solved != expected:
                violations.append(f"and-node {node.unit_id!r}: solved={node.solved}, expected={expected}")
            stack.extend(node.children)
    return violations


def tree_size(root: OrNode) -> tuple[int, int]:
    """(or_nodes, and_nodes) in the tree."""
    or_count = 0
    and_count = 0
    stack: list[OrNode | AndNode] = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, OrNode):
            or_count += 1
        else:
            and_count += 1
        stack.extend(node.children)
    return or_count, and_count
