"""Command-line wrapper around the embedded kernel.

Reads a line-oriented script and interprets it against the kernel, so the
subprocess checker path exercises exactly the same semantics as the
in-process binding. A script without a goal is treated as a tactic source
and compile-checked instead.

Script commands:

    import NAME           accepted and ignored (the signature is fixed)
    tactic NAME := EXPR   define a tactic for later steps
    goal STATEMENT        start proving the statement
    step EXPR             run one proof step; failure is a replay error
    dump NONCE            print the state between unique marker lines
    load UNIT_ID          load <UNIT_ID>.tac from the plugin directory
    invoke NAME           fire a loaded tactic once; failure is an error
    loadgoal JSON         install a serialized goal as the proof state
    applyjson NAME NONCE  fire a tactic and print resulting goals as JSON

Exit status: 0 success, 1 tactic or compile error, 2 usage, 3 replay error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .kernel import (
    Call,
    Failure,
    KernelError,
    NoProgress,
    Progress,
    ProofState,
    compile_source_text,
    default_signature,
    eval_tactic,
    goal_from_json,
    goal_to_json,
    parse_goal,
    parse_source,
    parse_tactic_expr,
    state_dump_text,
)
from .bridge import GOALS_BEGIN, GOALS_END, MARKER_BEGIN, MARKER_END


def _script_lines(text: str) -> list[str]:
    return [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]


def _is_compile_only(lines: list[str]) -> bool:
    return not any(line.split(None, 1)[0] in ("goal", "loadgoal") for line in lines)


def run_script(text: str, plugin_dir: Path, out=sys.stdout) -> int:
    sig = default_signature()
    lines = _script_lines(text)

    if _is_compile_only(lines):
        try:
            compile_source_text(text, sig)
        except KernelError as exc:
            print(f"Error: {exc}", file=out)
            return 1
        print("compiled ok", file=out)
        return 0

    env = {}
    state: ProofState | None = None
    for line in lines:
        command, _, rest = line.strip().partition(" ")
        rest = rest.strip()
        try:
            if command == "import":
                continue
            if command == "tactic":
                src = parse_source(line.strip())
                env.update({d.name: d.body for d in src.definitions})
            elif command == "goal":
                state = ProofState((parse_goal(rest, sig),))
            elif command == "loadgoal":
                state = ProofState((goal_from_json(json.loads(rest), sig),))
            elif command == "step":
                if state is None:
                    print("ReplayError: step before any goal", file=out)
                    return 3
                outcome = eval_tactic(parse_tactic_expr(rest), state, env, sig)
                if isinstance(outcome, Failure):
                    print(f"ReplayError: {outcome.message}", file=out)
                    return 3
                if isinstance(outcome, Progress):
                    state = outcome.state
            elif command == "dump":
                if state is None:
                    print("ReplayError: dump before any goal", file=out)
                    return 3
                print(MARKER_BEGIN.format(nonce=rest), file=out)
                print(state_dump_text(state), file=out)
                print(MARKER_END.format(nonce=rest), file=out)
            elif command == "load":
                plugin_path = plugin_dir / f"{rest}.tac"
                if not plugin_path.is_file():
                    print(f"Error: plugin {rest!r} not found in {plugin_dir}", file=out)
                    return 1
                src = parse_source(plugin_path.read_text(encoding="utf-8"))
                env.update({d.name: d.body for d in src.definitions})
            elif command == "invoke":
                if state is None:
                    print("ReplayError: invoke before any goal", file=out)
                    return 3
                if state.solved:
                    print("ReplayError: no open goals at the insertion point", file=out)
                    return 3
                outcome = eval_tactic(Call(rest), state, env, sig)
                if isinstance(outcome, Failure):
                    print(f"Error: {outcome.message}", file=out)
                    return 1
                if isinstance(outcome, Progress):
                    state = outcome.state
            elif command == "applyjson":
                name, _, nonce = rest.partition(" ")
                nonce = nonce.strip()
                if state is None:
                    print("ReplayError: applyjson before any goal", file=out)
                    return 3
                outcome = eval_tactic(Call(name), state, env, sig)
                if isinstance(outcome, Failure):
                    payload = {"kind": "failure", "message": outcome.message}
                elif isinstance(outcome, NoProgress):
                    payload = {"kind": "noprogress"}
                else:
                    payload = {
                        "kind": "progress",
                        "subgoals": [goal_to_json(g) for g in outcome.state.goals],
                    }
                print(GOALS_BEGIN.format(nonce=nonce), file=out)
                print(json.dumps(payload, sort_keys=True), file=out)
                print(GOALS_END.format(nonce=nonce), file=out)
            else:
                print(f"Error: unknown command {command!r}", file=out)
                return 1
        except KernelError as exc:
            if command in ("goal", "step", "loadgoal", "tactic", "import"):
                print(f"ReplayError: {exc}", file=out)
                return 3
            print(f"Error: {exc}", file=out)
            return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="tacforge-kernel", description=__doc__.splitlines()[0])
    ap.add_argument("script", help="script file path, or - for stdin")
    ap.add_argument(
        "--plugin-dir",
        default=None,
        help="directory holding <unit_id>.tac plugin files "
        "(default: $TACFORGE_PLUGIN_DIR, then the script's directory)",
    )
    args = ap.parse_args(argv)

    if args.script == "-":
        text = sys.stdin.read()
        base_dir = Path.cwd()
    else:
        script_path = Path(args.script)
        if not script_path.is_file():
            print(f"usage error: no such script {args.script!r}", file=sys.stderr)
            return 2
        text = script_path.read_text(encoding="utf-8")
        base_dir = script_path.parent
    plugin_dir = Path(args.plugin_dir or os.environ.get("TACFORGE_PLUGIN_DIR") or base_dir)
    return run_script(text, plugin_dir)


if __name__ == "__main__":
    raise SystemExit(main())
