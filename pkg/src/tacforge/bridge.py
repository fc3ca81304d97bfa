"""The boundary to proof checkers.

Two interchangeable backends sit behind one checker interface: an in-process
binding to the embedded kernel, and a subprocess driver for an external
command-line checker. Trial scripts replay a theorem to an insertion point,
dump the proof state between unique marker lines, fire the tactic under test,
and dump again; the two dumps decide whether the tactic changed anything.
"""

from __future__ import annotations

import json
import os
import re
import shlex
import subprocess
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

from .corpus import TheoremRecord
from .kernel import (
    Call,
    Failure,
    Goal,
    KernelError,
    KernelTimeout,
    NoProgress,
    Progress,
    ProofState,
    Signature,
    TacticExpr,
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
from .validate import PluginArtifact, TrialOutcome, TrialStatus

MARKER_BEGIN = "==TF-STATE-{nonce}-BEGIN=="
MARKER_END = "==TF-STATE-{nonce}-END=="
GOALS_BEGIN = "==TF-GOALS-{nonce}-BEGIN=="
GOALS_END = "==TF-GOALS-{nonce}-END=="

TIMEOUT_GRACE_SECONDS = 1.0
KERNEL_TRIAL_TIMEOUT = 2.0
EXTERNAL_TRIAL_TIMEOUT = 20.0


class MissingMarker(Exception):
    pass


class SpawnError(Exception):
    pass


class RenderError(Exception):
    pass


class CheckerStatus(str, Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class CheckerOutcome:
    status: CheckerStatus
    error_text: str = ""
    wall_time: float = 0.0
    raw_output: str = ""

    @property
    def accepted(self) -> bool:
        return self.status is CheckerStatus.ACCEPTED


@dataclass(frozen=True)
class TrialScript:
    rendered_text: str


def render_trial_script(thm: TheoremRecord, pos: int, artifact: PluginArtifact, nonce: str) -> TrialScript:
    """Deterministic script: prelude, theorem goal, steps up to the position,
    a state dump, the plugin load plus invocation, and a second dump."""
    steps = thm.proof_steps
    if not 1 <= pos <= len(steps) - 1:
        raise RenderError(f"position {pos} is out of range for {len(steps)} proof steps")
    lines = [f"# trial {thm.id} @ {pos}"]
    lines.extend(thm.prelude)
    lines.append(f"goal {thm.statement}")
    lines.extend(f"step {s}" for s in steps[:pos])
    lines.append(f"dump {nonce}")
    lines.append(artifact.load_directive)
    lines.append(f"invoke {artifact.tactic_name}")
    lines.append(f"dump {nonce}")
    return TrialScript("\n".join(lines) + "\n")


def run_checker(
    cmd_template: str,
    script: TrialScript | str,
    timeout: float,
    extra_env: Mapping[str, str] | None = None,
) -> CheckerOutcome:
    """Run an external checker over a script file.

    Exit status 0 is the whole success contract. The template must contain a
    ``{script}`` placeholder for the script file path.
    """
    if "{script}" not in cmd_template:
        raise SpawnError("checker command template is missing the {script} placeholder")
    text = script.rendered_text if isinstance(script, TrialScript) else script
    with tempfile.NamedTemporaryFile(
        "w", suffix=".tfs", prefix="tacforge-", delete=False, encoding="utf-8"
    ) as fh:
        fh.write(text)
        script_path = fh.name
    argv = [tok.replace("{script}", script_path) for tok in shlex.split(cmd_template)]
    env = dict(os.environ)
    if extra_env:
        env.update(extra_env)
    start = time.perf_counter()
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=timeout, env=env
        )
    except subprocess.TimeoutExpired as exc:
        wall = time.perf_counter() - start
        raw = (exc.stdout or "") + (exc.stderr or "")
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", "replace")
        return CheckerOutcome(CheckerStatus.TIMED_OUT, "checker timed out", wall, raw)
    except (FileNotFoundError, PermissionError, NotADirectoryError) as exc:
        raise SpawnError(f"cannot start checker {argv[0]!r}: {exc}") from exc
    finally:
        try:
            os.unlink(script_path)
        except OSError:
            pass
    wall = time.perf_counter() - start
    raw = proc.stdout + proc.stderr
    if proc.returncode == 0:
        return CheckerOutcome(CheckerStatus.ACCEPTED, "", wall, raw)
    diagnostic = (proc.stderr or proc.stdout).strip() or f"exit status {proc.returncode}"
    return CheckerOutcome(CheckerStatus.REJECTED, diagnostic, wall, raw)


_ANY_BEGIN_RE = re.compile(r"==TF-STATE-([0-9A-Za-z]+)-BEGIN==")


def _normalize_dump(text: str) -> str:
    return " ".join(text.split())


def extract_dumps(output: str, nonce: str) -> list[str]:
    """All marked dump bodies in the output, in order. A BEGIN marker without
    its END raises MissingMarker."""
    begin = MARKER_BEGIN.format(nonce=nonce)
    end = MARKER_END.format(nonce=nonce)
    bodies = []
    pos = 0
    while True:
        i = output.find(begin, pos)
        if i == -1:
            break
        j = output.find(end, i + len(begin))
        if j == -1:
            raise MissingMarker(f"dump opened at offset {i} has no end marker")
        bodies.append(output[i + len(begin) : j])
        pos = j + len(end)
    return bodies


def diff_states(dump_before: str, dump_after: str) -> bool:
    """True when the two marked dumps differ after whitespace normalization.

    Each argument must contain one marked dump block; a missing marker raises
    MissingMarker (the checker died before printing the dump).
    """
    bodies = []
    for chunk in (dump_before, dump_after):
        m = _ANY_BEGIN_RE.search(chunk)
        if m is None:
            raise MissingMarker("no state dump marker in checker output")
        extracted = extract_dumps(chunk, m.group(1))
        if not extracted:
            raise MissingMarker("no complete state dump in checker output")
        bodies.append(extracted[0])
    return _normalize_dump(bodies[0]) != _normalize_dump(bodies[1])


# --- in-process backend --------------------------------------------------------


@dataclass(frozen=True)
class ApplyResult:
    kind: str  # "progress" | "noprogress" | "failure"
    subgoals: tuple[Goal, ...] = ()
    message: str = ""


def _prelude_environment(prelude: tuple[str, ...], sig: Signature) -> dict[str, TacticExpr]:
    src = parse_source("\n".join(prelude))
    return {d.name: d.body for d in src.definitions}


class KernelBridge:
    """Checker interface bound directly to the embedded kernel.

    Every call is logged to ``calls`` so tests can assert exact interaction
    counts (for example the compile budget of the repair loop).
    """

    def __init__(
        self,
        sig: Signature | None = None,
        trial_timeout: float = KERNEL_TRIAL_TIMEOUT,
        base_env: Mapping[str, TacticExpr] | None = None,
    ):
        self.sig = sig or default_signature()
        self.trial_timeout = trial_timeout
        self.base_env = dict(base_env or {})
        self.calls: list[tuple[str, str]] = []
        self._artifacts: dict[str, PluginArtifact] = {}
        self._artifact_envs: dict[str, dict[str, TacticExpr]] = {}
        self._lock = threading.Lock()

    def _log(self, op: str, subject: str) -> None:
        with self._lock:
            self.calls.append((op, subject))

    # -- validity ------------------------------------------------------

    def compile_source(self, source: str) -> CheckerOutcome:
        self._log("compile", source.splitlines()[0] if source.strip() else "<empty>")
        start = time.perf_counter()
        try:
            compile_source_text(source, self.sig)
        except KernelError as exc:
            return CheckerOutcome(CheckerStatus.REJECTED, str(exc), time.perf_counter() - start, str(exc))
        return CheckerOutcome(CheckerStatus.ACCEPTED, "", time.perf_counter() - start, "")

    # -- artifacts -----------------------------------------------------

    def load_artifact(self, artifact: PluginArtifact) -> None:
        src = parse_source(artifact.rendered_source)
        with self._lock:
            self._artifacts[artifact.unit_id] = artifact
            self._artifact_envs[artifact.unit_id] = {d.name: d.body for d in src.definitions}

    def invocation_name(self, unit_id: str) -> str:
        return self._artifacts[unit_id].tactic_name

    def environment(self) -> dict[str, TacticExpr]:
        env = dict(self.base_env)
        for unit_env in self._artifact_envs.values():
            env.update(unit_env)
        return env

    # -- trials --------------------------------------------------------

    def run_trial(
        self, thm: TheoremRecord, pos: int, artifact: PluginArtifact, timeout: float | None = None
    ) -> TrialOutcome:
        self._log("trial", f"{thm.id}@{pos}:{artifact.unit_id}")
        timeout = self.trial_timeout if timeout is None else timeout
        try:
            goal = thm.parsed_goal or parse_goal(thm.statement, self.sig)
            env = dict(self.base_env)
            env.update(_prelude_environment(thm.prelude, self.sig))
        except KernelError as exc:
            return TrialOutcome(TrialStatus.REPLAY_FAILED, f"theorem does not load: {exc}")
        state = ProofState((goal,))
        for i, step in enumerate(thm.proof_steps[:pos], 1):
            try:
                expr = parse_tactic_expr(step)
            except KernelError as exc:
                return TrialOutcome(TrialStatus.REPLAY_FAILED, f"step {i} does not parse: {exc}")
            outcome = eval_tactic(expr, state, env, self.sig)
            if isinstance(outcome, Failure):
                return TrialOutcome(TrialStatus.REPLAY_FAILED, f"step {i} failed: {outcome.message}")
            if isinstance(outcome, Progress):
                state = outcome.state
        if state.solved:
            return TrialOutcome(TrialStatus.REPLAY_FAILED, "no open goals at the insertion point")

        try:
            src = parse_source(artifact.rendered_source)
        except KernelError as exc:
            return TrialOutcome(TrialStatus.ERROR, f"artifact does not parse: {exc}")
        env.update({d.name: d.body for d in src.definitions})
        deadline = time.monotonic() + timeout
        try:
            outcome = eval_tactic(Call(artifact.tactic_name), state, env, self.sig, deadline=deadline)
        except KernelTimeout:
            return TrialOutcome(TrialStatus.TIMEOUT, f"tactic exceeded {timeout:g}s")
        if isinstance(outcome, Failure):
            return TrialOutcome(TrialStatus.ERROR, outcome.message)
        if isinstance(outcome, NoProgress):
            return TrialOutcome(TrialStatus.UNCHANGED)
        return TrialOutcome(TrialStatus.CHANGED)

    # -- search support --------------------------------------------------

    def apply_tactic(self, unit_id: str, goal: Goal, timeout: float | None = None) -> ApplyResult:
        self._log("apply", f"{unit_id}")
        artifact_env = self._artifact_envs.get(unit_id)
        if artifact_env is None:
            return ApplyResult("failure", message=f"unit {unit_id!r} is not loaded")
        env = self.environment()
        timeout = self.trial_timeout if timeout is None else timeout
        deadline = time.monotonic() + timeout if timeout is not None else None
        invocation = self._artifacts[unit_id].tactic_name
        try:
            outcome = eval_tactic(Call(invocation), ProofState((goal,)), env, self.sig, deadline=deadline)
        except KernelTimeout:
            return ApplyResult("failure", message=f"tactic exceeded {timeout:g}s")
        if isinstance(outcome, Failure):
            return ApplyResult("failure", message=outcome.message)
        if isinstance(outcome, NoProgress):
            return ApplyResult("noprogress")
        return ApplyResult("progress", subgoals=outcome.state.goals)


# --- subprocess backend ---------------------------------------------------------


class SubprocessBridge:
    """Checker interface that drives an external command over trial scripts.

    The command template gets the script file path through the ``{script}``
    placeholder; plugins are materialized as ``<unit_id>.tac`` files in a
    plugin directory that the checker can resolve load directives against.
    """

    def __init__(
        self,
        cmd_template: str,
        plugin_dir: str | Path,
        default_timeout: float = EXTERNAL_TRIAL_TIMEOUT,
        nonce: str | None = None,
        sig: Signature | None = None,
    ):
        self.cmd_template = cmd_template
        self.plugin_dir = Path(plugin_dir)
        self.plugin_dir.mkdir(parents=True, exist_ok=True)
        self.default_timeout = default_timeout
        self.nonce = nonce or uuid.uuid4().hex[:12]
        self.sig = sig or default_signature()
        self.calls: list[tuple[str, str]] = []
        self._artifacts: dict[str, PluginArtifact] = {}
        self._lock = threading.Lock()

    def _log(self, op: str, subject: str) -> None:
        with self._lock:
            self.calls.append((op, subject))

    def _extra_env(self) -> dict[str, str]:
        return {"TACFORGE_PLUGIN_DIR": str(self.plugin_dir)}

    def compile_source(self, source: str) -> CheckerOutcome:
        self._log("compile", source.splitlines()[0] if source.strip() else "<empty>")
        return run_checker(
            self.cmd_template, source, self.default_timeout, extra_env=self._extra_env()
        )

    def load_artifact(self, artifact: PluginArtifact) -> None:
        with self._lock:
            self._artifacts[artifact.unit_id] = artifact
        (self.plugin_dir / f"{artifact.unit_id}.tac").write_text(
            artifact.rendered_source, encoding="utf-8"
        )

    def invocation_name(self, unit_id: str) -> str:
        return self._artifacts[unit_id].tactic_name

    def run_trial(
        self, thm: TheoremRecord, pos: int, artifact: PluginArtifact, timeout: float | None = None
    ) -> TrialOutcome:
        self._log("trial", f"{thm.id}@{pos}:{artifact.unit_id}")
        self.load_artifact(artifact)
        timeout = self.default_timeout if timeout is None else timeout
        try:
            script = render_trial_script(thm, pos, artifact, self.nonce)
        except RenderError as exc:
            return TrialOutcome(TrialStatus.REPLAY_FAILED, str(exc))
        outcome = run_checker(self.cmd_template, script, timeout, extra_env=self._extra_env())
        return self._classify(outcome)

    def _classify(self, outcome: CheckerOutcome) -> TrialOutcome:
        if outcome.status is CheckerStatus.TIMED_OUT:
            return TrialOutcome(TrialStatus.TIMEOUT, outcome.error_text)
        raw = outcome.raw_output
        if "ReplayError:" in raw:
            message = raw.split("ReplayError:", 1)[1].splitlines()[0].strip()
            return TrialOutcome(TrialStatus.REPLAY_FAILED, message)
        try:
            dumps = extract_dumps(raw, self.nonce)
        except MissingMarker as exc:
            return TrialOutcome(TrialStatus.ERROR, str(exc))
        if len(dumps) == 0:
            return TrialOutcome(TrialStatus.REPLAY_FAILED, "no state dump in checker output")
        if len(dumps) == 1:
            message = outcome.error_text or "tactic failed before the second dump"
            if "Error:" in raw:
                message = raw.split("Error:", 1)[1].splitlines()[0].strip()
            return TrialOutcome(TrialStatus.ERROR, message)
        changed = _normalize_dump(dumps[0]) != _normalize_dump(dumps[1])
        return TrialOutcome(TrialStatus.CHANGED if changed else TrialStatus.UNCHANGED)

    def apply_tactic(self, unit_id: str, goal: Goal, timeout: float | None = None) -> ApplyResult:
        self._log("apply", unit_id)
        artifact = self._artifacts.get(unit_id)
        if artifact is None:
            return ApplyResult("failure", message=f"unit {unit_id!r} is not loaded")
        timeout = self.default_timeout if timeout is None else timeout
        lines = [
            f"loadgoal {json.dumps(goal_to_json(goal), sort_keys=True)}",
            artifact.load_directive,
            f"applyjson {artifact.tactic_name} {self.nonce}",
        ]
        outcome = run_checker(
            self.cmd_template, "\n".join(lines) + "\n", timeout, extra_env=self._extra_env()
        )
        if outcome.status is CheckerStatus.TIMED_OUT:
            return ApplyResult("failure", message="tactic application timed out")
        begin = GOALS_BEGIN.format(nonce=self.nonce)
        end = GOALS_END.format(nonce=self.nonce)
        raw = outcome.raw_output
        i = raw.find(begin)
        j = raw.find(end)
        if i == -1 or j == -1:
            return ApplyResult("failure", message=outcome.error_text or "no goal payload in checker output")
        payload = json.loads(raw[i + len(begin) : j].strip())
        kind = payload["kind"]
        if kind == "progress":
            return ApplyResult(
                "progress",
                subgoals=tuple(goal_from_json(g, self.sig) for g in payload["subgoals"]),
            )
        if kind == "noprogress":
            return ApplyResult("noprogress")
        return ApplyResult("failure", message=payload.get("message", "tactic failed"))
