"""Validity and generalization testing.

Validity runs a compile-check/repair loop: a candidate that fails to compile
goes back to the model with the error text, up to a fixed number of repair
rounds. Surviving sources are split into units, each unit is packaged as a
self-contained plugin, and generalization testing inserts the plugin at every
interior position of a held-out corpus, keeping tactics whose change rate
falls inside the configured band.
"""

from __future__ import annotations

import concurrent.futures
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import (
    ProofPosition,
    TacticUnit,
    TheoremRecord,
    enumerate_positions,
)
from .kernel.parser import (
    parse_source,
    render_definition,
    tactic_to_text,
)
from .kernel.tactics import (
    Alt,
    Call,
    MatchArm,
    MatchGoal,
    Repeat,
    Seq,
    TacticExpr,
    Try,
    collect_calls,
)
from .mining import (
    CandidateTactic,
    LlmTransport,
    MalformedResponse,
    TransportError,
    extract_last_code_block,
    load_template,
)

DEFAULT_MAX_REPAIRS = 3
RATE_BAND_LOW = 0.10
RATE_BAND_HIGH_EXCLUSIVE = 1.0


class DisjointnessViolation(Exception):
    pass


class RenderError(Exception):
    pass


# --- validity ----------------------------------------------------------------

@dataclass(frozen=True)
class ValidityResult:
    candidate_id: str
    status: str  # "valid" | "discarded"
    repairs_used: int
    final_source: str

    @property
    def valid(self) -> bool:
        return self.status == "valid"


def check_validity(
    candidate: CandidateTactic,
    checker,
    llm: LlmTransport | None,
    model_id: str = "",
    max_repairs: int = DEFAULT_MAX_REPAIRS,
) -> ValidityResult:
    """Compile a candidate; on failure run up to ``max_repairs`` repair rounds,
    each feeding the error text and current source back to the model.

    A transport failure or a reply without a code block consumes the round
    without a fresh compile. Total compile attempts never exceed
    1 + max_repairs.
    """
    source = candidate.source_text
    outcome = checker.compile_source(source)
    if outcome.accepted:
        return ValidityResult(candidate.candidate_id, "valid", 0, source)
    for attempt in range(1, max_repairs + 1):
        if llm is None:
            continue
        prompt = load_template("repair.txt").format(error=outcome.error_text, source=source)
        try:
            reply = llm.send_chat([("user", prompt)], model_id)
        except TransportError:
            continue
        repaired = extract_last_code_block(reply)
        if repaired is None:
            continue
        source = repaired
        outcome = checker.compile_source(source)
        if outcome.accepted:
            return ValidityResult(candidate.candidate_id, "valid", attempt, source)
    return ValidityResult(candidate.candidate_id, "discarded", max_repairs, source)


# --- plugin packaging ---------------------------------------------------------

@dataclass(frozen=True)
class PluginArtifact:
    unit_id: str
    tactic_name: str  # the suffixed, invocable name
    rendered_source: str
    load_directive: str


def _slug(unit_id: str) -> str:
    return re.sub(r"[^0-9A-Za-z]+", "_", unit_id).strip("_")


def _rename_calls(expr: TacticExpr, mapping: Mapping[str, str]) -> TacticExpr:
    if isinstance(expr, Call):
        return Call(mapping.get(expr.name, expr.name))
    if isinstance(expr, Seq):
        return Seq(_rename_calls(expr.first, mapping), _rename_calls(expr.second, mapping))
    if isinstance(expr, Alt):
        return Alt(_rename_calls(expr.left, mapping), _rename_calls(expr.right, mapping))
    if isinstance(expr, Try):
        return Try(_rename_calls(expr.body, mapping))
    if isinstance(expr, Repeat):
        return Repeat(_rename_calls(expr.body, mapping))
    if isinstance(expr, MatchGoal):
        return MatchGoal(tuple(MatchArm(a.pattern, _rename_calls(a.body, mapping)) for a in expr.arms))
    return expr


def package_plugin(unit: TacticUnit) -> PluginArtifact:
    """Render a unit plus its prelude behind one load directive.

    Every defined name gets a unit-specific suffix so that loading many
    artifacts into one environment never collides; loading the artifact and
    invoking its tactic name behaves exactly like pasting the unit inline.
    """
    try:
        unit_src = parse_source(unit.source_text)
        prelude_src = parse_source("\n".join(unit.required_prelude))
    except Exception as exc:
        raise RenderError(f"unit {unit.unit_id!r} does not parse: {exc}") from exc
    if len(unit_src.definitions) != 1:
        raise RenderError(
            f"unit {unit.unit_id!r} must contain exactly one definition, found {len(unit_src.definitions)}"
        )
    main = unit_src.definitions[0]
    helpers = list(prelude_src.definitions)
    defined = {d.name for d in helpers} | {main.name}
    for d in (*helpers, main):
        missing = collect_calls(d.body) - defined
        if missing:
            raise RenderError(
                f"unit {unit.unit_id!r} has an incomplete prelude: {sorted(missing)[0]!r} is undefined"
            )
    suffix = _slug(unit.unit_id)
    mapping = {name: f"{name}__{suffix}" for name in defined}
    lines = list(unit_src.imports) + list(prelude_src.imports)
    for d in helpers:
        lines.append(render_definition(mapping[d.name], _rename_calls(d.body, mapping)))
    lines.append(render_definition(mapping[main.name], _rename_calls(main.body, mapping)))
    return PluginArtifact(
        unit_id=unit.unit_id,
        tactic_name=mapping[main.name],
        rendered_source="\n".join(lines) + "\n",
        load_directive=f"load {unit.unit_id}",
    )


# --- generalization trials -----------------------------------------------------

class TrialStatus(str, Enum):
    CHANGED = "changed"
    UNCHANGED = "unchanged"
    ERROR = "error"
    TIMEOUT = "timeout"
    REPLAY_FAILED = "replay_failed"  # excluded from trials entirely


@dataclass(frozen=True)
class TrialOutcome:
    status: TrialStatus
    message: str = ""


@dataclass(frozen=True)
class GeneralizationReport:
    unit_id: str
    trials: int
    changed: int
    unchanged: int
    errors: int
    timeouts: int
    excluded: int
    rate: float


def run_position_trial(
    unit: TacticUnit,
    pos: ProofPosition,
    corpus: Mapping[str, TheoremRecord],
    checker,
    timeout: float | None = None,
    artifact: PluginArtifact | None = None,
) -> TrialOutcome:
    """Replay a theorem to the given position, fire the unit's tactic once,
    and report whether the proof state changed."""
    thm = corpus.get(pos.theorem_id)
    if thm is None:
        return TrialOutcome(TrialStatus.REPLAY_FAILED, f"unknown theorem {pos.theorem_id!r}")
    if artifact is None:
        artifact = package_plugin(unit)
    return checker.run_trial(thm, pos.index, artifact, timeout)


def generalization_rate(
    unit: TacticUnit,
    validation_corpus: Sequence[TheoremRecord],
    checker,
    timeout: float | None = None,
    jobs: int = 1,
    mining_ids: Iterable[str] | None = None,
) -> GeneralizationReport:
    """One trial per interior position of the validation corpus.

    Positions whose replay itself fails measure corpus health, not tactic
    generality; they are excluded from the trial count and reported in the
    ``excluded`` column. The rate denominator is every attempted trial,
    errors and timeouts included.
    """
    validation_ids = {r.id for r in validation_corpus}
    overlap = set(mining_ids or ()) & validation_ids
    if unit.source_theorem_id in validation_ids:
        overlap.add(unit.source_theorem_id)
    if overlap:
        raise DisjointnessViolation(
            f"validation corpus shares theorem ids with the mining corpus: {sorted(overlap)[:3]}"
        )
    by_id = {r.id: r for r in validation_corpus}
    positions = [p for r in validation_corpus for p in enumerate_positions(r)]
    artifact = package_plugin(unit)

    def run_one(pos: ProofPosition) -> TrialOutcome:
        return run_position_trial(unit, pos, by_id, checker, timeout, artifact)

    if jobs <= 1:
        outcomes = [run_one(p) for p in positions]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_one, positions))

    counts = {status: 0 for status in TrialStatus}
    for outcome in outcomes:
        counts[outcome.status] += 1
    excluded = counts[TrialStatus.REPLAY_FAILED]
    trials = len(outcomes) - excluded
    changed = counts[TrialStatus.CHANGED]
    return GeneralizationReport(
        unit_id=unit.unit_id,
        trials=trials,
        changed=changed,
        unchanged=counts[TrialStatus.UNCHANGED],
        errors=counts[TrialStatus.ERROR],
        timeouts=counts[TrialStatus.TIMEOUT],
        excluded=excluded,
        rate=(changed / trials) if trials else 0.0,
    )


def filter_generalizable(
    reports: Iterable[GeneralizationReport],
    units: Mapping[str, TacticUnit] | Iterable[TacticUnit],
    lo: float = RATE_BAND_LOW,
    hi_exclusive: float = RATE_BAND_HIGH_EXCLUSIVE,
) -> list[TacticUnit]:
    """Keep exactly the units whose rate satisfies lo <= rate < hi_exclusive."""
    if not isinstance(units, Mapping):
        units = {u.unit_id: u for u in units}
    kept = []
    for report in reports:
        if lo <= report.rate < hi_exclusive:
            unit = units.get(report.unit_id)
            if unit is not None:
                kept.append(unit)
    return kept


def histogram_buckets(reports: Iterable[GeneralizationReport]) -> list[int]:
    """Ten rate buckets of width 10%; a rate of exactly 1.0 lands in the last."""
    buckets = [0] * 10
    for report in reports:
        buckets[min(int(report.rate * 10), 9)] += 1
    return buckets


# --- result stores -------------------------------------------------------------

def save_validity_results(results: Iterable[ValidityResult], path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "candidate_id": r.candidate_id,
                "status": r.status,
                "repairs_used": r.repairs_used,
                "final_source": r.final_source,
            },
            sort_keys=True,
        )
        for r in results
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_validity_results(path: str | Path) -> list[ValidityResult]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        out.append(
            ValidityResult(data["candidate_id"], data["status"], data["repairs_used"], data["final_source"])
        )
    return out


def save_reports(reports: Iterable[GeneralizationReport], path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "unit_id": r.unit_id,
                "trials": r.trials,
                "changed": r.changed,
                "unchanged": r.unchanged,
                "errors": r.errors,
                "timeouts": r.timeouts,
                "excluded": r.excluded,
                "rate": r.rate,
            },
            sort_keys=True,
        )
        for r in reports
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_reports(path: str | Path) -> list[GeneralizationReport]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        out.append(GeneralizationReport(**data))
    return out
