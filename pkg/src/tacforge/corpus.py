"""Theorem corpora: line-delimited record files, insertion positions for
generalization testing, and decomposition of tactic sources into
self-contained units that carry their own prelude."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .kernel import (
    Goal,
    KernelError,
    Signature,
    UnresolvedName,
    default_signature,
    parse_goal,
    parse_source,
)
from .kernel.tactics import collect_calls


class CorpusError(Exception):
    pass


class ParseError(CorpusError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(CorpusError):
    def __init__(self, theorem_id: str):
        super().__init__(f"duplicate theorem id {theorem_id!r}")
        self.theorem_id = theorem_id


@dataclass(frozen=True)
class TheoremRecord:
    id: str
    name: str
    statement: str
    proof_steps: tuple[str, ...]
    prelude: tuple[str, ...] = ()
    argument_types: tuple[tuple[str, str], ...] | None = None
    parsed_goal: Goal | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ProofPosition:
    """Insertion point ``index`` counts steps: position i sits immediately
    after step i, and the final closing step is never an insertion point."""

    theorem_id: str
    index: int


@dataclass(frozen=True)
class TacticUnit:
    unit_id: str
    tactic_name: str
    source_text: str
    required_prelude: tuple[str, ...]
    source_theorem_id: str
    nl_strategy: str = ""


_REQUIRED_FIELDS = ("id", "name", "statement", "proof_steps", "prelude")


def _record_from_json(data: dict, line_no: int, sig: Signature) -> TheoremRecord:
    for key in _REQUIRED_FIELDS:
        if key not in data:
            raise ParseError(line_no, f"missing field {key!r}")
    if not isinstance(data["id"], str) or not data["id"]:
        raise ParseError(line_no, "field 'id' must be a non-empty string")
    for key in ("name", "statement"):
        if not isinstance(data[key], str):
            raise ParseError(line_no, f"field {key!r} must be a string")
    for key in ("proof_steps", "prelude"):
        value = data[key]
        if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
            raise ParseError(line_no, f"field {key!r} must be a list of strings")
    argument_types = None
    raw_types = data.get("argument_types")
    if raw_types is not None:
        if not isinstance(raw_types, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in raw_types.items()
        ):
            raise ParseError(line_no, "field 'argument_types' must map strings to strings")
        argument_types = tuple(sorted(raw_types.items()))
    try:
        parsed = parse_goal(data["statement"], sig)
    except KernelError:
        parsed = None
    return TheoremRecord(
        id=data["id"],
        name=data["name"],
        statement=data["statement"],
        proof_steps=tuple(data["proof_steps"]),
        prelude=tuple(data["prelude"]),
        argument_types=argument_types,
        parsed_goal=parsed,
    )


def load_corpus(path: str | Path, sig: Signature | None = None) -> list[TheoremRecord]:
    """Load a line-delimited corpus file; rejects duplicate ids.

    Statements that parse under the signature get a ``parsed_goal``; others
    are kept as opaque text for external checkers.
    """
    sig = sig or default_signature()
    records: list[TheoremRecord] = []
    seen: set[str] = set()
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ParseError(line_no, "record must be a JSON object")
        record = _record_from_json(data, line_no, sig)
        if record.id in seen:
            raise DuplicateId(record.id)
        seen.add(record.id)
        records.append(record)
    return records


def record_to_json(record: TheoremRecord) -> dict:
    data: dict = {
        "id": record.id,
        "name": record.name,
        "statement": record.statement,
        "proof_steps": list(record.proof_steps),
        "prelude": list(record.prelude),
    }
    if record.argument_types is not None:
        data["argument_types"] = dict(record.argument_types)
    return data


def save_corpus(records: Iterable[TheoremRecord], path: str | Path, manifest: bool = True) -> None:
    records = list(records)
    path = Path(path)
    lines = [json.dumps(record_to_json(r), sort_keys=True) for r in records]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    if manifest:
        write_manifest(records, Path(f"{path}.manifest.json"))


def write_manifest(records: Iterable[TheoremRecord], path: str | Path) -> None:
    records = list(records)
    manifest = {
        "theorems": len(records),
        "positions": total_positions(records),
    }
    Path(path).write_text(json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def enumerate_positions(record: TheoremRecord) -> list[ProofPosition]:
    """Interior insertion points: after each step except the closing one."""
    n = len(record.proof_steps)
    return [ProofPosition(record.id, i) for i in range(1, n)]


def total_positions(records: Iterable[TheoremRecord]) -> int:
    return sum(max(0, len(r.proof_steps) - 1) for r in records)


def split_units(
    source_text: str,
    source_theorem_id: str,
    strategies: str | Mapping[str, str] | None = None,
    id_prefix: str = "",
) -> list[TacticUnit]:
    """Split a tactic source into one unit per definition.

    Every unit carries the prelude it needs to stand alone: all import lines
    plus the source of any sibling definition it (transitively) calls.
    Raises UnresolvedName when a definition calls a name defined nowhere in
    the source.
    """
    src = parse_source(source_text)
    by_name = {d.name: d for d in src.definitions}
    order = {d.name: i for i, d in enumerate(src.definitions)}

    def closure(name: str) -> list[str]:
        seen: set[str] = set()
        stack = [name]
        while stack:
            current = stack.pop()
            for callee in sorted(collect_calls(by_name[current].body)):
                if callee not in by_name:
                    raise UnresolvedName(
                        f"tactic {current!r} calls undefined name {callee!r}"
                    )
                if callee != name and callee not in seen:
                    seen.add(callee)
                    stack.append(callee)
        return sorted(seen, key=lambda n: order[n])

    prefix = id_prefix or source_theorem_id
    units: list[TacticUnit] = []
    for idx, definition in enumerate(src.definitions, 1):
        helpers = closure(definition.name)
        prelude = list(src.imports) + [by_name[h].source_text for h in helpers]
        if isinstance(strategies, str) or strategies is None:
            strategy = strategies or ""
        else:
            strategy = strategies.get(definition.name, "")
        units.append(
            TacticUnit(
                unit_id=f"{prefix}.u{idx}",
                tactic_name=definition.name,
                source_text=definition.source_text,
                required_prelude=tuple(prelude),
                source_theorem_id=source_theorem_id,
                nl_strategy=strategy,
            )
        )
    return units


def save_units(units: Iterable[TacticUnit], path: str | Path, rates: Mapping[str, float] | None = None) -> None:
    lines = []
    for u in units:
        data = {
            "unit_id": u.unit_id,
            "tactic_name": u.tactic_name,
            "source_text": u.source_text,
            "required_prelude": list(u.required_prelude),
            "source_theorem_id": u.source_theorem_id,
            "nl_strategy": u.nl_strategy,
        }
        if rates is not None and u.unit_id in rates:
            data["rate"] = rates[u.unit_id]
        lines.append(json.dumps(data, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_units(path: str | Path) -> list[TacticUnit]:
    units = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        units.append(
            TacticUnit(
                unit_id=data["unit_id"],
                tactic_name=data["tactic_name"],
                source_text=data["source_text"],
                required_prelude=tuple(data["required_prelude"]),
                source_theorem_id=data["source_theorem_id"],
                nl_strategy=data.get("nl_strategy", ""),
            )
        )
    return units
