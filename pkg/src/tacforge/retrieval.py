"""Indirect tactic retrieval: Okapi BM25 over the source theorems that each
kept tactic was mined from, plus the theorem-to-tactics mapping that turns a
theorem ranking into a tactic ranking."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import TacticUnit, TheoremRecord

INDEX_MAGIC = "TFIDX1"

_SPLIT_RE = re.compile(r"[^0-9A-Za-z]+")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


class UnknownDocument(Exception):
    pass


class MissingTheorem(Exception):
    def __init__(self, unit_id: str, theorem_id: str):
        super().__init__(f"unit {unit_id!r} references missing theorem {theorem_id!r}")
        self.unit_id = unit_id
        self.theorem_id = theorem_id


def tokenize(text: str) -> list[str]:
    """Lowercased tokens split on non-alphanumerics and camelCase boundaries."""
    out: list[str] = []
    for chunk in _SPLIT_RE.split(text):
        if not chunk:
            continue
        for piece in _CAMEL_RE.split(chunk):
            if piece:
                out.append(piece.lower())
    return out


@dataclass
class TacticIndex:
    documents: dict[str, list[str]]
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    average_doc_length: float
    theorem_to_tactics: dict[str, list[str]]
    k1: float = 1.2
    b: float = 0.75
    _tf: dict[str, dict[str, int]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._tf:
            self._tf = {tok: dict(posting) for tok, posting in self.postings.items()}


def build_index(
    units: Iterable[TacticUnit],
    records: Iterable[TheoremRecord] | Mapping[str, TheoremRecord],
    k1: float = 1.2,
    b: float = 0.75,
) -> TacticIndex:
    """Index the distinct source theorems of the given units.

    Document text is the theorem name plus its statement. Raises
    MissingTheorem when a unit's source theorem is absent.
    """
    if isinstance(records, Mapping):
        by_id = dict(records)
    else:
        by_id = {r.id: r for r in records}

    documents: dict[str, list[str]] = {}
    theorem_to_tactics: dict[str, list[str]] = {}
    for unit in units:
        record = by_id.get(unit.source_theorem_id)
        if record is None:
            raise MissingTheorem(unit.unit_id, unit.source_theorem_id)
        if record.id not in documents:
            documents[record.id] = tokenize(f"{record.name} {record.statement}")
            theorem_to_tactics[record.id] = []
        if unit.unit_id not in theorem_to_tactics[record.id]:
            theorem_to_tactics[record.id].append(unit.unit_id)

    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc_id, tokens in documents.items():
        doc_lengths[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            postings.setdefault(tok, []).append((doc_id, tf))
    avg = sum(doc_lengths.values()) / len(doc_lengths) if doc_lengths else 0.0
    return TacticIndex(
        documents=documents,
        postings=postings,
        doc_lengths=doc_lengths,
        average_doc_length=avg,
        theorem_to_tactics=theorem_to_tactics,
        k1=k1,
        b=b,
    )


def idf(token: str, index: TacticIndex) -> float:
    n = len(index.documents)
    df = len(index.postings.get(token, ()))
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def score_bm25(query_tokens: Iterable[str], theorem_id: str, index: TacticIndex) -> float:
    """Okapi score of one document against the query token list."""
    if theorem_id not in index.documents:
        raise UnknownDocument(theorem_id)
    length = index.doc_lengths[theorem_id]
    norm = index.k1 * (1.0 - index.b + index.b * length / index.average_doc_length)
    score = 0.0
    for token in query_tokens:
        tf = index._tf.get(token, {}).get(theorem_id, 0)
        if tf == 0:
            continue
        score += idf(token, index) * tf * (index.k1 + 1.0) / (tf + norm)
    return score


def retrieve_theorems(goal_text: str, k: int, index: TacticIndex) -> list[str]:
    """Top-k theorem ids by descending score; zero scores are excluded and
    ties break on ascending theorem id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not index.documents:
        return []
    query = tokenize(goal_text)
    scored = []
    for doc_id in index.documents:
        s = score_bm25(query, doc_id, index)
        if s > 0.0:
            scored.append((-s, doc_id))
    scored.sort()
    return [doc_id for _, doc_id in scored[:k]]


def get_tactics(theorem_ids: Iterable[str], index: TacticIndex) -> list[str]:
    """Tactic unit ids mapped by the given theorems, in retrieval order,
    deduplicated preserving first occurrence."""
    out: list[str] = []
    seen: set[str] = set()
    for theorem_id in theorem_ids:
        if theorem_id not in index.theorem_to_tactics:
            raise UnknownDocument(theorem_id)
        for unit_id in index.theorem_to_tactics[theorem_id]:
            if unit_id not in seen:
                seen.add(unit_id)
                out.append(unit_id)
    return out


def save_index(index: TacticIndex, path: str | Path) -> None:
    payload = {
        "documents": [[doc_id, tokens] for doc_id, tokens in index.documents.items()],
        "postings": [[tok, posting] for tok, posting in index.postings.items()],
        "doc_lengths": [[doc_id, n] for doc_id, n in index.doc_lengths.items()],
        "average_doc_length": index.average_doc_length,
        "theorem_to_tactics": [[t, u] for t, u in index.theorem_to_tactics.items()],
        "k1": index.k1,
        "b": index.b,
    }
    Path(path).write_text(INDEX_MAGIC + "\n" + json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_index(path: str | Path) -> TacticIndex:
    text = Path(path).read_text(encoding="utf-8")
    header, _, body = text.partition("\n")
    if header.strip() != INDEX_MAGIC:
        raise ValueError(f"{path}: not a tactic index file (bad magic {header!r})")
    payload = json.loads(body)
    return TacticIndex(
        documents={doc_id: tokens for doc_id, tokens in payload["documents"]},
        postings={tok: [tuple(p) for p in posting] for tok, posting in payload["postings"]},
        doc_lengths={doc_id: n for doc_id, n in payload["doc_lengths"]},
        average_doc_length=payload["average_doc_length"],
        theorem_to_tactics={t: list(u) for t, u in payload["theorem_to_tactics"]},
        k1=payload["k1"],
        b=payload["b"],
    )
