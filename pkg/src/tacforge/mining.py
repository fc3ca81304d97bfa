"""The mining pipeline: per-step proof analysis, strategy generalization, and
autoformalization over an abstract chat transport.

Transports are plain request/response functions. Recording wraps a live
transport and appends every exchange to a cassette file; replaying serves
responses from a cassette keyed by a request digest, which makes every
pipeline run reproducible byte for byte.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import requests

from .corpus import TheoremRecord

log = logging.getLogger(__name__)

Message = tuple[str, str]


class TransportError(Exception):
    pass


class CassetteMiss(TransportError):
    """A replayed request has no recorded response."""


class MalformedResponse(Exception):
    """The model reply lacked the required structure after one re-ask."""


class LlmTransport(Protocol):
    def send_chat(self, messages: Sequence[Message], model_id: str) -> str: ...


def request_digest(model_id: str, messages: Sequence[Message]) -> str:
    h = hashlib.sha256()
    h.update(model_id.encode("utf-8"))
    for _, text in messages:
        h.update(b"\x1f")
        h.update(text.encode("utf-8"))
    return h.hexdigest()


def render_prompt_text(messages: Sequence[Message]) -> str:
    return "\n\n".join(f"{role}: {text}" for role, text in messages)


class HttpChatTransport:
    """Chat-completion client: POST {endpoint} with messages, read one reply.

    The API key comes from an environment variable so credentials never land
    in configuration files. ``max_inflight`` caps concurrent requests.
    """

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "TACFORGE_API_KEY",
        timeout: float = 120.0,
        max_inflight: int = 4,
    ):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._gate = threading.BoundedSemaphore(max_inflight)

    def send_chat(self, messages: Sequence[Message], model_id: str) -> str:
        import os

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": model_id,
            "messages": [{"role": role, "content": text} for role, text in messages],
        }
        with self._gate:
            try:
                response = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
                response.raise_for_status()
                payload = response.json()
                return payload["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                raise TransportError(f"chat request failed: {exc}") from exc


@dataclass(frozen=True)
class CassetteEntry:
    digest: str
    prompt: str
    response: str
    model: str


def load_cassette(path: str | Path) -> list[CassetteEntry]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        entries.append(CassetteEntry(data["digest"], data["prompt"], data["response"], data["model"]))
    return entries


class CassetteRecorder:
    """Pass-through transport that appends every exchange to a cassette file."""

    def __init__(self, inner: LlmTransport, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def send_chat(self, messages: Sequence[Message], model_id: str) -> str:
        response = self.inner.send_chat(messages, model_id)
        entry = {
            "digest": request_digest(model_id, messages),
            "prompt": render_prompt_text(messages),
            "response": response,
            "model": model_id,
        }
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return response


class CassetteReplayer:
    """Serves recorded responses by request digest; unrecorded requests fail."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._responses: dict[str, str] = {}
        for entry in load_cassette(self.path):
            self._responses.setdefault(entry.digest, entry.response)

    def send_chat(self, messages: Sequence[Message], model_id: str) -> str:
        digest = request_digest(model_id, messages)
        if digest not in self._responses:
            head = render_prompt_text(messages)[:160].replace("\n", " ")
            raise CassetteMiss(f"no recorded response for digest {digest[:12]}... ({head!r})")
        return self._responses[digest]


# --- prompt templates -------------------------------------------------------

@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("tacforge").joinpath("templates", name).read_text(encoding="utf-8")


def _language_doc(target_dialect: str) -> str:
    if target_dialect == "toy-kernel":
        return load_template("tactic_language_toy.txt")
    if target_dialect == "external":
        return load_template("tactic_language_external.txt")
    raise ValueError(f"unknown target dialect {target_dialect!r}")


_CODE_FENCE_RE = re.compile(r"```[A-Za-z0-9_-]*[^\S\n]*\n(.*?)```", re.DOTALL)


def extract_last_code_block(text: str) -> str | None:
    blocks = _CODE_FENCE_RE.findall(text)
    if not blocks:
        return None
    return blocks[-1].strip()


# --- pipeline data ----------------------------------------------------------

@dataclass(frozen=True)
class StepAnalysis:
    theorem_id: str
    steps: tuple[tuple[str, str], ...]  # (step text, explanation), one per proof step


@dataclass(frozen=True)
class NLStrategy:
    title: str
    description: str
    source_theorem_id: str


@dataclass(frozen=True)
class CandidateTactic:
    candidate_id: str
    source_text: str
    strategy: NLStrategy
    source_theorem_id: str
    model_id: str


@dataclass(frozen=True)
class StageFlags:
    skip_analysis: bool = False
    skip_generalization: bool = False


def _ask(llm: LlmTransport, messages: list[Message], model_id: str, reask: str) -> str:
    """One request with a single automatic re-ask on an empty reply."""
    text = llm.send_chat(messages, model_id).strip()
    if text:
        return text
    retry = messages + [("assistant", ""), ("user", reask)]
    text = llm.send_chat(retry, model_id).strip()
    if not text:
        raise MalformedResponse("model returned an empty reply twice")
    return text


def _script_block(thm: TheoremRecord) -> str:
    return "\n".join(thm.proof_steps)


def _argument_types_block(thm: TheoremRecord) -> str:
    if not thm.argument_types:
        return ""
    lines = [f"{step}: {info}" for step, info in thm.argument_types]
    return "Argument types extracted from the proof:\n" + "\n".join(lines) + "\n\n"


def analyze_proof(thm: TheoremRecord, llm: LlmTransport, model_id: str) -> StepAnalysis:
    """Explain each proof step with one request per step, feeding earlier
    explanations back as context."""
    if not thm.proof_steps:
        raise ValueError(f"theorem {thm.id!r} has no proof steps")
    template = load_template("proof_analysis.txt")
    entries: list[tuple[str, str]] = []
    prior: list[str] = []
    for i, step in enumerate(thm.proof_steps, 1):
        prompt = template.format(
            theorem_name=thm.name,
            statement=thm.statement,
            full_script=_script_block(thm),
            argument_types_section=_argument_types_block(thm),
            prior_context="\n".join(prior) if prior else "(none yet)",
            step_index=i,
            step_total=len(thm.proof_steps),
            step=step,
        )
        text = _ask(
            llm,
            [("user", prompt)],
            model_id,
            f"The previous reply was empty. Explain step {i} (`{step}`) in plain prose.",
        )
        entries.append((step, text))
        prior.append(f"{i}. {step}: {text}")
    return StepAnalysis(thm.id, tuple(entries))


_SECTION_RE = re.compile(r"^###\s+(.+)$", re.MULTILINE)


def _parse_strategies(text: str, theorem_id: str) -> list[NLStrategy]:
    if text.strip().lower() == "none":
        return []
    matches = list(_SECTION_RE.finditer(text))
    strategies = []
    for i, m in enumerate(matches):
        start = m.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        description = text[start:end].strip()
        title = m.group(1).strip().strip("*").strip()
        if description:
            strategies.append(NLStrategy(title, description, theorem_id))
    return strategies


def generalize_strategies(
    analysis: StepAnalysis | None,
    thm: TheoremRecord,
    llm: LlmTransport,
    model_id: str,
) -> list[NLStrategy]:
    """Abstract an analyzed proof into reusable strategies.

    With ``analysis=None`` the raw proof stands in for the analysis, which is
    how the no-analysis pipeline variant runs.
    """
    if analysis is not None and not analysis.steps:
        raise ValueError("analysis must cover at least one step")
    template = load_template("strategy_generalization.txt")
    if analysis is None:
        analysis_block = "(no step analysis available; work from the raw proof script above)"
    else:
        analysis_block = "\n".join(f"{i}. {step}: {text}" for i, (step, text) in enumerate(analysis.steps, 1))
    prompt = template.format(
        theorem_name=thm.name,
        statement=thm.statement,
        full_script=_script_block(thm),
        analysis=analysis_block,
    )
    text = _ask(
        llm,
        [("user", prompt)],
        model_id,
        "The previous reply was empty. List the generalizable strategies as `### title` sections, or reply `none`.",
    )
    return _parse_strategies(text, thm.id)


def formalize_strategy(
    strategy: NLStrategy,
    llm: LlmTransport,
    model_id: str,
    target_dialect: str = "toy-kernel",
    candidate_id: str | None = None,
) -> CandidateTactic:
    """Translate one strategy into tactic source; the code comes from the last
    fenced block of the reply, with one automatic re-ask."""
    if not strategy.description.strip():
        raise ValueError("strategy description must be non-empty")
    template = load_template("autoformalize.txt")
    prompt = template.format(
        title=strategy.title,
        description=strategy.description,
        language_doc=_language_doc(target_dialect),
    )
    messages: list[Message] = [("user", prompt)]
    text = llm.send_chat(messages, model_id)
    source = extract_last_code_block(text)
    if source is None:
        retry = messages + [
            ("assistant", text),
            ("user", "Reply again with the tactic definitions inside one fenced code block."),
        ]
        text = llm.send_chat(retry, model_id)
        source = extract_last_code_block(text)
        if source is None:
            raise MalformedResponse("no fenced code block in the formalization reply")
    return CandidateTactic(
        candidate_id=candidate_id or f"{strategy.source_theorem_id}.candidate",
        source_text=source,
        strategy=strategy,
        source_theorem_id=strategy.source_theorem_id,
        model_id=model_id,
    )


def mine_corpus(
    corpus: Iterable[TheoremRecord],
    llm: LlmTransport,
    model_id: str,
    flags: StageFlags = StageFlags(),
    target_dialect: str = "toy-kernel",
    jobs: int = 1,
    on_error: Callable[[str, Exception], None] | None = None,
) -> list[CandidateTactic]:
    """Run the full pipeline over a corpus; per-theorem failures are logged
    and skipped so a single bad theorem never aborts the run."""
    corpus = list(corpus)

    def mine_one(thm: TheoremRecord) -> list[CandidateTactic]:
        if flags.skip_generalization:
            if flags.skip_analysis:
                description = "Proof script:\n" + _script_block(thm)
            else:
                analysis = analyze_proof(thm, llm, model_id)
                description = "\n".join(f"{step}: {text}" for step, text in analysis.steps)
            strategy = NLStrategy(
                title=f"direct formalization of {thm.name}",
                description=description,
                source_theorem_id=thm.id,
            )
            return [
                formalize_strategy(
                    strategy, llm, model_id, target_dialect, candidate_id=f"{thm.id}.d1"
                )
            ]
        analysis = None if flags.skip_analysis else analyze_proof(thm, llm, model_id)
        strategies = generalize_strategies(analysis, thm, llm, model_id)
        return [
            formalize_strategy(s, llm, model_id, target_dialect, candidate_id=f"{thm.id}.s{j}")
            for j, s in enumerate(strategies, 1)
        ]

    results: list[list[CandidateTactic]] = [[] for _ in corpus]
    errors: list[tuple[str, Exception]] = []

    def task(idx_thm: tuple[int, TheoremRecord]) -> None:
        idx, thm = idx_thm
        try:
            results[idx] = mine_one(thm)
        except (TransportError, MalformedResponse, ValueError) as exc:
            errors.append((thm.id, exc))

    if jobs <= 1:
        for item in enumerate(corpus):
            task(item)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(task, enumerate(corpus)))

    for theorem_id, exc in errors:
        log.warning("mining skipped theorem %s: %s", theorem_id, exc)
        if on_error is not None:
            on_error(theorem_id, exc)
    return [c for chunk in results for c in chunk]


# --- candidate store ---------------------------------------------------------

def save_candidates(candidates: Iterable[CandidateTactic], path: str | Path) -> None:
    lines = []
    for c in candidates:
        lines.append(
            json.dumps(
                {
                    "candidate_id": c.candidate_id,
                    "source_text": c.source_text,
                    "strategy": {
                        "title": c.strategy.title,
                        "description": c.strategy.description,
                        "source_theorem_id": c.strategy.source_theorem_id,
                    },
                    "source_theorem_id": c.source_theorem_id,
                    "model_id": c.model_id,
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_candidates(path: str | Path) -> list[CandidateTactic]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        strategy = NLStrategy(
            title=data["strategy"]["title"],
            description=data["strategy"]["description"],
            source_theorem_id=data["strategy"]["source_theorem_id"],
        )
        out.append(
            CandidateTactic(
                candidate_id=data["candidate_id"],
                source_text=data["source_text"],
                strategy=strategy,
                source_theorem_id=data["source_theorem_id"],
                model_id=data["model_id"],
            )
        )
    return out
