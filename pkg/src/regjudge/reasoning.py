"""Prompt construction, chat providers, and judgment parsing/enrichment.

The prompt embeds retrieved standards as tagged candidate blocks and
asks for a JSON array of applicability judgments. Providers are
pluggable: a remote OpenAI-style endpoint for production, a scripted
playback provider for fault injection, and a cue-word mock that applies
the prompt's own modal-verb rules deterministically so end-to-end runs
need no network.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from typing import Any, Iterable, Mapping, Protocol, Sequence, runtime_checkable

from .corpus import (
    LanguagePreference,
    Region,
    StandardRecord,
    compose_segment_text,
    normalize_standard_id,
    pick_title,
)
from .errors import (
    InvalidIdentifier,
    InvalidInput,
    MalformedOutput,
    NoJudgments,
    NotFound,
    ProviderError,
    ProviderTimeout,
)
from .retrieval import RetrievalCandidate

__all__ = [
    "ApplicabilityLabel",
    "Provenance",
    "ApplicabilityJudgment",
    "PromptBundle",
    "ChatProvider",
    "ChatTranscript",
    "ScriptedChatProvider",
    "CueChatProvider",
    "RemoteChatProvider",
    "RegionMode",
    "build_prompt",
    "classify",
    "parse_judgments",
    "enrich_judgments",
    "pseudo_label_fallback",
    "parse_label",
    "ParsedJudgments",
    "default_few_shot",
]

logger = logging.getLogger(__name__)

LLM_URL_ENV = "REGJUDGE_LLM_URL"
LLM_MODEL_ENV = "REGJUDGE_LLM_MODEL"
LLM_KEY_ENV = "REGJUDGE_LLM_KEY"

DEFAULT_TEMPERATURE = 0.3
DEFAULT_MAX_CANDIDATES = 10
REQUIRED_OUTPUT_KEYS = ("standard_id", "applicability", "justification", "clause")


class ApplicabilityLabel(str, Enum):
    MANDATORY = "Mandatory"
    RECOMMENDED = "Recommended"
    NOT_APPLICABLE = "Not Applicable"


class Provenance(str, Enum):
    LLM = "LLM"
    PSEUDO_LABEL = "PseudoLabel"
    BASELINE = "Baseline"


class RegionMode(str, Enum):
    SINGLE = "SINGLE"
    CROSS = "CROSS"


_LABEL_ALIASES = {
    "mandatory": ApplicabilityLabel.MANDATORY,
    "recommended": ApplicabilityLabel.RECOMMENDED,
    "not applicable": ApplicabilityLabel.NOT_APPLICABLE,
    "notapplicable": ApplicabilityLabel.NOT_APPLICABLE,
}


def parse_label(raw: str) -> ApplicabilityLabel:
    """Closed-world label parse; anything outside the enum raises ValueError."""
    key = re.sub(r"[\s_-]+", " ", str(raw).strip().lower())
    label = _LABEL_ALIASES.get(key) or _LABEL_ALIASES.get(key.replace(" ", ""))
    if label is None:
        raise ValueError(f"unknown applicability label {raw!r}")
    return label


@dataclass(frozen=True)
class ApplicabilityJudgment:
    """Per-standard label with justification and clause traceability.

    ``region`` is None only on pseudo-label judgments, which never reach
    production artifacts.
    """

    standard_id: str
    norm_id: str
    name: str
    applicability: ApplicabilityLabel
    justification: str
    clause: str | None
    region: Region | None
    provenance: Provenance

    def to_dict(self) -> dict[str, Any]:
        return {
            "standard_id": self.standard_id,
            "name": self.name,
            "applicability": self.applicability.value,
            "justification": self.justification,
            "clause": self.clause,
            "region": self.region.value if self.region is not None else None,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ApplicabilityJudgment":
        return cls(
            standard_id=str(data["standard_id"]),
            norm_id=normalize_standard_id(str(data["standard_id"])),
            name=str(data.get("name") or ""),
            applicability=parse_label(data["applicability"]),
            justification=str(data.get("justification") or ""),
            clause=None if data.get("clause") is None else str(data["clause"]),
            region=None if data.get("region") is None else Region(data["region"]),
            provenance=Provenance(data.get("provenance", "LLM")),
        )


_INSTRUCTIONS = """\
You are a regulatory affairs analyst for medical devices. For each candidate
standard listed below, decide whether it is Mandatory, Recommended, or
Not Applicable to the described device, and justify each decision briefly
with reference to the standard's text.

Apply these cue-word rules:
- If the standard's text states requirements with "shall" or "must" and its
  scope covers the device, classify it as Mandatory.
- If the standard's text uses "should" for its recommendations, classify it
  as Recommended.
- If the scope does not cover the device, output Not Applicable.
"""

_CROSS_NOTE = """\
Candidates come from more than one jurisdiction. Judge each standard within
its own region (CN or US) independently; do not let one region's rules decide
another region's label.
"""


@dataclass(frozen=True)
class PromptBundle:
    """Everything needed for one classification call, rendered on demand."""

    device_text: str
    candidates: tuple[tuple[StandardRecord, RetrievalCandidate], ...]
    instructions: str
    few_shot: tuple[Mapping[str, Any], ...]
    temperature: float
    region_mode: RegionMode

    def candidate_block(self, position: int, record: StandardRecord,
                        language_preference: LanguagePreference) -> str:
        lines = [
            f"[CANDIDATE {position}]",
            f"standard_id: {record.id}",
            f"region: {record.region.value}",
            f"clause: {record.clause or ''}",
            f"text: {compose_segment_text(record, language_preference)}",
        ]
        return "\n".join(lines)

    def prompt_text(self,
                    language_preference: LanguagePreference = LanguagePreference.EN_FIRST,
                    ) -> str:
        parts = [self.instructions.rstrip()]
        if self.region_mode is RegionMode.CROSS:
            parts.append(_CROSS_NOTE.rstrip())
        parts.append(f"Device description:\n{self.device_text}")
        blocks = [self.candidate_block(i, rec, language_preference)
                  for i, (rec, _) in enumerate(self.candidates, start=1)]
        parts.append("Candidate standards:\n" + "\n\n".join(blocks)
                     + "\n[END CANDIDATES]")
        examples = []
        for i, example in enumerate(self.few_shot, start=1):
            examples.append(
                f"Example {i} (device: {example['device']}):\n"
                + json.dumps(example["output"], ensure_ascii=False, indent=2))
        if examples:
            parts.append("Examples of correct output:\n" + "\n\n".join(examples))
        parts.append(
            "Return only a JSON array in which every object has exactly these "
            "keys: " + ", ".join(REQUIRED_OUTPUT_KEYS) + ".")
        return "\n\n".join(parts)

    def messages(self) -> list[dict[str, str]]:
        return [{"role": "user", "content": self.prompt_text()}]


def default_few_shot() -> tuple[Mapping[str, Any], ...]:
    """Bundled few-shot examples, one per applicability label."""
    raw = resources.files("regjudge.data").joinpath("few_shot.json").read_text("utf-8")
    return tuple(json.loads(raw))


def build_prompt(device_text: str,
                 candidates: Sequence[tuple[StandardRecord, RetrievalCandidate]],
                 region_mode: RegionMode = RegionMode.SINGLE, *,
                 max_candidates: int = DEFAULT_MAX_CANDIDATES,
                 temperature: float = DEFAULT_TEMPERATURE,
                 few_shot: Sequence[Mapping[str, Any]] | None = None) -> PromptBundle:
    if not device_text or not device_text.strip():
        raise InvalidInput("device description is empty")
    if not 1 <= len(candidates) <= max_candidates:
        raise InvalidInput(
            f"candidate count {len(candidates)} outside 1..{max_candidates}")
    shots = tuple(few_shot) if few_shot is not None else default_few_shot()
    if len(shots) < 2:
        raise InvalidInput("prompt requires at least 2 few-shot examples")
    return PromptBundle(
        device_text=device_text,
        candidates=tuple(candidates),
        instructions=_INSTRUCTIONS,
        few_shot=shots,
        temperature=temperature,
        region_mode=RegionMode(region_mode),
    )


@runtime_checkable
class ChatProvider(Protocol):
    model_id: str

    def complete(self, messages: Sequence[Mapping[str, str]],
                 temperature: float) -> str: ...


@dataclass(frozen=True)
class ChatTranscript:
    """One provider exchange, kept verbatim for replay."""

    prompt: str
    raw_response: str
    attempts: int
    model_id: str
    temperature: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt": self.prompt,
            "raw_response": self.raw_response,
            "attempts": self.attempts,
            "model_id": self.model_id,
            "temperature": self.temperature,
        }


class ScriptedChatProvider:
    """Plays back a fixed sequence of responses; list items that are
    exceptions are raised instead, which is how tests inject faults."""

    def __init__(self, script: Sequence[str | Exception], model_id: str = "scripted"):
        self.model_id = model_id
        self._script = list(script)
        self.calls = 0

    def complete(self, messages: Sequence[Mapping[str, str]],
                 temperature: float) -> str:
        self.calls += 1
        if not self._script:
            raise ProviderError("scripted provider ran out of responses",
                                retryable=False)
        item = self._script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


_CANDIDATE_SPLIT = re.compile(r"\[CANDIDATE (\d+)\]")
_SHALL_MUST = re.compile(r"(?<!\w)(shall|must)(?!\w)", re.IGNORECASE)
_SHOULD = re.compile(r"(?<!\w)should(?!\w)", re.IGNORECASE)


class CueChatProvider:
    """Deterministic mock: applies the prompt's cue-word rules itself.

    It reads the candidate blocks out of the prompt, scans each block's
    standard text for modal cues, and emits the JSON array a cooperative
    model would return. Instruction text never leaks into the scan
    because only the block bodies are searched.
    """

    model_id = "cue-rules"

    def complete(self, messages: Sequence[Mapping[str, str]],
                 temperature: float) -> str:
        prompt = "\n".join(m.get("content", "") for m in messages)
        section = prompt.split("[END CANDIDATES]")[0]
        pieces = _CANDIDATE_SPLIT.split(section)
        # pieces = [prefix, number, block, number, block, ...]
        judgments = []
        for block in pieces[2::2]:
            fields = self._block_fields(block)
            standard_id = fields.get("standard_id", "").strip()
            if not standard_id:
                continue
            text = fields.get("text", "")
            strong = _SHALL_MUST.search(text)
            if strong:
                cue = strong.group(1).lower()
                label = "Mandatory"
                justification = (f"The standard text states requirements with "
                                 f"'{cue}' and its scope covers the described device.")
            elif _SHOULD.search(text):
                label = "Recommended"
                justification = ("The standard text phrases its provisions with "
                                 "'should', so it is advisory for this device.")
            else:
                label = "Not Applicable"
                justification = ("The scope of this standard does not cover the "
                                 "described device.")
            clause = fields.get("clause", "").strip() or None
            judgments.append({
                "standard_id": standard_id,
                "applicability": label,
                "justification": justification,
                "clause": clause,
            })
        return json.dumps(judgments, ensure_ascii=False, indent=2)

    @staticmethod
    def _block_fields(block: str) -> dict[str, str]:
        """Parse 'key: value' lines; the text field absorbs following lines."""
        fields: dict[str, str] = {}
        current: str | None = None
        for line in block.splitlines():
            match = re.match(r"^(standard_id|region|clause|text): ?(.*)$", line)
            if match:
                current = match.group(1)
                fields[current] = match.group(2)
            elif current == "text":
                fields[current] += "\n" + line
        return fields


class RemoteChatProvider:
    """OpenAI-style chat-completions endpoint.

    Endpoint, model, and key come from arguments or REGJUDGE_LLM_URL /
    REGJUDGE_LLM_MODEL / REGJUDGE_LLM_KEY. The key stays in headers and
    never reaches logs or error text.
    """

    def __init__(self, model_id: str | None = None, *, url: str | None = None,
                 api_key: str | None = None, timeout: float = 60.0,
                 transport=None):
        self.model_id = model_id or os.environ.get(LLM_MODEL_ENV, "")
        self.url = url or os.environ.get(LLM_URL_ENV, "")
        self._api_key = api_key if api_key is not None else os.environ.get(LLM_KEY_ENV, "")
        self.timeout = timeout
        self._transport = transport
        if not self.url or not self.model_id:
            raise InvalidInput(
                f"remote chat provider needs {LLM_URL_ENV} and {LLM_MODEL_ENV}")

    def complete(self, messages: Sequence[Mapping[str, str]],
                 temperature: float) -> str:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {
            "model": self.model_id,
            "messages": list(messages),
            "temperature": temperature,
        }
        try:
            with httpx.Client(transport=self._transport,
                              timeout=self.timeout) as client:
                response = client.post(self.url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(
                f"chat request timed out after {self.timeout}s") from exc
        except httpx.HTTPError as exc:
            raise ProviderError(
                f"chat transport failure: {type(exc).__name__}",
                retryable=True) from exc
        if response.status_code >= 500:
            raise ProviderError(
                f"chat endpoint returned {response.status_code}", retryable=True)
        if response.status_code != 200:
            raise ProviderError(
                f"chat endpoint returned {response.status_code}", retryable=False)
        try:
            return str(response.json()["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(
                f"chat response malformed: {exc}", retryable=False) from exc


def _redacted(text: str) -> str:
    """Blank out any configured secret values before logging."""
    for env in (LLM_KEY_ENV, "REGJUDGE_EMBED_KEY"):
        secret = os.environ.get(env)
        if secret:
            text = text.replace(secret, "[REDACTED]")
    return text


def classify(provider: ChatProvider, bundle: PromptBundle, *,
             max_retries: int = 2, backoff: float = 0.0) -> ChatTranscript:
    """Run one classification call with bounded retries on transport faults."""
    prompt = bundle.prompt_text()
    messages = [{"role": "user", "content": prompt}]
    attempts = 0
    last_error: ProviderError | None = None
    while attempts < max_retries + 1:
        attempts += 1
        if attempts > 1 and backoff:
            time.sleep(backoff * (2 ** (attempts - 2)))
        try:
            raw = provider.complete(messages, bundle.temperature)
        except ProviderError as exc:
            last_error = exc
            logger.debug("classify attempt %d failed: %s",
                         attempts, _redacted(str(exc)))
            if not exc.retryable:
                break
            continue
        logger.debug("classify succeeded on attempt %d (%d chars)",
                     attempts, len(raw))
        return ChatTranscript(
            prompt=prompt, raw_response=raw, attempts=attempts,
            model_id=provider.model_id, temperature=bundle.temperature)
    assert last_error is not None
    raise last_error


_FENCE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*\n(.*?)\n\s*```\s*$", re.DOTALL)


def _repair(raw: str) -> str | None:
    """One deterministic repair pass: unfence, then trim to outer brackets."""
    candidate = raw.strip()
    fenced = _FENCE.match(candidate)
    if fenced:
        candidate = fenced.group(1).strip()
    start, end = candidate.find("["), candidate.rfind("]")
    if start != -1 and end > start:
        candidate = candidate[start:end + 1]
    return candidate if candidate != raw.strip() else None


@dataclass(frozen=True)
class ParsedJudgments:
    """Parse outcome: accepted judgments plus the dropped-item count."""

    judgments: list[ApplicabilityJudgment]
    dropped: int


def parse_judgments(raw: str,
                    candidates: Sequence[StandardRecord]) -> ParsedJudgments:
    """Decode a provider response into judgments against known candidates.

    Applies one repair pass (strip code fences, trim to the outermost
    array brackets) before giving up. Labels are closed-world; items
    whose id is unknown among the candidates are dropped and counted.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError:
        repaired = _repair(raw)
        if repaired is None:
            raise MalformedOutput("response is not valid JSON", raw=raw) from None
        try:
            data = json.loads(repaired)
        except json.JSONDecodeError:
            raise MalformedOutput(
                "response is not valid JSON after repair", raw=raw) from None
    if not isinstance(data, list):
        raise MalformedOutput("response JSON is not an array", raw=raw)
    if not data:
        raise NoJudgments()

    by_norm: dict[str, StandardRecord] = {}
    for record in candidates:
        by_norm.setdefault(record.norm_id, record)

    judgments: list[ApplicabilityJudgment] = []
    dropped = 0
    seen: set[tuple[str, Region]] = set()
    for item in data:
        if not isinstance(item, dict):
            raise MalformedOutput("array item is not an object", raw=raw)
        missing = [key for key in REQUIRED_OUTPUT_KEYS if key not in item]
        if missing:
            raise MalformedOutput(
                f"judgment object missing keys {missing}", raw=raw)
        try:
            label = parse_label(item["applicability"])
        except ValueError as exc:
            raise MalformedOutput(str(exc), raw=raw) from None
        standard_id = str(item["standard_id"])
        try:
            norm_id = normalize_standard_id(standard_id)
        except InvalidIdentifier:
            dropped += 1
            continue
        record = by_norm.get(norm_id)
        if record is None:
            dropped += 1
            continue
        key = (norm_id, record.region)
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        clause = item.get("clause")
        judgments.append(ApplicabilityJudgment(
            standard_id=standard_id,
            norm_id=norm_id,
            name=str(item.get("name") or ""),
            applicability=label,
            justification=str(item.get("justification") or ""),
            clause=None if clause is None else str(clause),
            region=record.region,
            provenance=Provenance.LLM,
        ))
    return ParsedJudgments(judgments, dropped)


def enrich_judgments(judgments: Iterable[ApplicabilityJudgment],
                     candidates: Sequence[StandardRecord], corpus, *,
                     language_preference: LanguagePreference = LanguagePreference.EN_FIRST,
                     ) -> ParsedJudgments:
    """Overwrite region/name/clause from the authoritative corpus record.

    Provider text is never trusted for metadata. Judgments whose norm_id
    resolves to no candidate-and-corpus record are dropped and counted.
    """
    candidate_map: dict[tuple[str, Region], StandardRecord] = {}
    by_norm_only: dict[str, list[StandardRecord]] = {}
    for record in candidates:
        candidate_map.setdefault((record.norm_id, record.region), record)
        by_norm_only.setdefault(record.norm_id, []).append(record)

    enriched: list[ApplicabilityJudgment] = []
    dropped = 0
    for judgment in judgments:
        record = None
        if judgment.region is not None:
            record = candidate_map.get((judgment.norm_id, judgment.region))
        if record is None:
            matches = by_norm_only.get(judgment.norm_id, [])
            record = matches[0] if len(matches) == 1 else None
        if record is None:
            dropped += 1
            continue
        authoritative = corpus.get(record.norm_id, record.region)
        if authoritative is None:
            dropped += 1
            continue
        enriched.append(replace(
            judgment,
            standard_id=authoritative.id,
            name=pick_title(authoritative, language_preference),
            clause=authoritative.clause,
            region=authoritative.region,
        ))
    return ParsedJudgments(enriched, dropped)


class _GoldRow(Protocol):
    standard_id: str
    norm_id: str
    applicability: ApplicabilityLabel
    justification: str


class _Sample(Protocol):
    device_id: str
    gold: Sequence[_GoldRow]


def pseudo_label_fallback(device_id: str,
                          gold_table: Sequence[_Sample]) -> list[ApplicabilityJudgment]:
    """Copy benchmark gold labels into judgments (evaluation-only path).

    Used by the metric-harness self-consistency tests; provenance is
    PseudoLabel and region is left unset since the benchmark does not
    carry one.
    """
    for sample in gold_table:
        if sample.device_id == device_id:
            return [
                ApplicabilityJudgment(
                    standard_id=row.standard_id,
                    norm_id=row.norm_id,
                    name="",
                    applicability=row.applicability,
                    justification=row.justification,
                    clause=None,
                    region=None,
                    provenance=Provenance.PSEUDO_LABEL,
                )
                for row in sample.gold
            ]
    raise NotFound(f"device_id {device_id!r} not present in the benchmark")
