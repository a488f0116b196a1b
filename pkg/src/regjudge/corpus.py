"""Standards corpus: loading, validation, ID normalization, text composition.

The corpus file is a UTF-8 JSON array of record objects in a unified
snake_case schema. Flat export shapes are also accepted on load:
``name``/``scope``/``org`` map onto the title/scope/organization fields
(EN side for US records, CN side for CN records). Canonical
serialization always uses the unified names.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from .errors import CorpusReadError, InvalidIdentifier, ParseError
from .text import canonical_json, pretty_json, sha256_hex

__all__ = [
    "Region",
    "LanguagePreference",
    "StandardRecord",
    "RejectedRecord",
    "Corpus",
    "normalize_standard_id",
    "load_corpus",
    "parse_records",
    "compose_segment_text",
    "pick_title",
]


class Region(str, Enum):
    CN = "CN"
    US = "US"


class LanguagePreference(str, Enum):
    EN_FIRST = "EN_FIRST"
    CN_FIRST = "CN_FIRST"


_EDITION_SUFFIX = re.compile(r":\d{4}$")
_YEAR_SUFFIX = re.compile(r"-\d{4}$")


def normalize_standard_id(raw: str) -> str:
    """Collapse a published standard identifier to its lookup key.

    Lowercases, removes all whitespace and "/", then strips one trailing
    ":YYYY" edition marker and one trailing "-YYYY" year suffix. Dots are
    preserved so CFR clause numbers stay intact.

    >>> normalize_standard_id("YY 0667-2008")
    'yy0667'
    >>> normalize_standard_id("21 CFR 862.1345")
    '21cfr862.1345'
    """
    if raw is None or not raw.strip():
        raise InvalidIdentifier("standard id is empty")
    s = unicodedata.normalize("NFKC", raw)
    s = "".join(s.split()).replace("/", "").lower()
    s = _EDITION_SUFFIX.sub("", s)
    s = _YEAR_SUFFIX.sub("", s)
    if not s:
        raise InvalidIdentifier(f"standard id {raw!r} normalizes to an empty string")
    return s


@dataclass(frozen=True)
class StandardRecord:
    """One regulatory standard with bilingual metadata."""

    id: str
    norm_id: str
    region: Region
    source_text: str
    title_cn: str | None = None
    title_en: str | None = None
    scope_cn: str | None = None
    scope_en: str | None = None
    usage_condition: str | None = None
    limitation: str | None = None
    status: str = ""
    dates: Mapping[str, str] | None = None
    organization: str = ""
    technical_field: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()
    clause: str | None = None
    url: str | None = None

    @property
    def is_repealed(self) -> bool:
        return self.status.strip().lower() == "repealed"

    def to_dict(self) -> dict[str, Any]:
        """Unified-schema dict; optional fields omitted when absent."""
        out: dict[str, Any] = {
            "id": self.id,
            "norm_id": self.norm_id,
            "region": self.region.value,
            "source_text": self.source_text,
            "status": self.status,
            "organization": self.organization,
            "technical_field": list(self.technical_field),
            "tags": list(self.tags),
        }
        for key in ("title_cn", "title_en", "scope_cn", "scope_en",
                    "usage_condition", "limitation", "clause", "url"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.dates is not None:
            out["dates"] = dict(self.dates)
        return out


@dataclass(frozen=True)
class RejectedRecord:
    """A source object that failed validation, kept for the reject report."""

    index: int
    id: str | None
    reason: str

    def to_dict(self) -> dict[str, Any]:
        return {"index": self.index, "id": self.id, "reason": self.reason}


class Corpus:
    """Immutable ordered collection of records with a (norm_id, region) map."""

    def __init__(self, records: Sequence[StandardRecord], source_path: str = ""):
        self.records: tuple[StandardRecord, ...] = tuple(records)
        self.source_path = source_path
        self.by_norm_id: dict[tuple[str, Region], int] = {}
        for i, rec in enumerate(self.records):
            key = (rec.norm_id, rec.region)
            if key in self.by_norm_id:
                raise InvalidIdentifier(
                    f"duplicate (norm_id, region) {key} at record {i}")
            self.by_norm_id[key] = i

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[StandardRecord]:
        return iter(self.records)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Corpus) and self.records == other.records

    def get(self, norm_id: str, region: Region | str) -> StandardRecord | None:
        idx = self.by_norm_id.get((norm_id, Region(region)))
        return None if idx is None else self.records[idx]

    def find(self, norm_id: str) -> list[StandardRecord]:
        """All records sharing a norm_id, across regions, in file order."""
        return [r for r in self.records if r.norm_id == norm_id]

    def content_hash(self) -> str:
        """SHA-256 over the canonical serialization of all records."""
        return sha256_hex(canonical_json([r.to_dict() for r in self.records]))

    def to_json(self) -> str:
        return pretty_json([r.to_dict() for r in self.records])


def _as_opt_str(value: Any) -> str | None:
    if value is None:
        return None
    s = str(value).strip()
    return s or None


def _coerce_record(obj: Mapping[str, Any]) -> StandardRecord:
    """Map one source object to a StandardRecord or raise ValueError."""
    raw_id = _as_opt_str(obj.get("id"))
    if raw_id is None:
        raise ValueError("missing id")

    region_raw = _as_opt_str(obj.get("region"))
    if region_raw is None:
        raise ValueError("missing region")
    try:
        region = Region(region_raw.upper())
    except ValueError:
        raise ValueError(f"invalid region {region_raw!r}") from None

    # Flat-export aliases land on the side matching the record's region.
    title_cn = _as_opt_str(obj.get("title_cn"))
    title_en = _as_opt_str(obj.get("title_en"))
    scope_cn = _as_opt_str(obj.get("scope_cn"))
    scope_en = _as_opt_str(obj.get("scope_en"))
    alias_title = _as_opt_str(obj.get("name"))
    alias_scope = _as_opt_str(obj.get("scope"))
    if alias_title is not None:
        if region is Region.US and title_en is None:
            title_en = alias_title
        elif region is Region.CN and title_cn is None:
            title_cn = alias_title
    if alias_scope is not None:
        if region is Region.US and scope_en is None:
            scope_en = alias_scope
        elif region is Region.CN and scope_cn is None:
            scope_cn = alias_scope

    if title_cn is None and title_en is None:
        raise ValueError("missing title")

    source_text = _as_opt_str(obj.get("source_text"))
    if source_text is None:
        raise ValueError("missing source_text")

    try:
        norm_id = normalize_standard_id(raw_id)
    except InvalidIdentifier as exc:
        raise ValueError(str(exc)) from None

    organization = _as_opt_str(obj.get("organization")) or _as_opt_str(obj.get("org")) or ""

    dates = obj.get("dates")
    if dates is not None and not isinstance(dates, Mapping):
        raise ValueError("dates must be an object")

    def _str_list(key: str) -> tuple[str, ...]:
        value = obj.get(key) or []
        if not isinstance(value, (list, tuple)):
            raise ValueError(f"{key} must be a list")
        return tuple(str(v) for v in value)

    return StandardRecord(
        id=raw_id,
        norm_id=norm_id,
        region=region,
        source_text=source_text,
        title_cn=title_cn,
        title_en=title_en,
        scope_cn=scope_cn,
        scope_en=scope_en,
        usage_condition=_as_opt_str(obj.get("usage_condition")),
        limitation=_as_opt_str(obj.get("limitation")),
        status=_as_opt_str(obj.get("status")) or "",
        dates={str(k): str(v) for k, v in dates.items()} if dates else None,
        organization=organization,
        technical_field=_str_list("technical_field"),
        tags=_str_list("tags"),
        clause=_as_opt_str(obj.get("clause")),
        url=_as_opt_str(obj.get("url")),
    )


def parse_records(raw: Any, source_path: str = "") -> tuple[Corpus, list[RejectedRecord]]:
    """Validate a decoded JSON value into a corpus plus reject report."""
    if not isinstance(raw, list):
        raise ParseError("corpus file must contain a JSON array")
    accepted: list[StandardRecord] = []
    rejects: list[RejectedRecord] = []
    seen: set[tuple[str, Region]] = set()
    for index, obj in enumerate(raw):
        if not isinstance(obj, Mapping):
            rejects.append(RejectedRecord(index, None, "record is not an object"))
            continue
        try:
            rec = _coerce_record(obj)
        except ValueError as exc:
            rejects.append(RejectedRecord(index, _as_opt_str(obj.get("id")), str(exc)))
            continue
        key = (rec.norm_id, rec.region)
        if key in seen:
            rejects.append(RejectedRecord(
                index, rec.id, f"duplicate (norm_id, region) {key}"))
            continue
        seen.add(key)
        accepted.append(rec)
    return Corpus(accepted, source_path=source_path), rejects


def load_corpus(path: str | Path) -> tuple[Corpus, list[RejectedRecord]]:
    """Load a corpus file; invalid records are returned, never dropped silently."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusReadError(f"cannot read corpus file {p}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {p}: {exc.msg}", line=exc.lineno) from exc
    return parse_records(raw, source_path=str(p))


def pick_title(record: StandardRecord,
               preference: LanguagePreference = LanguagePreference.EN_FIRST) -> str:
    """Preferred-language title with fallback to the other language."""
    if preference is LanguagePreference.CN_FIRST:
        return record.title_cn or record.title_en or ""
    return record.title_en or record.title_cn or ""


def compose_segment_text(record: StandardRecord,
                         language_preference: LanguagePreference = LanguagePreference.EN_FIRST,
                         ) -> str:
    """Concatenate title, scope, usage condition, limitation for embedding.

    Absent segments are skipped; an all-absent record falls back to its
    source_text, so the result is never empty.
    """
    if language_preference is LanguagePreference.CN_FIRST:
        scope = record.scope_cn or record.scope_en
    else:
        scope = record.scope_en or record.scope_cn
    segments = [
        pick_title(record, language_preference) or None,
        scope,
        record.usage_condition,
        record.limitation,
    ]
    text = "\n".join(s for s in segments if s)
    return text if text else record.source_text
