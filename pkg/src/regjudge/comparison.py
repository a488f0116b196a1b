"""Cross-jurisdiction alignment, conflict detection, and the compliance matrix.

Judgments are grouped by normalized id (or by a curated equivalence map
entry when two jurisdictions number the same requirement differently),
then each group is checked for label conflicts, clause mismatches,
justification divergence, and region absence. The resulting matrix is
the audit output: JSON with stable key order, also renderable as CSV.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .corpus import Region
from .embedding import EmbeddingCache, EmbeddingProvider, cosine, embed_text
from .errors import DuplicateMember, InvalidInput, ParseError, ProviderError
from .reasoning import ApplicabilityJudgment, ApplicabilityLabel
from .text import normalize_text

__all__ = [
    "FlagKind",
    "AlignedGroup",
    "ConflictFlag",
    "ComplianceMatrix",
    "EquivalenceMap",
    "load_equivalence_map",
    "align_groups",
    "detect_conflicts",
    "build_matrix",
    "serialize_matrix",
    "parse_matrix",
    "matrix_to_csv",
    "DEFAULT_DIVERGENCE_THRESHOLD",
]

logger = logging.getLogger(__name__)

DEFAULT_DIVERGENCE_THRESHOLD = 0.75
MATRIX_SCHEMA_ID = "regjudge.matrix.v1"


class FlagKind:
    CONFLICT = "Conflict_Detected"
    CLAUSE_MISMATCH = "Clause_Mismatch"
    JUSTIFICATION_DIVERGENCE = "Justification_Divergence"

    ALL = (CONFLICT, CLAUSE_MISMATCH, JUSTIFICATION_DIVERGENCE)


@dataclass(frozen=True)
class AlignedGroup:
    """Judgments for one requirement, at most one per region."""

    key: str
    members: Mapping[Region, ApplicabilityJudgment]

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "members": {region.value: judgment.to_dict()
                        for region, judgment in sorted(
                            self.members.items(), key=lambda kv: kv[0].value)},
        }


@dataclass(frozen=True)
class ConflictFlag:
    kind: str
    group_key: str
    details: str
    similarity: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "group_key": self.group_key,
            "details": self.details,
            "similarity": self.similarity,
        }


@dataclass(frozen=True)
class ComplianceMatrix:
    """Region-aligned judgments with conflict flags; the unit of audit output."""

    device_text: str
    groups: tuple[AlignedGroup, ...]
    conflict_flags: tuple[ConflictFlag, ...]
    region_summaries: Mapping[str, Mapping[str, int]]
    recommendations: tuple[Mapping[str, Any], ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": MATRIX_SCHEMA_ID,
            "device_text": self.device_text,
            "groups": [g.to_dict() for g in self.groups],
            "conflict_flags": [f.to_dict() for f in self.conflict_flags],
            "region_summaries": {r: dict(c) for r, c in self.region_summaries.items()},
            "recommendations": [dict(r) for r in self.recommendations],
            "meta": dict(self.meta),
        }


class EquivalenceMap:
    """Curated cross-region id aliases: group_key -> {region: norm_id}."""

    def __init__(self, mapping: Mapping[str, Mapping[str, str]]):
        self.by_group: dict[str, dict[Region, str]] = {}
        self.norm_to_group: dict[str, str] = {}
        for group_key, members in mapping.items():
            resolved: dict[Region, str] = {}
            for region_raw, norm_id in members.items():
                region = Region(region_raw)
                if region in resolved:
                    raise ParseError(
                        f"equivalence group {group_key!r} lists region "
                        f"{region.value} twice")
                resolved[region] = str(norm_id)
                if str(norm_id) in self.norm_to_group:
                    raise ParseError(
                        f"norm_id {norm_id!r} appears in two equivalence groups")
                self.norm_to_group[str(norm_id)] = group_key
            self.by_group[group_key] = resolved

    def group_for(self, norm_id: str) -> str | None:
        return self.norm_to_group.get(norm_id)


def load_equivalence_map(path: str | Path) -> EquivalenceMap:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInput(f"cannot read equivalence map {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed equivalence JSON: {exc.msg}",
                         line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ParseError("equivalence map must be a JSON object")
    return EquivalenceMap(raw)


def align_groups(judgments: Sequence[ApplicabilityJudgment],
                 equivalence_map: EquivalenceMap | None = None,
                 ) -> list[AlignedGroup]:
    """Group judgments by norm_id (or mapped equivalence key), sorted by key."""
    staged: dict[str, dict[Region, ApplicabilityJudgment]] = {}
    for judgment in judgments:
        if judgment.region is None:
            raise InvalidInput(
                f"judgment {judgment.standard_id!r} has no region; "
                f"only enriched judgments can be aligned")
        key = judgment.norm_id
        if equivalence_map is not None:
            key = equivalence_map.group_for(judgment.norm_id) or key
        members = staged.setdefault(key, {})
        if judgment.region in members:
            raise DuplicateMember(
                f"group {key!r} already has a {judgment.region.value} member")
        members[judgment.region] = judgment
    return [AlignedGroup(key, dict(staged[key])) for key in sorted(staged)]


def detect_conflicts(groups: Sequence[AlignedGroup],
                     embed_provider: EmbeddingProvider,
                     divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD, *,
                     target_regions: Sequence[Region] = (Region.CN, Region.US),
                     cache: EmbeddingCache | None = None,
                     ) -> tuple[list[ConflictFlag], dict[str, Any]]:
    """Flag label conflicts, clause mismatches, divergence, and region gaps.

    Region absence counts as a conflict only when the run targets more
    than one region. An embedding-provider failure degrades gracefully:
    divergence checks are skipped and noted in the returned metadata.
    """
    targets = [Region(r) for r in target_regions]
    flags: list[ConflictFlag] = []
    meta: dict[str, Any] = {"divergence_checked": True,
                            "divergence_threshold": divergence_threshold}
    divergence_failures = 0

    for group in groups:
        regions = sorted(group.members, key=lambda r: r.value)
        members = [group.members[r] for r in regions]

        if len(regions) == 1 and len(targets) > 1:
            missing = [t for t in sorted(targets, key=lambda r: r.value)
                       if t not in group.members]
            if missing:
                flags.append(ConflictFlag(
                    kind=FlagKind.CONFLICT,
                    group_key=group.key,
                    details="absent in " + ", ".join(t.value for t in missing),
                ))
            continue

        if len(regions) < 2:
            continue

        labels = {m.applicability for m in members}
        if len(labels) > 1:
            described = ", ".join(
                f"{m.region.value}={m.applicability.value}" for m in members)
            flags.append(ConflictFlag(
                kind=FlagKind.CONFLICT,
                group_key=group.key,
                details=f"applicability differs: {described}",
            ))

        clauses = {(m.clause or "").strip() for m in members}
        if len(clauses) > 1:
            described = " vs ".join(
                f"{m.region.value} clause {(m.clause or '').strip()!r}"
                for m in members)
            flags.append(ConflictFlag(
                kind=FlagKind.CLAUSE_MISMATCH,
                group_key=group.key,
                details=described,
            ))

        justifications = [m.justification for m in members]
        if any(not normalize_text(j) for j in justifications):
            continue  # an empty justification has no embedding to compare
        try:
            vectors = [embed_text(embed_provider, j, cache) for j in justifications]
        except ProviderError as exc:
            divergence_failures += 1
            logger.warning("justification embedding failed for group %s: %s",
                           group.key, exc)
            continue
        similarity = min(
            cosine(vectors[i], vectors[j])
            for i in range(len(vectors)) for j in range(i + 1, len(vectors)))
        if similarity < divergence_threshold:
            flags.append(ConflictFlag(
                kind=FlagKind.JUSTIFICATION_DIVERGENCE,
                group_key=group.key,
                details=(f"justification similarity {similarity:.4f} below "
                         f"threshold {divergence_threshold}"),
                similarity=similarity,
            ))

    if divergence_failures:
        meta["divergence_checked"] = False
        meta["divergence_failures"] = divergence_failures
    return flags, meta


def build_matrix(device_text: str, groups: Sequence[AlignedGroup],
                 flags: Sequence[ConflictFlag], *,
                 recommendations: Sequence[Mapping[str, Any]] = (),
                 meta: Mapping[str, Any] | None = None) -> ComplianceMatrix:
    """Assemble the matrix with per-region label counts."""
    known_keys = {g.key for g in groups}
    for flag in flags:
        if flag.group_key not in known_keys:
            raise InvalidInput(
                f"flag references unknown group {flag.group_key!r}")
    summaries: dict[str, dict[str, int]] = {}
    for group in groups:
        for region, judgment in group.members.items():
            counts = summaries.setdefault(
                region.value, {label.value: 0 for label in ApplicabilityLabel})
            counts[judgment.applicability.value] += 1
    return ComplianceMatrix(
        device_text=device_text,
        groups=tuple(groups),
        conflict_flags=tuple(flags),
        region_summaries=summaries,
        recommendations=tuple(dict(r) for r in recommendations),
        meta=dict(meta or {}),
    )


def serialize_matrix(matrix: ComplianceMatrix) -> str:
    """Stable byte representation: sorted keys, two-space indent, newline end."""
    return json.dumps(matrix.to_dict(), sort_keys=True, ensure_ascii=False,
                      indent=2) + "\n"


def parse_matrix(text: str) -> ComplianceMatrix:
    from .reasoning import ApplicabilityJudgment as Judgment

    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed matrix JSON: {exc.msg}", line=exc.lineno) from exc
    if data.get("schema") != MATRIX_SCHEMA_ID:
        raise ParseError(f"unknown matrix schema {data.get('schema')!r}")
    groups = tuple(
        AlignedGroup(
            key=g["key"],
            members={Region(region): Judgment.from_dict(j)
                     for region, j in g["members"].items()},
        )
        for g in data.get("groups", ()))
    flags = tuple(
        ConflictFlag(kind=f["kind"], group_key=f["group_key"],
                     details=f["details"], similarity=f.get("similarity"))
        for f in data.get("conflict_flags", ()))
    return ComplianceMatrix(
        device_text=data.get("device_text", ""),
        groups=groups,
        conflict_flags=flags,
        region_summaries=data.get("region_summaries", {}),
        recommendations=tuple(data.get("recommendations", ())),
        meta=data.get("meta", {}),
    )


def matrix_to_csv(matrix: ComplianceMatrix) -> str:
    """Flat CSV, one row per group-region, for dossier tooling."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["group_key", "region", "standard_id", "name",
                     "applicability", "clause", "justification", "flags"])
    flags_by_group: dict[str, list[str]] = {}
    for flag in matrix.conflict_flags:
        flags_by_group.setdefault(flag.group_key, []).append(flag.kind)
    for group in matrix.groups:
        flag_text = ";".join(flags_by_group.get(group.key, []))
        for region in sorted(group.members, key=lambda r: r.value):
            judgment = group.members[region]
            writer.writerow([
                group.key, region.value, judgment.standard_id, judgment.name,
                judgment.applicability.value, judgment.clause or "",
                judgment.justification, flag_text,
            ])
    return buffer.getvalue()
