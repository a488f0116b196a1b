"""Rule-augmented recommendation engine.

Rules live in a versioned JSON file and are evaluated in file order.
Triggers are declarative matchers over judgment fields, device-text
keywords, and conflict flags — no rule logic is expressed in code, so
the rule base can grow without a release.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .comparison import ComplianceMatrix, FlagKind
from .corpus import Region
from .errors import RuleConfigError
from .reasoning import ApplicabilityJudgment

__all__ = [
    "RecommendationKind",
    "AdviceRule",
    "Recommendation",
    "RuleSet",
    "load_rules",
    "default_rules",
    "suggest",
    "follow_up",
]


class RecommendationKind:
    CONFORMITY_TESTING = "ConformityTesting"
    SUPPLEMENTARY_STANDARD = "SupplementaryStandard"
    REGULATORY_PATHWAY = "RegulatoryPathway"
    CONFLICT_RESOLUTION = "ConflictResolution"

    ALL = (CONFORMITY_TESTING, SUPPLEMENTARY_STANDARD,
           REGULATORY_PATHWAY, CONFLICT_RESOLUTION)


_TRIGGER_KEYS = {"judgment", "device_keywords", "flag_kind",
                 "no_conflicts_target_region"}


@dataclass(frozen=True)
class AdviceRule:
    """One declarative rule: trigger conditions, advice text, references."""

    id: str
    kind: str
    trigger: Mapping[str, Any]
    action_text: str
    references: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "trigger": dict(self.trigger),
            "action_text": self.action_text,
            "references": list(self.references),
        }


@dataclass(frozen=True)
class Recommendation:
    kind: str
    text: str
    triggered_by: str
    related: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "text": self.text,
            "triggered_by": self.triggered_by,
            "related": list(self.related),
        }


class RuleSet:
    """Ordered, validated rule collection."""

    def __init__(self, rules: Sequence[AdviceRule]):
        self.rules: tuple[AdviceRule, ...] = tuple(rules)
        ids = [r.id for r in self.rules]
        if len(ids) != len(set(ids)):
            raise RuleConfigError("rule ids must be unique")

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def without(self, rule_id: str) -> "RuleSet":
        return RuleSet([r for r in self.rules if r.id != rule_id])


def _validate_rule(obj: Mapping[str, Any], position: int) -> AdviceRule:
    for key in ("id", "kind", "trigger", "action_text"):
        if key not in obj:
            raise RuleConfigError(f"rule at position {position} missing {key!r}")
    if obj["kind"] not in RecommendationKind.ALL:
        raise RuleConfigError(
            f"rule {obj['id']!r} has unknown kind {obj['kind']!r}")
    trigger = obj["trigger"]
    if not isinstance(trigger, Mapping) or not trigger:
        raise RuleConfigError(f"rule {obj['id']!r} trigger must be a non-empty object")
    unknown = set(trigger) - _TRIGGER_KEYS
    if unknown:
        raise RuleConfigError(
            f"rule {obj['id']!r} has unknown trigger keys {sorted(unknown)}")
    references = obj.get("references", [])
    if not isinstance(references, list):
        raise RuleConfigError(f"rule {obj['id']!r} references must be a list")
    return AdviceRule(
        id=str(obj["id"]),
        kind=str(obj["kind"]),
        trigger=dict(trigger),
        action_text=str(obj["action_text"]),
        references=tuple(str(r) for r in references),
    )


def load_rules(path: str | Path) -> RuleSet:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise RuleConfigError(f"cannot read rule file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RuleConfigError(f"rule file is not valid JSON: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise RuleConfigError("rule file must be a JSON array")
    return RuleSet([_validate_rule(obj, i) for i, obj in enumerate(raw)])


def default_rules() -> RuleSet:
    raw = resources.files("regjudge.data").joinpath("rules.json").read_text("utf-8")
    return RuleSet([_validate_rule(obj, i)
                    for i, obj in enumerate(json.loads(raw))])


def _keyword_present(keyword: str, device_text: str) -> bool:
    return re.search(rf"(?<!\w){re.escape(keyword.lower())}(?!\w)",
                     device_text.lower()) is not None


def _judgment_matches(condition: Mapping[str, Any],
                      judgment: ApplicabilityJudgment) -> bool:
    if "region" in condition:
        if judgment.region is None or judgment.region.value != condition["region"]:
            return False
    if "applicability" in condition:
        if judgment.applicability.value != condition["applicability"]:
            return False
    return True


def _dedupe(recommendations: Sequence[Recommendation]) -> list[Recommendation]:
    seen: set[tuple[str, str]] = set()
    out: list[Recommendation] = []
    for rec in recommendations:
        key = (rec.kind, rec.text)
        if key not in seen:
            seen.add(key)
            out.append(rec)
    return out


def suggest(judgments: Sequence[ApplicabilityJudgment], device_text: str,
            regions: Sequence[Region] = (Region.CN, Region.US), *,
            rules: RuleSet | None = None) -> list[Recommendation]:
    """Fire judgment- and keyword-triggered rules against one device run.

    Only judgments inside the target regions can trigger rules;
    region-less pseudo-label judgments are considered everywhere.
    """
    active = rules if rules is not None else default_rules()
    targets = {Region(r) for r in regions}
    in_scope = [j for j in judgments
                if j.region is None or j.region in targets]
    fired: list[Recommendation] = []
    for rule in active:
        trigger = rule.trigger
        if "flag_kind" in trigger or "no_conflicts_target_region" in trigger:
            continue  # matrix-level triggers belong to follow_up
        matched_ids: list[str] = []
        ok = True
        if "judgment" in trigger:
            hits = [j for j in in_scope
                    if _judgment_matches(trigger["judgment"], j)]
            if hits:
                matched_ids.extend(j.standard_id for j in hits)
            else:
                ok = False
        if ok and "device_keywords" in trigger:
            if not any(_keyword_present(k, device_text)
                       for k in trigger["device_keywords"]):
                ok = False
        if ok:
            related = tuple(rule.references) or tuple(dict.fromkeys(matched_ids))
            fired.append(Recommendation(
                kind=rule.kind, text=rule.action_text,
                triggered_by=rule.id, related=related))
    return _dedupe(fired)


def follow_up(matrix: ComplianceMatrix,
              target_regions: Sequence[Region] = (Region.CN, Region.US), *,
              rules: RuleSet | None = None) -> list[Recommendation]:
    """Fire matrix-level rules: conflict resolution and pathway advice."""
    active = rules if rules is not None else default_rules()
    targets = {Region(r).value for r in target_regions}
    conflict_groups = sorted({
        flag.group_key for flag in matrix.conflict_flags
        if flag.kind == FlagKind.CONFLICT})
    fired: list[Recommendation] = []
    for rule in active:
        trigger = rule.trigger
        if "flag_kind" in trigger:
            kinds = {flag.kind for flag in matrix.conflict_flags}
            if trigger["flag_kind"] in kinds:
                related = tuple(rule.references) or tuple(sorted({
                    flag.group_key for flag in matrix.conflict_flags
                    if flag.kind == trigger["flag_kind"]}))
                fired.append(Recommendation(
                    kind=rule.kind, text=rule.action_text,
                    triggered_by=rule.id, related=related))
        elif "no_conflicts_target_region" in trigger:
            wanted = trigger["no_conflicts_target_region"]
            if (wanted in targets and matrix.groups and not conflict_groups):
                fired.append(Recommendation(
                    kind=rule.kind, text=rule.action_text,
                    triggered_by=rule.id, related=tuple(rule.references)))
    return _dedupe(fired)
