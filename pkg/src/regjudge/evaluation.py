"""Benchmark harness: gold data, metrics, baselines, significance testing.

The benchmark CSV has one row per (device, standard) pair:
``device_id,description,standard_id,applicability,justification``.
Metrics match on normalized ids only; denominators are documented on
each metric function since different systems disagree about them.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .corpus import Corpus, LanguagePreference, compose_segment_text, normalize_standard_id
from .embedding import EmbeddingCache, EmbeddingProvider, embed_text
from .errors import (
    EmptyBenchmark,
    InvalidIdentifier,
    InvalidInput,
    MalformedOutput,
    NoJudgments,
    ParseError,
)
from .reasoning import (
    ApplicabilityJudgment,
    ApplicabilityLabel,
    ChatProvider,
    Provenance,
    RegionMode,
    build_prompt,
    classify,
    enrich_judgments,
    parse_judgments,
    parse_label,
)
from .retrieval import (
    DEFAULT_WEIGHTS,
    SynonymDictionary,
    VectorIndex,
    build_index,
    hybrid_search,
    search_top_k,
)
from .stats import student_t_two_sided_p
from .text import tokenize

__all__ = [
    "GoldEntry",
    "BenchmarkSample",
    "MetricsReport",
    "TTestResult",
    "DEFAULT_BASELINE_LABEL",
    "load_benchmark",
    "top_k_recall",
    "applicability_accuracy",
    "sample_level_accuracy",
    "baseline_retrieval_only",
    "baseline_rule_based",
    "baseline_zero_shot",
    "paired_t_test",
    "evaluate_system",
    "SYSTEMS",
]

DEFAULT_BASELINE_LABEL = ApplicabilityLabel.RECOMMENDED
BENCHMARK_COLUMNS = ("device_id", "description", "standard_id",
                     "applicability", "justification")
SYSTEMS = ("rag", "retrieval", "rule", "zeroshot")
ZERO_SHOT_MAX_IDS = 3


@dataclass(frozen=True)
class GoldEntry:
    standard_id: str
    norm_id: str
    applicability: ApplicabilityLabel
    justification: str


@dataclass(frozen=True)
class BenchmarkSample:
    device_id: str
    description: str
    gold: tuple[GoldEntry, ...]


def load_benchmark(path: str | Path) -> list[BenchmarkSample]:
    """Group CSV rows by device_id, preserving file order; validate labels."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InvalidInput(f"cannot read benchmark file {path}: {exc}") from exc
    order: list[str] = []
    descriptions: dict[str, str] = {}
    gold: dict[str, list[GoldEntry]] = {}
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in BENCHMARK_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"benchmark header missing columns {missing}", line=1)
        for row in reader:
            line = reader.line_num
            device_id = (row.get("device_id") or "").strip()
            if not device_id:
                raise ParseError("row has empty device_id", line=line)
            try:
                label = parse_label(row.get("applicability") or "")
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            standard_id = (row.get("standard_id") or "").strip()
            try:
                norm_id = normalize_standard_id(standard_id)
            except InvalidIdentifier:
                raise ParseError(f"row has invalid standard_id {standard_id!r}",
                                 line=line) from None
            if device_id not in descriptions:
                order.append(device_id)
                descriptions[device_id] = (row.get("description") or "").strip()
            gold.setdefault(device_id, []).append(GoldEntry(
                standard_id=standard_id,
                norm_id=norm_id,
                applicability=label,
                justification=(row.get("justification") or "").strip(),
            ))
    if not order:
        raise EmptyBenchmark(f"benchmark file {path} has no data rows")
    return [BenchmarkSample(d, descriptions[d], tuple(gold[d])) for d in order]


def top_k_recall(predictions: Mapping[str, Sequence[str]],
                 samples: Sequence[BenchmarkSample], k: int) -> float:
    """Fraction of devices with >= 1 gold norm_id in their first k predictions.

    Denominator: every benchmark device; a device absent from
    ``predictions`` counts as a miss and emits a warning.
    """
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    if not samples:
        return 0.0
    hits = 0
    for sample in samples:
        predicted = predictions.get(sample.device_id)
        if predicted is None:
            warnings.warn(
                f"no predictions for device {sample.device_id!r}; counted as miss",
                RuntimeWarning, stacklevel=2)
            continue
        gold_ids = {g.norm_id for g in sample.gold}
        if any(norm_id in gold_ids for norm_id in list(predicted)[:k]):
            hits += 1
    return hits / len(samples)


def applicability_accuracy(judgments: Mapping[str, Sequence[ApplicabilityJudgment]],
                           samples: Sequence[BenchmarkSample]) -> float:
    """Per-gold-row label accuracy.

    Denominator: every gold row across all devices. A gold row with no
    predicted judgment of the same norm_id counts as wrong.
    """
    total = 0
    correct = 0
    for sample in samples:
        # Reversed build: the first judgment per norm_id wins on duplicates.
        predicted = {j.norm_id: j for j in
                     reversed(list(judgments.get(sample.device_id, ())))}
        for entry in sample.gold:
            total += 1
            hit = predicted.get(entry.norm_id)
            if hit is not None and hit.applicability is entry.applicability:
                correct += 1
    return correct / total if total else 0.0


def sample_level_accuracy(judgments: Mapping[str, Sequence[ApplicabilityJudgment]],
                          samples: Sequence[BenchmarkSample]) -> float:
    """Fraction of devices with at least one id-and-label-correct judgment."""
    if not samples:
        return 0.0
    hits = 0
    for sample in samples:
        predicted = {j.norm_id: j.applicability
                     for j in judgments.get(sample.device_id, ())}
        if any(predicted.get(g.norm_id) is g.applicability for g in sample.gold):
            hits += 1
    return hits / len(samples)


@dataclass(frozen=True)
class MetricsReport:
    """Four headline metrics plus a per-device breakdown."""

    system: str
    k: int
    top1_recall: float
    top5_recall: float
    applicability_accuracy: float
    sample_level_accuracy: float
    n_samples: int
    per_sample: tuple[Mapping[str, Any], ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": "regjudge.metrics.v1",
            "system": self.system,
            "k": self.k,
            "top1_recall": self.top1_recall,
            "top5_recall": self.top5_recall,
            "applicability_accuracy": self.applicability_accuracy,
            "sample_level_accuracy": self.sample_level_accuracy,
            "n_samples": self.n_samples,
            "per_sample": [dict(p) for p in self.per_sample],
        }

    def to_markdown(self) -> str:
        header = ("| System | Top-1 Recall | Top-5 Recall | "
                  "Applicability Accuracy | Sample-level Accuracy |")
        divider = "|---|---|---|---|---|"
        row = (f"| {self.system} | {self.top1_recall:.3f} | "
               f"{self.top5_recall:.3f} | {self.applicability_accuracy:.3f} | "
               f"{self.sample_level_accuracy:.3f} |")
        return "\n".join([header, divider, row])


def _compile_report(system: str, k: int, samples: Sequence[BenchmarkSample],
                    predictions: Mapping[str, Sequence[str]],
                    judgments: Mapping[str, Sequence[ApplicabilityJudgment]],
                    ) -> MetricsReport:
    per_sample: list[dict[str, Any]] = []
    for sample in samples:
        predicted_ids = list(predictions.get(sample.device_id, ()))
        gold_ids = {g.norm_id for g in sample.gold}
        labels = {j.norm_id: j.applicability
                  for j in judgments.get(sample.device_id, ())}
        correct_rows = sum(
            1 for g in sample.gold if labels.get(g.norm_id) is g.applicability)
        per_sample.append({
            "device_id": sample.device_id,
            "top1_hit": bool(predicted_ids) and predicted_ids[0] in gold_ids,
            "top5_hit": any(p in gold_ids for p in predicted_ids[:5]),
            "gold_rows": len(sample.gold),
            "label_correct_rows": correct_rows,
            "sample_hit": correct_rows > 0,
        })
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        top1 = top_k_recall(predictions, samples, 1)
        topk = top_k_recall(predictions, samples, max(k, 1))
    return MetricsReport(
        system=system,
        k=k,
        top1_recall=top1,
        top5_recall=topk,
        applicability_accuracy=applicability_accuracy(judgments, samples),
        sample_level_accuracy=sample_level_accuracy(judgments, samples),
        n_samples=len(samples),
        per_sample=tuple(per_sample),
    )


def _default_judgments(corpus: Corpus,
                       predictions: Mapping[str, Sequence[str]],
                       label: ApplicabilityLabel,
                       ) -> dict[str, list[ApplicabilityJudgment]]:
    """Label-free baselines get a constant label so label metrics apply."""
    out: dict[str, list[ApplicabilityJudgment]] = {}
    for device_id, norm_ids in predictions.items():
        rows: list[ApplicabilityJudgment] = []
        for norm_id in norm_ids:
            matches = corpus.find(norm_id)
            if not matches:
                continue
            record = matches[0]
            rows.append(ApplicabilityJudgment(
                standard_id=record.id,
                norm_id=record.norm_id,
                name=record.title_en or record.title_cn or "",
                applicability=label,
                justification="baseline default label",
                clause=record.clause,
                region=record.region,
                provenance=Provenance.BASELINE,
            ))
        out[device_id] = rows
    return out


def baseline_retrieval_only(corpus: Corpus, index: VectorIndex,
                            samples: Sequence[BenchmarkSample], k: int, *,
                            provider: EmbeddingProvider,
                            cache: EmbeddingCache | None = None,
                            default_label: ApplicabilityLabel = DEFAULT_BASELINE_LABEL,
                            ) -> tuple[dict[str, list[str]],
                                       dict[str, list[ApplicabilityJudgment]]]:
    """Dense top-k retrieval with a constant applicability label."""
    predictions: dict[str, list[str]] = {}
    for sample in samples:
        query_vector = embed_text(provider, sample.description, cache)
        candidates = search_top_k(index, query_vector, k)
        predictions[sample.device_id] = [c.norm_id for c in candidates]
    return predictions, _default_judgments(corpus, predictions, default_label)


def baseline_rule_based(corpus: Corpus, samples: Sequence[BenchmarkSample],
                        k: int, *,
                        language_preference: LanguagePreference = LanguagePreference.EN_FIRST,
                        ) -> dict[str, list[str]]:
    """Rank standards by raw token-overlap count; no expansion, no ID bonus."""
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    record_tokens = [
        (record.norm_id, set(tokenize(compose_segment_text(record, language_preference))))
        for record in corpus
    ]
    predictions: dict[str, list[str]] = {}
    for sample in samples:
        query_tokens = set(tokenize(sample.description))
        scored = sorted(
            ((len(query_tokens & tokens), norm_id)
             for norm_id, tokens in record_tokens),
            key=lambda pair: (-pair[0], pair[1]))
        predictions[sample.device_id] = [norm_id for _, norm_id in scored[:k]]
    return predictions


def _zero_shot_prompt(description: str, allowed_ids: Sequence[str]) -> str:
    return (
        "You are a regulatory affairs analyst for medical devices.\n\n"
        f"Device description:\n{description}\n\n"
        f"Identify up to {ZERO_SHOT_MAX_IDS} relevant regulatory standards "
        "for this device and label each as \"Mandatory\", \"Recommended\", "
        "or \"Not Applicable\". You may only reference ids from this list:\n"
        + "; ".join(allowed_ids) + "\n\n"
        "Return only a JSON array in which every object has exactly these "
        "keys: standard_id, applicability, justification, clause.")


def baseline_zero_shot(provider: ChatProvider,
                       samples: Sequence[BenchmarkSample], corpus: Corpus, *,
                       max_ids: int = ZERO_SHOT_MAX_IDS,
                       temperature: float = 0.0,
                       ) -> dict[str, list[ApplicabilityJudgment]]:
    """No-retrieval baseline: the provider sees only an allowed-id list.

    Responses are parsed with the standard judgment parser, so unknown
    ids are dropped; anything beyond ``max_ids`` judgments is truncated.
    Unparseable or empty responses yield an empty list for that device.
    """
    allowed_ids = [record.id for record in corpus]
    judgments: dict[str, list[ApplicabilityJudgment]] = {}
    for sample in samples:
        prompt = _zero_shot_prompt(sample.description, allowed_ids)
        raw = provider.complete([{"role": "user", "content": prompt}], temperature)
        try:
            parsed = parse_judgments(raw, list(corpus))
        except (MalformedOutput, NoJudgments):
            judgments[sample.device_id] = []
            continue
        judgments[sample.device_id] = parsed.judgments[:max_ids]
    return judgments


@dataclass(frozen=True)
class TTestResult:
    t_value: float
    p_value: float
    n: int
    degenerate: bool

    def to_dict(self) -> dict[str, Any]:
        return {"t_value": self.t_value, "p_value": self.p_value,
                "n": self.n, "degenerate": self.degenerate}


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Classic paired t-test: t = mean(d) / (sd(d) / sqrt(n)), sample sd.

    Zero-variance differences are reported with the degenerate flag
    (t=0, p=1) instead of a division error.
    """
    if len(a) != len(b):
        raise InvalidInput(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise InvalidInput(f"paired t-test needs n >= 2, got {n}")
    differences = [float(x) - float(y) for x, y in zip(a, b)]
    mean = math.fsum(differences) / n
    variance = math.fsum((d - mean) ** 2 for d in differences) / (n - 1)
    if variance == 0.0:
        return TTestResult(t_value=0.0, p_value=1.0, n=n, degenerate=True)
    t = mean / math.sqrt(variance / n)
    p = student_t_two_sided_p(t, n - 1)
    return TTestResult(t_value=t, p_value=p, n=n, degenerate=False)


def evaluate_system(system: str, samples: Sequence[BenchmarkSample],
                    corpus: Corpus, *,
                    embed_provider: EmbeddingProvider,
                    chat_provider: ChatProvider | None = None,
                    index: VectorIndex | None = None,
                    k: int = 5,
                    weights: Mapping[str, float] = DEFAULT_WEIGHTS,
                    synonyms: SynonymDictionary | None = None,
                    cache: EmbeddingCache | None = None,
                    language_preference: LanguagePreference = LanguagePreference.EN_FIRST,
                    ) -> MetricsReport:
    """Score one system on the benchmark and return the four metrics.

    Systems: ``rag`` (hybrid retrieval + classification), ``retrieval``
    (dense-only, constant label), ``rule`` (token overlap, constant
    label), ``zeroshot`` (no retrieval, allowed-id prompt).
    """
    if system not in SYSTEMS:
        raise InvalidInput(f"unknown system {system!r}; expected one of {SYSTEMS}")
    if not samples:
        raise EmptyBenchmark("no benchmark samples to evaluate")

    if system in ("rag", "retrieval") and index is None:
        index = build_index(corpus, embed_provider,
                            language_preference=language_preference, cache=cache)

    predictions: dict[str, list[str]] = {}
    judgments: dict[str, list[ApplicabilityJudgment]] = {}

    if system == "retrieval":
        predictions, judgments = baseline_retrieval_only(
            corpus, index, samples, k, provider=embed_provider, cache=cache)
    elif system == "rule":
        predictions = baseline_rule_based(
            corpus, samples, k, language_preference=language_preference)
        judgments = _default_judgments(corpus, predictions, DEFAULT_BASELINE_LABEL)
    elif system == "zeroshot":
        if chat_provider is None:
            raise InvalidInput("zeroshot evaluation needs a chat provider")
        judgments = baseline_zero_shot(chat_provider, samples, corpus)
        predictions = {device: [j.norm_id for j in rows]
                       for device, rows in judgments.items()}
    else:  # rag
        if chat_provider is None:
            raise InvalidInput("rag evaluation needs a chat provider")
        for sample in samples:
            candidates = hybrid_search(
                index, corpus, sample.description, k, weights,
                provider=embed_provider, synonyms=synonyms, cache=cache)
            predictions[sample.device_id] = [c.norm_id for c in candidates]
            records = []
            for candidate in candidates:
                record = corpus.get(candidate.norm_id, candidate.region)
                if record is not None:
                    records.append((record, candidate))
            if not records:
                judgments[sample.device_id] = []
                continue
            mode = (RegionMode.CROSS
                    if len({r.region for r, _ in records}) > 1 else RegionMode.SINGLE)
            bundle = build_prompt(sample.description, records, mode)
            transcript = classify(chat_provider, bundle)
            try:
                parsed = parse_judgments(
                    transcript.raw_response, [r for r, _ in records])
            except (MalformedOutput, NoJudgments):
                judgments[sample.device_id] = []
                continue
            enriched = enrich_judgments(
                parsed.judgments, [r for r, _ in records], corpus,
                language_preference=language_preference)
            judgments[sample.device_id] = enriched.judgments

    return _compile_report(system, k, samples, predictions, judgments)
