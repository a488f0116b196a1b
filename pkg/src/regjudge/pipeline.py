"""End-to-end orchestration: perception through advice, with run artifacts.

A run executes six stages — perception (query embedding), retrieval
(per-region hybrid search), reasoning (one provider call per region),
comparison, advice, and output assembly. Everything needed to audit or
replay the run is captured in a content-addressed RunArtifact persisted
as JSON under the run root.
"""

from __future__ import annotations

import difflib
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .advice import RuleSet, default_rules, follow_up, load_rules, suggest
from .comparison import (
    ComplianceMatrix,
    EquivalenceMap,
    align_groups,
    build_matrix,
    detect_conflicts,
    load_equivalence_map,
    serialize_matrix,
)
from .corpus import Corpus, LanguagePreference, Region
from .embedding import (
    EmbeddingCache,
    EmbeddingProvider,
    HashingEmbeddingProvider,
    RemoteEmbeddingProvider,
    embed_text,
)
from .errors import (
    IntegrityError,
    InvalidInput,
    ReplayError,
    ReplayMismatch,
    StageError,
)
from .reasoning import (
    ApplicabilityJudgment,
    ChatProvider,
    ChatTranscript,
    CueChatProvider,
    RegionMode,
    RemoteChatProvider,
    ScriptedChatProvider,
    build_prompt,
    classify,
    enrich_judgments,
    parse_judgments,
)
from .retrieval import (
    DEFAULT_WEIGHTS,
    RetrievalCandidate,
    SynonymDictionary,
    VectorIndex,
    hybrid_search,
    load_synonyms,
)
from .text import canonical_json, sha256_hex

__all__ = [
    "RunConfig",
    "RunArtifact",
    "ArtifactStore",
    "load_config",
    "make_embedding_provider",
    "make_chat_provider",
    "judge_device",
    "replay",
    "ARTIFACT_SCHEMA_ID",
]

ARTIFACT_SCHEMA_ID = "regjudge.artifact.v1"
STAGES = ("perception", "retrieval", "reasoning", "comparison", "advice", "output")


@dataclass(frozen=True)
class RunConfig:
    """Everything that parameterizes one judged run."""

    regions: tuple[str, ...] = ("CN", "US")
    k: int = 5
    weights: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_WEIGHTS))
    divergence_threshold: float = 0.75
    embed_provider: str = "hash:64"
    chat_provider: str = "cue"
    language_preference: str = "EN_FIRST"
    temperature: float = 0.3
    max_candidates: int = 10
    max_retries: int = 2
    status_filter: str | None = None
    synonyms_path: str | None = None
    rules_path: str | None = None
    equivalence_path: str | None = None
    run_dir: str = "runs"
    cache_dir: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInput(f"k must be >= 1, got {self.k}")
        if not self.regions:
            raise InvalidInput("at least one target region is required")
        try:
            regions = tuple(sorted({Region(r).value for r in self.regions}))
        except ValueError as exc:
            raise InvalidInput(str(exc)) from exc
        object.__setattr__(self, "regions", regions)
        w_dense = float(self.weights.get("dense", 0.0))
        w_keyword = float(self.weights.get("keyword", 0.0))
        if w_dense < 0 or w_keyword < 0 or w_dense + w_keyword <= 0:
            raise InvalidInput(f"invalid fusion weights {dict(self.weights)!r}")
        try:
            LanguagePreference(self.language_preference)
        except ValueError as exc:
            raise InvalidInput(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return {
            "regions": list(self.regions),
            "k": self.k,
            "weights": dict(self.weights),
            "divergence_threshold": self.divergence_threshold,
            "embed_provider": self.embed_provider,
            "chat_provider": self.chat_provider,
            "language_preference": self.language_preference,
            "temperature": self.temperature,
            "max_candidates": self.max_candidates,
            "max_retries": self.max_retries,
            "status_filter": self.status_filter,
            "synonyms_path": self.synonyms_path,
            "rules_path": self.rules_path,
            "equivalence_path": self.equivalence_path,
            "run_dir": self.run_dir,
            "cache_dir": self.cache_dir,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}  # noqa: C416
        kwargs = {k: v for k, v in data.items() if k in known}
        if "regions" in kwargs:
            kwargs["regions"] = tuple(kwargs["regions"])
        return cls(**kwargs)


def load_config(path: str | Path) -> RunConfig:
    """Read a JSON or TOML config file into a RunConfig."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".toml":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise InvalidInput(f"config file {p} must contain an object/table")
    return RunConfig.from_dict(data)


def make_embedding_provider(spec: str) -> EmbeddingProvider:
    """Build an embedding provider from a config spec string.

    ``hash:<dim>`` is the offline deterministic provider;
    ``remote:<model>:<dim>`` targets the configured HTTP endpoint.
    """
    parts = spec.split(":")
    if parts[0] == "hash":
        dimension = int(parts[1]) if len(parts) > 1 else 64
        return HashingEmbeddingProvider(dimension)
    if parts[0] == "remote":
        if len(parts) < 3:
            raise InvalidInput(
                f"remote embed spec must be remote:<model>:<dim>, got {spec!r}")
        return RemoteEmbeddingProvider(parts[1], int(parts[2]))
    raise InvalidInput(f"unknown embedding provider spec {spec!r}")


def make_chat_provider(spec: str) -> ChatProvider:
    """Build a chat provider from a config spec string.

    ``cue`` is the deterministic offline mock; ``scripted:<path>`` plays
    back a JSON array of canned responses; ``remote`` or
    ``remote:<model>`` targets the configured HTTP endpoint.
    """
    if spec == "cue":
        return CueChatProvider()
    if spec.startswith("scripted:"):
        script_path = spec.split(":", 1)[1]
        responses = json.loads(Path(script_path).read_text(encoding="utf-8"))
        if not isinstance(responses, list):
            raise InvalidInput(f"script file {script_path} must be a JSON array")
        return ScriptedChatProvider([str(r) for r in responses])
    if spec == "remote" or spec.startswith("remote:"):
        model = spec.split(":", 1)[1] if ":" in spec else None
        return RemoteChatProvider(model)
    raise InvalidInput(f"unknown chat provider spec {spec!r}")


@dataclass(frozen=True)
class RunArtifact:
    """Serialized record of one run; the id is a hash of everything
    except the id itself and the timings."""

    artifact_id: str
    config: Mapping[str, Any]
    device_text: str
    retrieval: Mapping[str, Sequence[RetrievalCandidate]]
    transcripts: Mapping[str, ChatTranscript]
    judgments: tuple[ApplicabilityJudgment, ...]
    dropped: Mapping[str, int]
    matrix: ComplianceMatrix
    timings: Mapping[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": ARTIFACT_SCHEMA_ID,
            "artifact_id": self.artifact_id,
            "config": dict(self.config),
            "device_text": self.device_text,
            "retrieval": {region: [c.to_dict() for c in candidates]
                          for region, candidates in self.retrieval.items()},
            "transcripts": {region: t.to_dict()
                            for region, t in self.transcripts.items()},
            "judgments": [j.to_dict() for j in self.judgments],
            "dropped": dict(self.dropped),
            "matrix": self.matrix.to_dict(),
            "timings": dict(self.timings),
        }


def artifact_fingerprint(data: Mapping[str, Any]) -> str:
    """Content hash of an artifact dict, ignoring id and timings."""
    trimmed = {k: v for k, v in data.items()
               if k not in ("artifact_id", "timings")}
    return sha256_hex(canonical_json(trimmed))


def _artifact_from_dict(data: Mapping[str, Any]) -> RunArtifact:
    from .comparison import parse_matrix

    retrieval = {
        region: [RetrievalCandidate(
            norm_id=c["norm_id"], region=Region(c["region"]),
            dense_score=c["dense_score"], keyword_score=c["keyword_score"],
            final_score=c["final_score"], rank=c["rank"],
            rerank_score=c.get("rerank_score"),
        ) for c in candidates]
        for region, candidates in data.get("retrieval", {}).items()
    }
    transcripts = {
        region: ChatTranscript(
            prompt=t["prompt"], raw_response=t["raw_response"],
            attempts=t["attempts"], model_id=t["model_id"],
            temperature=t["temperature"],
        ) for region, t in data.get("transcripts", {}).items()
    }
    return RunArtifact(
        artifact_id=data["artifact_id"],
        config=dict(data.get("config", {})),
        device_text=data.get("device_text", ""),
        retrieval=retrieval,
        transcripts=transcripts,
        judgments=tuple(ApplicabilityJudgment.from_dict(j)
                        for j in data.get("judgments", ())),
        dropped=dict(data.get("dropped", {})),
        matrix=parse_matrix(json.dumps(data["matrix"])),
        timings=dict(data.get("timings", {})),
    )


class ArtifactStore:
    """Content-addressed directory of run artifacts with atomic writes."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _dir(self, artifact_id: str) -> Path:
        return self.root / artifact_id

    @staticmethod
    def _atomic_write(path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(text)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def save(self, artifact: RunArtifact) -> str:
        data = artifact.to_dict()
        directory = self._dir(artifact.artifact_id)
        self._atomic_write(
            directory / "artifact.json",
            json.dumps(data, sort_keys=True, ensure_ascii=False, indent=2) + "\n")
        self._atomic_write(directory / "matrix.json",
                           serialize_matrix(artifact.matrix))
        return artifact.artifact_id

    def save_partial(self, partial: Mapping[str, Any]) -> str:
        """Persist an incomplete run for debugging; returns its id."""
        partial_id = sha256_hex(canonical_json(
            {k: v for k, v in partial.items() if k != "timings"}))
        self._atomic_write(
            self.root / "partial" / partial_id / "artifact.json",
            json.dumps(dict(partial), sort_keys=True, ensure_ascii=False,
                       indent=2) + "\n")
        return partial_id

    def exists(self, artifact_id: str) -> bool:
        return (self._dir(artifact_id) / "artifact.json").is_file()

    def list_ids(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir()
                      if (p / "artifact.json").is_file())

    def load_dict(self, artifact_id: str, *, verify: bool = True) -> dict[str, Any]:
        path = self._dir(artifact_id) / "artifact.json"
        if not path.is_file():
            raise ReplayError(f"artifact {artifact_id!r} not found under {self.root}")
        data = json.loads(path.read_text(encoding="utf-8"))
        if verify:
            expected = artifact_fingerprint(data)
            if expected != artifact_id or data.get("artifact_id") != artifact_id:
                raise IntegrityError(
                    f"artifact {artifact_id!r} content hash mismatch "
                    f"(recomputed {expected!r})")
        return data

    def load(self, artifact_id: str, *, verify: bool = True) -> RunArtifact:
        return _artifact_from_dict(self.load_dict(artifact_id, verify=verify))

    def matrix_bytes(self, artifact_id: str) -> str:
        path = self._dir(artifact_id) / "matrix.json"
        if not path.is_file():
            raise ReplayError(f"matrix for {artifact_id!r} not found")
        return path.read_text(encoding="utf-8")


@dataclass
class _RunContext:
    """Resolved collaborators for one run."""

    embed_provider: EmbeddingProvider
    chat_provider: ChatProvider
    cache: EmbeddingCache
    synonyms: SynonymDictionary | None
    rules: RuleSet
    equivalence: EquivalenceMap | None


def _resolve_context(config: RunConfig,
                     embed_provider: EmbeddingProvider | None,
                     chat_provider: ChatProvider | None) -> _RunContext:
    return _RunContext(
        embed_provider=embed_provider or make_embedding_provider(config.embed_provider),
        chat_provider=chat_provider or make_chat_provider(config.chat_provider),
        cache=EmbeddingCache(config.cache_dir),
        synonyms=load_synonyms(config.synonyms_path) if config.synonyms_path else None,
        rules=load_rules(config.rules_path) if config.rules_path else default_rules(),
        equivalence=(load_equivalence_map(config.equivalence_path)
                     if config.equivalence_path else None),
    )


def _reason_region(context: _RunContext, config: RunConfig, corpus: Corpus,
                   device_text: str, region: str,
                   candidates: Sequence[RetrievalCandidate], mode: RegionMode,
                   ) -> tuple[ChatTranscript, list[ApplicabilityJudgment], dict[str, int]]:
    records = []
    for candidate in candidates:
        record = corpus.get(candidate.norm_id, candidate.region)
        if record is None:
            raise InvalidInput(
                f"retrieved candidate ({candidate.norm_id}, "
                f"{candidate.region.value}) is missing from the corpus")
        records.append((record, candidate))
    bundle = build_prompt(
        device_text, records, mode,
        max_candidates=max(config.max_candidates, config.k),
        temperature=config.temperature)
    transcript = classify(context.chat_provider, bundle,
                          max_retries=config.max_retries)
    parsed = parse_judgments(transcript.raw_response, [r for r, _ in records])
    enriched = enrich_judgments(
        parsed.judgments, [r for r, _ in records], corpus,
        language_preference=LanguagePreference(config.language_preference))
    counters = {"parse_dropped": parsed.dropped, "enrich_dropped": enriched.dropped}
    return transcript, enriched.judgments, counters


def judge_device(config: RunConfig, corpus: Corpus, index: VectorIndex,
                 device_text: str, *,
                 store: ArtifactStore | None = None,
                 embed_provider: EmbeddingProvider | None = None,
                 chat_provider: ChatProvider | None = None) -> RunArtifact:
    """Run all six stages for one device and persist the artifact.

    Stage failures are wrapped in StageError with the stage name; the
    work completed so far is persisted as a partial artifact so the
    failure can be debugged from disk.
    """
    context = _resolve_context(config, embed_provider, chat_provider)
    if index.model_id != context.embed_provider.model_id:
        raise InvalidInput(
            f"index was built with {index.model_id!r} but the configured "
            f"provider is {context.embed_provider.model_id!r}")
    store = store if store is not None else ArtifactStore(config.run_dir)

    partial: dict[str, Any] = {
        "schema": ARTIFACT_SCHEMA_ID + ".partial",
        "config": config.to_dict(),
        "device_text": device_text,
    }
    timings: dict[str, float] = {}

    def run_stage(stage: str, fn):
        started = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            partial_id = None
            try:
                partial["failed_stage"] = stage
                partial_id = store.save_partial(partial)
            except OSError:
                pass
            raise StageError(stage, exc, partial_id) from exc
        timings[stage] = time.perf_counter() - started
        return result

    # Stage 1: perception — validate and embed the device description.
    def perception():
        if not device_text or not device_text.strip():
            raise InvalidInput("device description is empty")
        return embed_text(context.embed_provider, device_text, context.cache)

    run_stage("perception", perception)

    # Stage 2: retrieval — per-region hybrid search over sub-indices.
    def retrieval():
        out: dict[str, list[RetrievalCandidate]] = {}
        for region in config.regions:
            sub = index.filtered(lambda e, r=region: e.region.value == r)
            out[region] = hybrid_search(
                sub, corpus, device_text, config.k, config.weights,
                provider=context.embed_provider, synonyms=context.synonyms,
                cache=context.cache)
        return out

    retrieved = run_stage("retrieval", retrieval)
    partial["retrieval"] = {region: [c.to_dict() for c in candidates]
                            for region, candidates in retrieved.items()}

    # Stage 3: reasoning — one provider call per region.
    def reasoning():
        mode = RegionMode.CROSS if len(config.regions) > 1 else RegionMode.SINGLE
        transcripts: dict[str, ChatTranscript] = {}
        judgments: list[ApplicabilityJudgment] = []
        counters = {"parse_dropped": 0, "enrich_dropped": 0}
        for region in config.regions:
            transcript, enriched, counts = _reason_region(
                context, config, corpus, device_text, region,
                retrieved[region], mode)
            transcripts[region] = transcript
            judgments.extend(enriched)
            counters["parse_dropped"] += counts["parse_dropped"]
            counters["enrich_dropped"] += counts["enrich_dropped"]
        return transcripts, judgments, counters

    transcripts, judgments, dropped = run_stage("reasoning", reasoning)
    partial["transcripts"] = {r: t.to_dict() for r, t in transcripts.items()}
    partial["judgments"] = [j.to_dict() for j in judgments]

    # Stage 4: comparison — align, flag conflicts, gap analysis.
    def comparison():
        groups = align_groups(judgments, context.equivalence)
        flags, meta = detect_conflicts(
            groups, context.embed_provider, config.divergence_threshold,
            target_regions=[Region(r) for r in config.regions],
            cache=context.cache)
        return groups, flags, meta

    groups, flags, comparison_meta = run_stage("comparison", comparison)

    # Stage 5: advice — judgment-level suggestions plus matrix follow-ups.
    def advice():
        regions = [Region(r) for r in config.regions]
        preliminary = build_matrix(device_text, groups, flags,
                                   meta=comparison_meta)
        recommendations = suggest(judgments, device_text, regions,
                                  rules=context.rules)
        recommendations += follow_up(preliminary, regions, rules=context.rules)
        return [r.to_dict() for r in recommendations]

    recommendations = run_stage("advice", advice)

    # Stage 6: output — final matrix, fingerprint, persistence.
    def output():
        matrix = build_matrix(device_text, groups, flags,
                              recommendations=recommendations,
                              meta=comparison_meta)
        data = {
            "schema": ARTIFACT_SCHEMA_ID,
            "config": config.to_dict(),
            "device_text": device_text,
            "retrieval": {region: [c.to_dict() for c in candidates]
                          for region, candidates in retrieved.items()},
            "transcripts": {r: t.to_dict() for r, t in transcripts.items()},
            "judgments": [j.to_dict() for j in judgments],
            "dropped": dropped,
            "matrix": matrix.to_dict(),
        }
        artifact_id = artifact_fingerprint(data)
        return RunArtifact(
            artifact_id=artifact_id,
            config=config.to_dict(),
            device_text=device_text,
            retrieval=retrieved,
            transcripts=transcripts,
            judgments=tuple(judgments),
            dropped=dropped,
            matrix=matrix,
            timings=timings,
        )

    artifact = run_stage("output", output)
    artifact = replace(artifact, timings=dict(timings))
    store.save(artifact)
    return artifact


def _recompute_from_transcripts(data: Mapping[str, Any], corpus: Corpus,
                                ) -> tuple[list[ApplicabilityJudgment], ComplianceMatrix]:
    """Re-run parse → enrich → compare → advise from stored transcripts."""
    config = RunConfig.from_dict(data.get("config", {}))
    context = _resolve_context(config, None, None)
    judgments: list[ApplicabilityJudgment] = []
    transcripts = data.get("transcripts", {})
    retrieval = data.get("retrieval", {})
    for region in config.regions:
        if region not in transcripts:
            raise ReplayError(f"artifact has no transcript for region {region}")
        records = []
        for candidate in retrieval.get(region, ()):
            record = corpus.get(candidate["norm_id"], Region(candidate["region"]))
            if record is None:
                raise ReplayError(
                    f"candidate ({candidate['norm_id']}, {candidate['region']}) "
                    f"is missing from the corpus used for replay")
            records.append(record)
        parsed = parse_judgments(transcripts[region]["raw_response"], records)
        enriched = enrich_judgments(
            parsed.judgments, records, corpus,
            language_preference=LanguagePreference(config.language_preference))
        judgments.extend(enriched.judgments)

    groups = align_groups(judgments, context.equivalence)
    flags, meta = detect_conflicts(
        groups, context.embed_provider, config.divergence_threshold,
        target_regions=[Region(r) for r in config.regions],
        cache=context.cache)
    regions = [Region(r) for r in config.regions]
    preliminary = build_matrix(data.get("device_text", ""), groups, flags, meta=meta)
    recommendations = [r.to_dict() for r in
                       suggest(judgments, data.get("device_text", ""), regions,
                               rules=context.rules)
                       + follow_up(preliminary, regions, rules=context.rules)]
    matrix = build_matrix(data.get("device_text", ""), groups, flags,
                          recommendations=recommendations, meta=meta)
    return judgments, matrix


def replay(store: ArtifactStore, artifact_id: str, corpus: Corpus) -> RunArtifact:
    """Recompute all post-provider stages from stored raw responses.

    Raises ReplayMismatch with a unified diff when the recomputed
    judgments or matrix differ from what the artifact recorded.
    """
    data = store.load_dict(artifact_id, verify=False)
    if not data.get("transcripts"):
        raise ReplayError(f"artifact {artifact_id!r} has no transcripts to replay")
    judgments, matrix = _recompute_from_transcripts(data, corpus)

    recomputed = dict(data)
    recomputed["judgments"] = [j.to_dict() for j in judgments]
    recomputed["matrix"] = matrix.to_dict()

    for section in ("judgments", "matrix"):
        stored_text = json.dumps(data.get(section), sort_keys=True,
                                 ensure_ascii=False, indent=2)
        replayed_text = json.dumps(recomputed[section], sort_keys=True,
                                   ensure_ascii=False, indent=2)
        if stored_text != replayed_text:
            diff = "\n".join(difflib.unified_diff(
                stored_text.splitlines(), replayed_text.splitlines(),
                fromfile=f"stored/{section}", tofile=f"replayed/{section}",
                lineterm=""))
            raise ReplayMismatch(
                f"replay of {artifact_id!r} diverged in {section}", diff=diff)

    return _artifact_from_dict(recomputed)
