"""Flat exact vector index with hybrid keyword fusion and optional rerank.

Search is exact: scores are computed against every indexed row and
sorted, no approximate structures. All orderings share one tie-break
rule — descending score, then ascending norm_id — so identical inputs
always produce identical candidate lists.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import (
    Corpus,
    LanguagePreference,
    Region,
    StandardRecord,
    compose_segment_text,
    normalize_standard_id,
)
from .embedding import EmbeddingCache, EmbeddingProvider, embed_batch, embed_text, EmbeddingVector
from .errors import DimensionError, EmptyIndex, InvalidIdentifier, InvalidInput, ParseError
from .text import canonical_json, sha256_hex, tokenize

__all__ = [
    "IndexEntry",
    "VectorIndex",
    "RetrievalCandidate",
    "RerankResult",
    "RerankScorer",
    "SynonymDictionary",
    "load_synonyms",
    "build_index",
    "search_top_k",
    "expand_query",
    "keyword_score",
    "rerank",
    "hybrid_search",
    "save_index",
    "load_index",
]

INDEX_MAGIC = b"RJIX"
INDEX_VERSION = 1
DEFAULT_WEIGHTS: Mapping[str, float] = {"dense": 0.8, "keyword": 0.2}
ID_MATCH_BONUS = 1.0
# Longest whitespace-delimited span checked for an ID match in a query.
_MAX_ID_SPAN = 5


@dataclass(frozen=True)
class IndexEntry:
    norm_id: str
    region: Region

    def to_dict(self) -> dict[str, str]:
        return {"norm_id": self.norm_id, "region": self.region.value}


@dataclass(frozen=True)
class RetrievalCandidate:
    """One scored (standard, query) pair with score provenance."""

    norm_id: str
    region: Region
    dense_score: float
    keyword_score: float
    final_score: float
    rank: int
    rerank_score: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "norm_id": self.norm_id,
            "region": self.region.value,
            "dense_score": self.dense_score,
            "keyword_score": self.keyword_score,
            "rerank_score": self.rerank_score,
            "final_score": self.final_score,
            "rank": self.rank,
        }


class VectorIndex:
    """Immutable flat index: one unit vector per selected corpus record."""

    def __init__(self, model_id: str, dimension: int,
                 entries: Sequence[IndexEntry], matrix: np.ndarray,
                 built_from: str,
                 language_preference: LanguagePreference = LanguagePreference.EN_FIRST):
        if matrix.shape != (len(entries), dimension):
            raise DimensionError(
                f"matrix shape {matrix.shape} does not match "
                f"{len(entries)} entries x {dimension}")
        self.model_id = model_id
        self.dimension = dimension
        self.entries: tuple[IndexEntry, ...] = tuple(entries)
        self.matrix = matrix.astype(np.float32, copy=False)
        self.matrix.setflags(write=False)
        self.built_from = built_from
        self.language_preference = language_preference
        self._matrix64: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def dense_scores(self, query: EmbeddingVector) -> np.ndarray:
        """Cosine of the query against every row, clamped to [-1, 1]."""
        if query.model_id != self.model_id:
            raise DimensionError(
                f"query vector from model {query.model_id!r} cannot search "
                f"an index built with {self.model_id!r}")
        if len(query) != self.dimension:
            raise DimensionError(
                f"query dimension {len(query)} != index dimension {self.dimension}")
        if self._matrix64 is None:
            self._matrix64 = self.matrix.astype(np.float64)
        scores = self._matrix64 @ np.asarray(query.values, dtype=np.float64)
        return np.clip(scores, -1.0, 1.0)

    def filtered(self, predicate: Callable[[IndexEntry], bool]) -> "VectorIndex":
        """Sub-index over entries matching the predicate (e.g. one region)."""
        keep = [i for i, e in enumerate(self.entries) if predicate(e)]
        if not keep:
            raise EmptyIndex("no index entries match the filter")
        return VectorIndex(
            self.model_id, self.dimension,
            [self.entries[i] for i in keep],
            self.matrix[keep].copy(),
            built_from=self.built_from,
            language_preference=self.language_preference,
        )

    def fingerprint(self) -> str:
        """Content hash over header and vector bytes, for cache busting."""
        header = canonical_json({
            "model_id": self.model_id,
            "dimension": self.dimension,
            "entries": [e.to_dict() for e in self.entries],
            "built_from": self.built_from,
        })
        return sha256_hex(header.encode("utf-8") + self.matrix.tobytes())


def build_index(corpus: Corpus, provider: EmbeddingProvider,
                record_filter: Callable[[StandardRecord], bool] | None = None,
                *,
                language_preference: LanguagePreference = LanguagePreference.EN_FIRST,
                cache: EmbeddingCache | None = None) -> VectorIndex:
    """Embed the composed text of every selected record into a flat index."""
    selected = [r for r in corpus if record_filter is None or record_filter(r)]
    if not selected:
        raise EmptyIndex("no corpus records selected for indexing")
    texts = [compose_segment_text(r, language_preference) for r in selected]
    vectors = embed_batch(provider, texts, cache)
    matrix = np.asarray([v.values for v in vectors], dtype=np.float32)
    built_from = sha256_hex(canonical_json([r.to_dict() for r in selected]))
    return VectorIndex(
        provider.model_id, provider.dimension,
        [IndexEntry(r.norm_id, r.region) for r in selected],
        matrix, built_from=built_from,
        language_preference=language_preference,
    )


def _ranked(entries: Sequence[IndexEntry], finals: Sequence[float],
            denses: Sequence[float], keywords: Sequence[float],
            k: int) -> list[RetrievalCandidate]:
    order = sorted(range(len(entries)),
                   key=lambda i: (-finals[i], entries[i].norm_id))
    out: list[RetrievalCandidate] = []
    for rank, i in enumerate(order[:k], start=1):
        out.append(RetrievalCandidate(
            norm_id=entries[i].norm_id,
            region=entries[i].region,
            dense_score=float(denses[i]),
            keyword_score=float(keywords[i]),
            final_score=float(finals[i]),
            rank=rank,
        ))
    return out


def search_top_k(index: VectorIndex, query_vector: EmbeddingVector,
                 k: int) -> list[RetrievalCandidate]:
    """Exact top-k by cosine, ties broken by ascending norm_id."""
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    scores = index.dense_scores(query_vector)
    zeros = [0.0] * len(index)
    return _ranked(index.entries, scores.tolist(), scores.tolist(), zeros, k)


class SynonymDictionary:
    """Lowercase term -> expansion terms, reflexive entries removed."""

    def __init__(self, mapping: Mapping[str, Sequence[str]]):
        self._terms: dict[str, tuple[str, ...]] = {}
        for term, expansions in mapping.items():
            key = term.strip().lower()
            if not key:
                continue
            cleaned = []
            for exp in expansions:
                low = str(exp).strip().lower()
                if low and low != key and low not in cleaned:
                    cleaned.append(low)
            self._terms[key] = tuple(cleaned)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __contains__(self, term: str) -> bool:
        return term.lower() in self._terms


def load_synonyms(path: str | Path) -> SynonymDictionary:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInput(f"cannot read synonym file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed synonym JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ParseError("synonym file must be a JSON object of term -> [expansions]")
    for term, expansions in raw.items():
        if not isinstance(expansions, list):
            raise ParseError(f"expansions for {term!r} must be a list")
    return SynonymDictionary(raw)


def _whole_word_present(term: str, text_lower: str) -> bool:
    return re.search(rf"(?<!\w){re.escape(term)}(?!\w)", text_lower) is not None


def expand_query(query: str, synonyms: SynonymDictionary) -> str:
    """Append expansion terms for every dictionary term found as a whole word.

    The original query is unchanged at the front; each appended term
    appears once, and terms already present in the query are skipped.
    """
    query_lower = query.lower()
    appended: list[str] = []
    for term, expansions in synonyms.items():
        if not _whole_word_present(term, query_lower):
            continue
        for exp in expansions:
            if exp in appended or _whole_word_present(exp, query_lower):
                continue
            appended.append(exp)
    if not appended:
        return query
    return query + " " + " ".join(appended)


def _id_spans(query: str) -> set[str]:
    """Normalized ids of every short whitespace-delimited span in the query."""
    words = query.split()
    spans: set[str] = set()
    for start in range(len(words)):
        for length in range(1, min(_MAX_ID_SPAN, len(words) - start) + 1):
            span = " ".join(words[start:start + length])
            try:
                spans.add(normalize_standard_id(span))
            except InvalidIdentifier:
                continue
    return spans


def keyword_score(query: str, record: StandardRecord, *,
                  language_preference: LanguagePreference = LanguagePreference.EN_FIRST,
                  id_bonus: float = ID_MATCH_BONUS) -> float:
    """Token-overlap fraction plus a strong bonus for an exact ID mention.

    score = |tokens(query) ∩ tokens(record text)| / |tokens(query)|,
    plus ``id_bonus`` when any whitespace-delimited span of the query
    normalizes to the record's norm_id.
    """
    query_tokens = set(tokenize(query))
    score = 0.0
    if query_tokens:
        record_tokens = set(tokenize(compose_segment_text(record, language_preference)))
        score = len(query_tokens & record_tokens) / len(query_tokens)
    if record.norm_id in _id_spans(query):
        score += id_bonus
    return score


class RerankScorer(Protocol):
    """Pairwise relevance provider for the optional rerank stage."""

    def score_pairs(self, query: str,
                    candidates: Sequence[RetrievalCandidate]) -> Sequence[float]: ...


@dataclass(frozen=True)
class RerankResult:
    """Reranked candidates plus a degradation flag for scorer failures."""

    candidates: list[RetrievalCandidate]
    degraded: bool = False
    warning: str | None = None

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


def rerank(query: str, candidates: Sequence[RetrievalCandidate],
           scorer: RerankScorer | None = None) -> RerankResult:
    """Re-sort candidates by a pairwise scorer; identity without one.

    A scorer failure falls back to the dense order and sets the
    ``degraded`` flag instead of raising.
    """
    if not candidates:
        raise InvalidInput("rerank requires a non-empty candidate list")
    if scorer is None:
        return RerankResult(list(candidates))
    try:
        scores = list(scorer.score_pairs(query, candidates))
    except Exception as exc:  # scorer is third-party code: degrade, not crash
        return RerankResult(list(candidates), degraded=True,
                            warning=f"rerank scorer failed: {exc}")
    if len(scores) != len(candidates):
        return RerankResult(
            list(candidates), degraded=True,
            warning=f"rerank scorer returned {len(scores)} scores "
                    f"for {len(candidates)} candidates")
    rescored = [replace(c, rerank_score=float(s), final_score=float(s))
                for c, s in zip(candidates, scores)]
    rescored.sort(key=lambda c: (-c.final_score, c.norm_id))
    reranked = [replace(c, rank=i) for i, c in enumerate(rescored, start=1)]
    return RerankResult(reranked)


def hybrid_search(index: VectorIndex, corpus: Corpus, query: str, k: int,
                  weights: Mapping[str, float] = DEFAULT_WEIGHTS, *,
                  provider: EmbeddingProvider,
                  synonyms: SynonymDictionary | None = None,
                  cache: EmbeddingCache | None = None) -> list[RetrievalCandidate]:
    """Fuse dense and keyword evidence: w_d * dense + w_k * keyword.

    The dense leg embeds the original query; synonym expansion feeds
    only the keyword leg. With a zero keyword weight the result is
    identical to :func:`search_top_k` on the same query.
    """
    w_dense = float(weights.get("dense", 0.0))
    w_keyword = float(weights.get("keyword", 0.0))
    if w_dense < 0 or w_keyword < 0 or w_dense + w_keyword <= 0:
        raise InvalidInput(f"invalid fusion weights {dict(weights)!r}")
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")

    query_vector = embed_text(provider, query, cache)
    denses = index.dense_scores(query_vector).tolist()

    keywords = [0.0] * len(index)
    if w_keyword > 0:
        expanded = expand_query(query, synonyms) if synonyms is not None else query
        for i, entry in enumerate(index.entries):
            record = corpus.get(entry.norm_id, entry.region)
            if record is None:
                raise InvalidInput(
                    f"index entry ({entry.norm_id}, {entry.region.value}) "
                    f"is not present in the corpus")
            keywords[i] = keyword_score(
                expanded, record, language_preference=index.language_preference)

    finals = [w_dense * d + w_keyword * kw for d, kw in zip(denses, keywords)]
    return _ranked(index.entries, finals, denses, keywords, k)


def save_index(index: VectorIndex, path: str | Path) -> None:
    """Write vectors to ``path`` (.rjx) and metadata to ``path + .meta.json``.

    Binary layout: magic, version u16, model_id (u16 length + UTF-8),
    dimension u32, count u32, then row-major float32 little-endian.
    """
    p = Path(path)
    model_bytes = index.model_id.encode("utf-8")
    header = INDEX_MAGIC + struct.pack(
        "<HH", INDEX_VERSION, len(model_bytes)) + model_bytes + struct.pack(
        "<II", index.dimension, len(index.entries))
    vectors = np.ascontiguousarray(index.matrix, dtype="<f4").tobytes()
    p.write_bytes(header + vectors)
    meta = {
        "schema": "regjudge.index.v1",
        "model_id": index.model_id,
        "dimension": index.dimension,
        "count": len(index.entries),
        "built_from": index.built_from,
        "language_preference": index.language_preference.value,
        "entries": [e.to_dict() for e in index.entries],
    }
    Path(str(p) + ".meta.json").write_text(
        json.dumps(meta, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_index(path: str | Path) -> VectorIndex:
    p = Path(path)
    blob = p.read_bytes()
    if blob[:4] != INDEX_MAGIC:
        raise ParseError(f"{p} is not an index file (bad magic)")
    version, model_len = struct.unpack_from("<HH", blob, 4)
    if version != INDEX_VERSION:
        raise ParseError(f"unsupported index version {version}")
    offset = 8
    model_id = blob[offset:offset + model_len].decode("utf-8")
    offset += model_len
    dimension, count = struct.unpack_from("<II", blob, offset)
    offset += 8
    expected = count * dimension * 4
    payload = blob[offset:]
    if len(payload) != expected:
        raise ParseError(
            f"index payload is {len(payload)} bytes, expected {expected}")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dimension).copy()

    meta_path = Path(str(p) + ".meta.json")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"missing index sidecar {meta_path}: {exc}") from exc
    if meta.get("model_id") != model_id or meta.get("dimension") != dimension \
            or meta.get("count") != count:
        raise ParseError("index sidecar disagrees with binary header")
    entries = [IndexEntry(e["norm_id"], Region(e["region"]))
               for e in meta.get("entries", [])]
    if len(entries) != count:
        raise ParseError("index sidecar entry count disagrees with header")
    return VectorIndex(
        model_id, dimension, entries, matrix,
        built_from=str(meta.get("built_from", "")),
        language_preference=LanguagePreference(
            meta.get("language_preference", "EN_FIRST")),
    )
