"""Text-to-vector encoding behind a provider contract.

Two providers ship with the package: a remote HTTP provider speaking the
OpenAI-style embeddings contract for production, and a deterministic
offline provider (signed character-3-gram feature hashing) so every
retrieval test runs without network access.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

from .errors import DimensionError, InvalidInput, ProviderError, ProviderTimeout
from .text import normalize_text, sha256_hex

__all__ = [
    "EmbeddingVector",
    "EmbeddingProvider",
    "HashingEmbeddingProvider",
    "RemoteEmbeddingProvider",
    "EmbeddingCache",
    "embed_text",
    "embed_batch",
    "cosine",
]

EMBED_URL_ENV = "REGJUDGE_EMBED_URL"
EMBED_KEY_ENV = "REGJUDGE_EMBED_KEY"


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit-normalized embedding tagged with the producing model."""

    values: tuple[float, ...]
    model_id: str

    def __len__(self) -> int:
        return len(self.values)


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Contract every embedding backend satisfies.

    ``embed_raw`` returns one raw (not necessarily unit) vector per input
    text; normalization happens in :func:`embed_text` so the unit-norm
    invariant holds for every provider.
    """

    model_id: str
    dimension: int

    def embed_raw(self, texts: Sequence[str]) -> list[list[float]]: ...


def _l2_normalized(raw: Sequence[float]) -> tuple[float, ...]:
    norm = math.sqrt(math.fsum(v * v for v in raw))
    if norm == 0.0:
        raise ValueError("zero vector cannot be normalized")
    return tuple(v / norm for v in raw)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of unit vectors, clamped to [-1, 1]."""
    if len(a) != len(b):
        raise DimensionError(f"vector dimensions differ: {len(a)} vs {len(b)}")
    dot = math.fsum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot))


class HashingEmbeddingProvider:
    """Deterministic offline provider: signed character-3-gram hashing.

    Each trigram of the lowercased, space-padded text is hashed
    (platform-stable blake2b) into one of ``dimension`` buckets with a
    +/-1 sign. Texts sharing more trigrams land closer in cosine space,
    which is enough structure for retrieval tests while staying fully
    reproducible.
    """

    def __init__(self, dimension: int = 64):
        if dimension < 2:
            raise InvalidInput("hashing provider needs dimension >= 2")
        self.dimension = dimension
        self.model_id = f"hash3-{dimension}"

    def embed_raw(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> list[float]:
        padded = f" {text.lower()} "
        vec = [0.0] * self.dimension
        for i in range(len(padded) - 2):
            digest = hashlib.blake2b(
                padded[i:i + 3].encode("utf-8"), digest_size=8).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        if not any(vec):
            # Signed collisions cancelled everything; pick a deterministic
            # fallback bucket so normalization stays total.
            bucket = int.from_bytes(
                hashlib.blake2b(padded.encode("utf-8"), digest_size=4).digest(),
                "big") % self.dimension
            vec[bucket] = 1.0
        return vec


class RemoteEmbeddingProvider:
    """OpenAI-compatible embeddings endpoint: POST {model, input[]}.

    Endpoint and key come from arguments or the REGJUDGE_EMBED_URL /
    REGJUDGE_EMBED_KEY environment variables. The key never appears in
    logs or error messages.
    """

    def __init__(self, model_id: str, dimension: int, *,
                 url: str | None = None, api_key: str | None = None,
                 timeout: float = 30.0, max_retries: int = 2,
                 backoff: float = 0.5, transport=None):
        self.model_id = model_id
        self.dimension = dimension
        self.url = url or os.environ.get(EMBED_URL_ENV, "")
        self._api_key = api_key if api_key is not None else os.environ.get(EMBED_KEY_ENV, "")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._transport = transport
        if not self.url:
            raise InvalidInput(
                f"remote embedding provider needs a URL ({EMBED_URL_ENV})")

    def embed_raw(self, texts: Sequence[str]) -> list[list[float]]:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {"model": self.model_id, "input": list(texts)}
        last_error: ProviderError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt and self.backoff:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                with httpx.Client(transport=self._transport,
                                  timeout=self.timeout) as client:
                    response = client.post(self.url, json=payload, headers=headers)
            except httpx.TimeoutException:
                last_error = ProviderTimeout(
                    f"embedding request timed out after {self.timeout}s")
                continue
            except httpx.HTTPError as exc:
                last_error = ProviderError(
                    f"embedding transport failure: {type(exc).__name__}",
                    retryable=True)
                continue
            if response.status_code >= 500:
                last_error = ProviderError(
                    f"embedding endpoint returned {response.status_code}",
                    retryable=True)
                continue
            if response.status_code != 200:
                raise ProviderError(
                    f"embedding endpoint returned {response.status_code}",
                    retryable=False)
            try:
                data = response.json()["data"]
                vectors = [list(map(float, item["embedding"])) for item in data]
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(
                    f"embedding response malformed: {exc}", retryable=False) from exc
            if len(vectors) != len(texts):
                raise ProviderError(
                    f"embedding response count {len(vectors)} != input {len(texts)}",
                    retryable=False)
            return vectors
        assert last_error is not None
        raise last_error


class EmbeddingCache:
    """Content-addressed cache keyed by (model_id, SHA-256 of normalized text).

    Always caches in memory; persists to ``directory`` as one JSON file
    per entry when given. Writes are atomic (temp file + rename) so
    concurrent writers of the same key cannot interleave.
    """

    def __init__(self, directory: str | Path | None = None):
        self._memory: dict[tuple[str, str], EmbeddingVector] = {}
        self.directory = Path(directory) if directory else None
        self.hits = 0
        self.misses = 0

    def _path(self, model_id: str, text_hash: str) -> Path:
        assert self.directory is not None
        safe_model = "".join(c if c.isalnum() or c in "-_." else "_" for c in model_id)
        return self.directory / safe_model / f"{text_hash}.json"

    def get(self, model_id: str, text_hash: str) -> EmbeddingVector | None:
        key = (model_id, text_hash)
        vec = self._memory.get(key)
        if vec is None and self.directory is not None:
            path = self._path(model_id, text_hash)
            if path.exists():
                try:
                    data = json.loads(path.read_text(encoding="utf-8"))
                    vec = EmbeddingVector(tuple(data["values"]), data["model_id"])
                    self._memory[key] = vec
                except (OSError, ValueError, KeyError):
                    vec = None
        if vec is None:
            self.misses += 1
        else:
            self.hits += 1
        return vec

    def put(self, text_hash: str, vector: EmbeddingVector) -> None:
        self._memory[(vector.model_id, text_hash)] = vector
        if self.directory is None:
            return
        path = self._path(vector.model_id, text_hash)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            {"model_id": vector.model_id, "values": list(vector.values)})
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(payload)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _prepare(text: str) -> tuple[str, str]:
    normalized = normalize_text(text)
    if not normalized:
        raise InvalidInput("text is empty after normalization")
    return normalized, sha256_hex(normalized)


def embed_text(provider: EmbeddingProvider, text: str,
               cache: EmbeddingCache | None = None) -> EmbeddingVector:
    """Embed one text as a unit vector, consulting the cache first."""
    normalized, text_hash = _prepare(text)
    if cache is not None:
        hit = cache.get(provider.model_id, text_hash)
        if hit is not None:
            return hit
    raw = provider.embed_raw([normalized])[0]
    vector = _finish(provider, raw)
    if cache is not None:
        cache.put(text_hash, vector)
    return vector


def _finish(provider: EmbeddingProvider, raw: Sequence[float]) -> EmbeddingVector:
    if len(raw) != provider.dimension:
        raise DimensionError(
            f"provider {provider.model_id} returned dimension {len(raw)}, "
            f"declared {provider.dimension}")
    return EmbeddingVector(_l2_normalized(raw), provider.model_id)


def embed_batch(provider: EmbeddingProvider, texts: Sequence[str],
                cache: EmbeddingCache | None = None) -> list[EmbeddingVector]:
    """Embed many texts, order-preserving, deduplicating provider calls.

    All unique cache misses go to the provider in a single call, so a
    batch of N duplicates costs one call. Provider failures are re-raised
    with ``item_index`` pointing into the original list (translated from
    the provider's batch-relative index when it supplies one).
    """
    prepared: list[tuple[str, str]] = []
    for i, text in enumerate(texts):
        try:
            prepared.append(_prepare(text))
        except InvalidInput as exc:
            raise InvalidInput(f"text at index {i}: {exc}") from exc

    results: dict[str, EmbeddingVector] = {}
    unique_missing: list[str] = []
    missing_hashes: list[str] = []
    first_position: dict[str, int] = {}
    for i, (normalized, text_hash) in enumerate(prepared):
        if text_hash in results or text_hash in first_position:
            continue
        hit = cache.get(provider.model_id, text_hash) if cache is not None else None
        if hit is not None:
            results[text_hash] = hit
        else:
            first_position[text_hash] = i
            unique_missing.append(normalized)
            missing_hashes.append(text_hash)

    if unique_missing:
        try:
            raw_vectors = provider.embed_raw(unique_missing)
        except ProviderError as exc:
            if exc.item_index is not None and 0 <= exc.item_index < len(missing_hashes):
                exc.item_index = first_position[missing_hashes[exc.item_index]]
            else:
                exc.item_index = first_position[missing_hashes[0]]
            raise
        if len(raw_vectors) != len(unique_missing):
            raise ProviderError(
                f"provider returned {len(raw_vectors)} vectors for "
                f"{len(unique_missing)} texts", retryable=False)
        for text_hash, raw in zip(missing_hashes, raw_vectors):
            vector = _finish(provider, raw)
            results[text_hash] = vector
            if cache is not None:
                cache.put(text_hash, vector)

    return [results[text_hash] for _, text_hash in prepared]
