import math

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regjudge.embedding import (
    EmbeddingCache,
    EmbeddingVector,
    HashingEmbeddingProvider,
    RemoteEmbeddingProvider,
    cosine,
    embed_batch,
    embed_text,
)
from regjudge.errors import (
    DimensionError,
    InvalidInput,
    ProviderError,
    ProviderTimeout,
)


def norm(vec: EmbeddingVector) -> float:
    return math.sqrt(math.fsum(v * v for v in vec.values))


class RecordingProvider:
    """Wraps the hashing provider and records every batch it receives."""

    def __init__(self, dimension: int = 16):
        self._inner = HashingEmbeddingProvider(dimension)
        self.model_id = self._inner.model_id
        self.dimension = dimension
        self.batches: list[list[str]] = []

    def embed_raw(self, texts):
        self.batches.append(list(texts))
        return self._inner.embed_raw(texts)


class TestHashingProvider:
    def test_deterministic_across_instances(self):
        a = HashingEmbeddingProvider(64)
        b = HashingEmbeddingProvider(64)
        va = embed_text(a, "vacuum blood collection tube")
        vb = embed_text(b, "vacuum blood collection tube")
        assert va.values == vb.values
        assert va.model_id == "hash3-64"

    def test_unit_norm(self, provider):
        vec = embed_text(provider, "pulse oximeter for home use")
        assert norm(vec) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("dim", [2, 8, 64, 128])
    def test_dimension_honored(self, dim):
        vec = embed_text(HashingEmbeddingProvider(dim), "thermometer")
        assert len(vec) == dim

    def test_dimension_below_two_rejected(self):
        with pytest.raises(InvalidInput):
            HashingEmbeddingProvider(1)

    def test_similar_texts_score_higher(self, provider):
        tube = embed_text(provider, "vacuum blood collection tube with additive")
        tube2 = embed_text(provider, "blood collection tube, vacuum type")
        pump = embed_text(provider, "volumetric infusion pump flow accuracy")
        assert cosine(tube, tube2) > cosine(tube, pump)

    def test_sign_cancellation_falls_back(self):
        # "fo" hashes to two trigrams that land in one bucket with
        # opposite signs; without the fallback normalization would fail.
        vec = embed_text(HashingEmbeddingProvider(64), "fo")
        nonzero = [v for v in vec.values if v != 0.0]
        assert nonzero == [1.0]

    @given(st.text(min_size=1, max_size=80))
    @settings(max_examples=60, deadline=None)
    def test_norm_is_always_unit(self, text):
        provider = HashingEmbeddingProvider(32)
        try:
            vec = embed_text(provider, text)
        except InvalidInput:
            return  # nothing survives normalization
        assert norm(vec) == pytest.approx(1.0, abs=1e-9)
        assert len(vec) == 32


class TestCosine:
    def test_self_similarity_is_one(self, provider):
        vec = embed_text(provider, "electrocardiograph")
        assert cosine(vec, vec) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric(self, provider):
        a = embed_text(provider, "glucose meter")
        b = embed_text(provider, "syringe")
        assert cosine(a, b) == pytest.approx(cosine(b, a), abs=1e-12)

    def test_dimension_mismatch(self):
        a = embed_text(HashingEmbeddingProvider(8), "x-ray")
        b = embed_text(HashingEmbeddingProvider(16), "x-ray")
        with pytest.raises(DimensionError):
            cosine(a, b)

    def test_clamped_to_unit_interval(self):
        a = EmbeddingVector((1.0000001, 0.0), "t")
        assert cosine(a, a) == 1.0


class TestEmbedText:
    @pytest.mark.parametrize("text", ["", "   ", "\t\n", "..!?"])
    def test_empty_after_normalization_rejected(self, provider, text):
        with pytest.raises(InvalidInput):
            embed_text(provider, text)

    def test_punctuation_insensitive(self, provider):
        a = embed_text(provider, "blood-collection tube!")
        b = embed_text(provider, "blood collection tube")
        assert a.values == b.values

    def test_declared_dimension_enforced(self):
        class Lying:
            model_id = "liar"
            dimension = 8

            def embed_raw(self, texts):
                return [[1.0, 2.0] for _ in texts]

        with pytest.raises(DimensionError):
            embed_text(Lying(), "anything")


class TestEmbeddingCache:
    def test_memory_hit_skips_provider(self):
        provider = RecordingProvider()
        cache = EmbeddingCache()
        first = embed_text(provider, "infusion pump", cache)
        second = embed_text(provider, "infusion pump", cache)
        assert first == second
        assert len(provider.batches) == 1
        assert cache.hits == 1 and cache.misses == 1

    def test_disk_roundtrip(self, tmp_path):
        provider = RecordingProvider()
        original = embed_text(provider, "dialysis machine",
                              EmbeddingCache(tmp_path))
        fresh = EmbeddingCache(tmp_path)
        replayed = embed_text(provider, "dialysis machine", fresh)
        assert replayed == original
        assert len(provider.batches) == 1
        assert fresh.hits == 1

    def test_corrupted_entry_recomputed(self, tmp_path):
        provider = RecordingProvider()
        cache = EmbeddingCache(tmp_path)
        embed_text(provider, "stethoscope", cache)
        files = list(tmp_path.rglob("*.json"))
        assert len(files) == 1
        files[0].write_text("{not json", encoding="utf-8")
        fresh = EmbeddingCache(tmp_path)
        vec = embed_text(provider, "stethoscope", fresh)
        assert norm(vec) == pytest.approx(1.0, abs=1e-9)
        assert len(provider.batches) == 2

    def test_keyed_by_model(self, tmp_path):
        cache = EmbeddingCache(tmp_path)
        embed_text(HashingEmbeddingProvider(8), "scalpel", cache)
        embed_text(HashingEmbeddingProvider(16), "scalpel", cache)
        assert cache.misses == 2
        dirs = {p.name for p in tmp_path.iterdir()}
        assert dirs == {"hash3-8", "hash3-16"}


class TestEmbedBatch:
    def test_order_preserved(self, provider):
        texts = ["syringe", "catheter", "forceps"]
        batch = embed_batch(provider, texts)
        singles = [embed_text(provider, t) for t in texts]
        assert [v.values for v in batch] == [v.values for v in singles]

    def test_duplicates_cost_one_provider_call(self):
        provider = RecordingProvider()
        vectors = embed_batch(provider, ["gauze"] * 5 + ["splint"])
        assert len(vectors) == 6
        assert provider.batches == [["gauze", "splint"]]
        assert vectors[0] == vectors[4]

    def test_cache_and_batch_compose(self):
        provider = RecordingProvider()
        cache = EmbeddingCache()
        embed_text(provider, "gauze", cache)
        embed_batch(provider, ["gauze", "splint"], cache)
        assert provider.batches == [["gauze"], ["splint"]]

    def test_empty_text_names_its_index(self, provider):
        with pytest.raises(InvalidInput, match="index 1"):
            embed_batch(provider, ["fine", "   ", "also fine"])

    def test_count_mismatch_raises(self):
        class Short:
            model_id = "short"
            dimension = 4

            def embed_raw(self, texts):
                return [[1.0, 0.0, 0.0, 0.0]]

        with pytest.raises(ProviderError):
            embed_batch(Short(), ["a1", "b2"])

    def test_provider_failure_index_translated(self):
        class Failing:
            model_id = "failing"
            dimension = 4

            def embed_raw(self, texts):
                raise ProviderError("boom", retryable=False, item_index=1)

        with pytest.raises(ProviderError) as excinfo:
            embed_batch(Failing(), ["dup", "dup", "other"])
        # batch-relative index 1 is "other", which sits at position 2
        assert excinfo.value.item_index == 2


def remote(transport, **kwargs) -> RemoteEmbeddingProvider:
    kwargs.setdefault("url", "http://embeddings.test/v1")
    kwargs.setdefault("backoff", 0.0)
    return RemoteEmbeddingProvider("demo-model", 3, transport=transport, **kwargs)


class TestRemoteProvider:
    def test_success(self):
        def handler(request):
            payload = {"data": [{"embedding": [3.0, 0.0, 4.0]}]}
            assert request.headers["Authorization"] == "Bearer sk-test"
            return httpx.Response(200, json=payload)

        provider = remote(httpx.MockTransport(handler), api_key="sk-test")
        vec = embed_text(provider, "anything")
        assert vec.values == pytest.approx((0.6, 0.0, 0.8))
        assert vec.model_id == "demo-model"

    def test_retries_on_5xx_then_succeeds(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={"data": [{"embedding": [1.0, 0.0, 0.0]}]})

        provider = remote(httpx.MockTransport(handler), max_retries=2)
        assert embed_text(provider, "x1").values == (1.0, 0.0, 0.0)
        assert calls["n"] == 3

    def test_exhausted_retries_raise_last_error(self):
        provider = remote(httpx.MockTransport(lambda r: httpx.Response(500)),
                          max_retries=1)
        with pytest.raises(ProviderError) as excinfo:
            embed_text(provider, "x1")
        assert excinfo.value.retryable

    def test_timeout_becomes_provider_timeout(self):
        def handler(request):
            raise httpx.ConnectTimeout("slow")

        provider = remote(httpx.MockTransport(handler), max_retries=0)
        with pytest.raises(ProviderTimeout):
            embed_text(provider, "x1")

    def test_4xx_fails_without_retry(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            return httpx.Response(401)

        provider = remote(httpx.MockTransport(handler), max_retries=3,
                          api_key="sk-secret-value")
        with pytest.raises(ProviderError) as excinfo:
            embed_text(provider, "x1")
        assert calls["n"] == 1
        assert "sk-secret-value" not in str(excinfo.value)

    def test_malformed_body_raises(self):
        provider = remote(httpx.MockTransport(
            lambda r: httpx.Response(200, json={"weird": True})))
        with pytest.raises(ProviderError):
            embed_text(provider, "x1")

    def test_missing_url_rejected(self, monkeypatch):
        monkeypatch.delenv("REGJUDGE_EMBED_URL", raising=False)
        with pytest.raises(InvalidInput):
            RemoteEmbeddingProvider("demo-model", 3)
