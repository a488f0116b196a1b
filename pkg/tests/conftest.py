import pytest
from importlib import resources

from regjudge.corpus import Corpus, LanguagePreference, StandardRecord, Region, load_corpus
from regjudge.embedding import EmbeddingCache, HashingEmbeddingProvider
from regjudge.retrieval import build_index, load_synonyms

TUBE_QUERY = ("Disposable vacuum blood collection tube with EDTA additive "
              "for venous blood specimen collection")


def bundled(name: str) -> str:
    return str(resources.files("regjudge.data").joinpath(name))


@pytest.fixture(scope="session")
def corpus() -> Corpus:
    loaded, rejected = load_corpus(bundled("mini_corpus.json"))
    assert not rejected
    return loaded


@pytest.fixture(scope="session")
def provider() -> HashingEmbeddingProvider:
    return HashingEmbeddingProvider(64)


@pytest.fixture(scope="session")
def cache() -> EmbeddingCache:
    return EmbeddingCache()


@pytest.fixture(scope="session")
def index(corpus, provider, cache):
    return build_index(corpus, provider,
                       language_preference=LanguagePreference.EN_FIRST,
                       cache=cache)


@pytest.fixture(scope="session")
def synonyms():
    return load_synonyms(bundled("synonyms.json"))


def make_record(id: str, region: str = "CN", **kwargs) -> StandardRecord:
    """Small record factory for synthetic corpora in unit tests."""
    from regjudge.corpus import normalize_standard_id

    defaults = dict(
        title_en=kwargs.pop("title_en", f"Standard {id}"),
        source_text=kwargs.pop("source_text", f"Source text of {id}"),
    )
    return StandardRecord(
        id=id, norm_id=normalize_standard_id(id), region=Region(region),
        **defaults, **kwargs)
