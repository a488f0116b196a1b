"""Retrieval-augmented applicability judgments for medical device standards.

The pipeline turns a free-text device description into a cross-region
compliance matrix: embed the description, retrieve candidate standards
from a bilingual corpus, classify each as Mandatory, Recommended, or
Not Applicable, align the judgments across regions, flag conflicts, and
attach follow-up recommendations. Every run is captured in a
content-addressed artifact that can be replayed offline.
"""

from .advice import (
    AdviceRule,
    Recommendation,
    RecommendationKind,
    RuleSet,
    default_rules,
    follow_up,
    load_rules,
    suggest,
)
from .comparison import (
    AlignedGroup,
    ComplianceMatrix,
    ConflictFlag,
    EquivalenceMap,
    FlagKind,
    align_groups,
    build_matrix,
    detect_conflicts,
    load_equivalence_map,
    matrix_to_csv,
    parse_matrix,
    serialize_matrix,
)
from .corpus import (
    Corpus,
    LanguagePreference,
    Region,
    StandardRecord,
    compose_segment_text,
    load_corpus,
    normalize_standard_id,
    parse_records,
    pick_title,
)
from .embedding import (
    EmbeddingCache,
    EmbeddingVector,
    HashingEmbeddingProvider,
    RemoteEmbeddingProvider,
    cosine,
    embed_batch,
    embed_text,
)
from .errors import RegJudgeError
from .evaluation import (
    BenchmarkSample,
    MetricsReport,
    TTestResult,
    applicability_accuracy,
    baseline_retrieval_only,
    baseline_rule_based,
    baseline_zero_shot,
    evaluate_system,
    load_benchmark,
    paired_t_test,
    sample_level_accuracy,
    top_k_recall,
)
from .pipeline import (
    ArtifactStore,
    RunArtifact,
    RunConfig,
    judge_device,
    load_config,
    make_chat_provider,
    make_embedding_provider,
    replay,
)
from .reasoning import (
    ApplicabilityJudgment,
    ApplicabilityLabel,
    CueChatProvider,
    Provenance,
    RegionMode,
    RemoteChatProvider,
    ScriptedChatProvider,
    build_prompt,
    classify,
    enrich_judgments,
    parse_judgments,
    parse_label,
    pseudo_label_fallback,
)
from .retrieval import (
    RetrievalCandidate,
    SynonymDictionary,
    VectorIndex,
    build_index,
    expand_query,
    hybrid_search,
    load_index,
    load_synonyms,
    rerank,
    save_index,
    search_top_k,
)
from .stats import regularized_incomplete_beta, student_t_two_sided_p

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AdviceRule",
    "AlignedGroup",
    "ApplicabilityJudgment",
    "ApplicabilityLabel",
    "ArtifactStore",
    "BenchmarkSample",
    "ComplianceMatrix",
    "ConflictFlag",
    "Corpus",
    "CueChatProvider",
    "EmbeddingCache",
    "EmbeddingVector",
    "EquivalenceMap",
    "FlagKind",
    "HashingEmbeddingProvider",
    "LanguagePreference",
    "MetricsReport",
    "Provenance",
    "Recommendation",
    "RecommendationKind",
    "Region",
    "RegionMode",
    "RegJudgeError",
    "RemoteChatProvider",
    "RemoteEmbeddingProvider",
    "RetrievalCandidate",
    "RuleSet",
    "RunArtifact",
    "RunConfig",
    "ScriptedChatProvider",
    "StandardRecord",
    "SynonymDictionary",
    "TTestResult",
    "VectorIndex",
    "align_groups",
    "applicability_accuracy",
    "baseline_retrieval_only",
    "baseline_rule_based",
    "baseline_zero_shot",
    "build_index",
    "build_matrix",
    "build_prompt",
    "classify",
    "compose_segment_text",
    "cosine",
    "default_rules",
    "detect_conflicts",
    "embed_batch",
    "embed_text",
    "enrich_judgments",
    "evaluate_system",
    "expand_query",
    "follow_up",
    "hybrid_search",
    "judge_device",
    "load_benchmark",
    "load_config",
    "load_corpus",
    "load_equivalence_map",
    "load_index",
    "load_rules",
    "load_synonyms",
    "make_chat_provider",
    "make_embedding_provider",
    "matrix_to_csv",
    "normalize_standard_id",
    "paired_t_test",
    "parse_judgments",
    "parse_label",
    "parse_matrix",
    "parse_records",
    "pick_title",
    "pseudo_label_fallback",
    "regularized_incomplete_beta",
    "replay",
    "rerank",
    "sample_level_accuracy",
    "save_index",
    "search_top_k",
    "serialize_matrix",
    "student_t_two_sided_p",
    "suggest",
    "top_k_recall",
]
