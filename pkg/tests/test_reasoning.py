import json
from pathlib import Path
from types import SimpleNamespace

import httpx
import pytest

from regjudge.corpus import Region, pick_title
from regjudge.errors import (
    InvalidInput,
    MalformedOutput,
    NoJudgments,
    NotFound,
    ProviderError,
    ProviderTimeout,
)
from regjudge.reasoning import (
    ApplicabilityJudgment,
    ApplicabilityLabel,
    CueChatProvider,
    Provenance,
    RegionMode,
    RemoteChatProvider,
    ScriptedChatProvider,
    build_prompt,
    classify,
    default_few_shot,
    enrich_judgments,
    parse_judgments,
    parse_label,
    pseudo_label_fallback,
)
from regjudge.retrieval import RetrievalCandidate
from regjudge.schemas import validate_payload

from conftest import make_record

TRANSCRIPT_DIR = Path(__file__).parent / "fixtures" / "transcripts"
TRANSCRIPT_FILES = sorted(TRANSCRIPT_DIR.glob("*.json"))


def as_candidate(record, rank: int = 1) -> RetrievalCandidate:
    return RetrievalCandidate(
        norm_id=record.norm_id, region=record.region,
        dense_score=0.9, keyword_score=0.1, final_score=0.74, rank=rank)


@pytest.fixture()
def trio(corpus):
    """The three records the transcript fixtures judge."""
    return [
        corpus.get("yy0667", Region.CN),
        corpus.get("iso15197", Region.US),
        corpus.get("21cfr870.1130", Region.US),
    ]


class TestParseLabel:
    @pytest.mark.parametrize("raw,expected", [
        ("Mandatory", ApplicabilityLabel.MANDATORY),
        ("MANDATORY", ApplicabilityLabel.MANDATORY),
        ("  recommended ", ApplicabilityLabel.RECOMMENDED),
        ("Not Applicable", ApplicabilityLabel.NOT_APPLICABLE),
        ("not_applicable", ApplicabilityLabel.NOT_APPLICABLE),
        ("not-applicable", ApplicabilityLabel.NOT_APPLICABLE),
        ("NotApplicable", ApplicabilityLabel.NOT_APPLICABLE),
    ])
    def test_tolerated_spellings(self, raw, expected):
        assert parse_label(raw) is expected

    @pytest.mark.parametrize("raw", ["Required", "optional", "N/A", "", "yes"])
    def test_closed_world(self, raw):
        with pytest.raises(ValueError):
            parse_label(raw)


class TestBuildPrompt:
    def test_blocks_render_in_order(self, trio):
        bundle = build_prompt("blood glucose meter",
                              [(r, as_candidate(r, i + 1))
                               for i, r in enumerate(trio)])
        text = bundle.prompt_text()
        assert text.index("[CANDIDATE 1]") < text.index("[CANDIDATE 2]") \
            < text.index("[CANDIDATE 3]") < text.index("[END CANDIDATES]")
        assert "standard_id: YY 0667-2008" in text
        assert "blood glucose meter" in text

    def test_cross_region_note_only_in_cross_mode(self, trio):
        pairs = [(r, as_candidate(r)) for r in trio]
        single = build_prompt("d", pairs, RegionMode.SINGLE).prompt_text()
        cross = build_prompt("d", pairs, RegionMode.CROSS).prompt_text()
        assert "jurisdiction" not in single
        assert "jurisdiction" in cross

    def test_few_shot_rendered_after_candidates(self, trio):
        bundle = build_prompt("d", [(trio[0], as_candidate(trio[0]))])
        text = bundle.prompt_text()
        assert text.index("[END CANDIDATES]") < text.index("Example 1")
        assert len(bundle.few_shot) == len(default_few_shot())

    def test_empty_device_text_rejected(self, trio):
        with pytest.raises(InvalidInput):
            build_prompt("   ", [(trio[0], as_candidate(trio[0]))])

    def test_candidate_count_bounds(self, trio):
        with pytest.raises(InvalidInput):
            build_prompt("d", [])
        pairs = [(trio[0], as_candidate(trio[0]))] * 11
        with pytest.raises(InvalidInput):
            build_prompt("d", pairs, max_candidates=10)

    def test_needs_two_few_shot_examples(self, trio):
        with pytest.raises(InvalidInput):
            build_prompt("d", [(trio[0], as_candidate(trio[0]))],
                         few_shot=[{"device": "x", "output": []}])


def cue_response(records, device_text="generic device"):
    bundle = build_prompt(device_text, [(r, as_candidate(r, i + 1))
                                        for i, r in enumerate(records)])
    raw = CueChatProvider().complete(bundle.messages(), 0.0)
    return json.loads(raw)


class TestCueProvider:
    def test_shall_yields_mandatory(self):
        rec = make_record("CUE 1", usage_condition="Devices shall pass leak tests.")
        out = cue_response([rec])
        assert out[0]["applicability"] == "Mandatory"
        assert "'shall'" in out[0]["justification"]

    def test_must_yields_mandatory(self):
        rec = make_record("CUE 2", limitation="Units must be sterile at delivery.")
        assert cue_response([rec])[0]["applicability"] == "Mandatory"

    def test_should_yields_recommended(self):
        rec = make_record("CUE 3", usage_condition="Laboratories should verify accuracy.")
        assert cue_response([rec])[0]["applicability"] == "Recommended"

    def test_no_cue_yields_not_applicable(self):
        rec = make_record("CUE 4", title_en="Dental chair dimensions")
        assert cue_response([rec])[0]["applicability"] == "Not Applicable"

    def test_strong_cue_beats_should(self):
        rec = make_record(
            "CUE 5",
            usage_condition="Devices shall conform; users should read the manual.")
        assert cue_response([rec])[0]["applicability"] == "Mandatory"

    def test_word_boundaries_respected(self):
        rec = make_record(
            "CUE 6", title_en="Mustard plaster marshalling shoulder support")
        assert cue_response([rec])[0]["applicability"] == "Not Applicable"

    def test_instruction_text_never_leaks_into_scan(self):
        # the surrounding instructions are full of shall/must/should;
        # a cue-free candidate must still come back Not Applicable
        rec = make_record("CUE 7", title_en="Neutral wording only")
        out = cue_response([rec])
        assert [o["applicability"] for o in out] == ["Not Applicable"]

    def test_clause_passthrough(self, corpus):
        rec = corpus.get("yy0667", Region.CN)
        out = cue_response([rec])
        assert out[0]["clause"] == "Section 3.1"

    def test_one_judgment_per_candidate_in_order(self, trio):
        out = cue_response(trio)
        assert [o["standard_id"] for o in out] == [r.id for r in trio]

    def test_multiline_text_scanned_fully(self):
        # cue sits on the second line of the composed text
        rec = make_record("CUE 8", title_en="Generic title",
                          limitation="Operators shall log every calibration.")
        assert cue_response([rec])[0]["applicability"] == "Mandatory"


class TestScriptedProvider:
    def test_playback_order(self):
        provider = ScriptedChatProvider(["one", "two"])
        assert provider.complete([], 0.0) == "one"
        assert provider.complete([], 0.0) == "two"
        assert provider.calls == 2

    def test_exception_items_raise(self):
        provider = ScriptedChatProvider([ProviderError("down", retryable=True)])
        with pytest.raises(ProviderError):
            provider.complete([], 0.0)

    def test_exhaustion_raises(self):
        provider = ScriptedChatProvider([])
        with pytest.raises(ProviderError) as excinfo:
            provider.complete([], 0.0)
        assert not excinfo.value.retryable


class TestClassify:
    def bundle(self, trio):
        return build_prompt("d", [(trio[0], as_candidate(trio[0]))],
                            temperature=0.1)

    def test_transcript_captures_exchange(self, trio):
        provider = ScriptedChatProvider(["[]"], model_id="mock-1")
        transcript = classify(provider, self.bundle(trio))
        assert transcript.raw_response == "[]"
        assert transcript.attempts == 1
        assert transcript.model_id == "mock-1"
        assert transcript.temperature == 0.1
        assert "[CANDIDATE 1]" in transcript.prompt

    def test_retryable_failure_then_success(self, trio):
        provider = ScriptedChatProvider(
            [ProviderTimeout("slow"), ProviderError("blip", retryable=True), "[]"])
        transcript = classify(provider, self.bundle(trio), max_retries=2)
        assert transcript.attempts == 3

    def test_non_retryable_fails_fast(self, trio):
        provider = ScriptedChatProvider(
            [ProviderError("denied", retryable=False), "[]"])
        with pytest.raises(ProviderError, match="denied"):
            classify(provider, self.bundle(trio), max_retries=5)
        assert provider.calls == 1

    def test_retries_exhausted_raises_last(self, trio):
        provider = ScriptedChatProvider(
            [ProviderTimeout("t1"), ProviderTimeout("t2"), ProviderTimeout("t3")])
        with pytest.raises(ProviderTimeout, match="t3"):
            classify(provider, self.bundle(trio), max_retries=2)


class TestParseJudgmentsFixtures:
    @pytest.mark.parametrize(
        "path", TRANSCRIPT_FILES, ids=[p.stem for p in TRANSCRIPT_FILES])
    def test_fixture(self, path, trio):
        fixture = json.loads(path.read_text(encoding="utf-8"))
        raw = fixture["raw_response"]
        expect = fixture["expect"]
        if expect["outcome"] == "malformed":
            with pytest.raises(MalformedOutput):
                parse_judgments(raw, trio)
            return
        if expect["outcome"] == "no_judgments":
            with pytest.raises(NoJudgments):
                parse_judgments(raw, trio)
            return
        parsed = parse_judgments(raw, trio)
        assert len(parsed.judgments) == expect["count"]
        assert parsed.dropped == expect["dropped"]
        got = {j.norm_id: j.applicability.value for j in parsed.judgments}
        assert got == expect["labels"]

    def test_fixture_corpus_is_big_enough(self):
        assert len(TRANSCRIPT_FILES) >= 6

    def test_malformed_error_preserves_raw(self, trio):
        with pytest.raises(MalformedOutput) as excinfo:
            parse_judgments("not even close", trio)
        assert excinfo.value.raw == "not even close"

    def test_non_array_json_rejected(self, trio):
        with pytest.raises(MalformedOutput):
            parse_judgments('{"standard_id": "YY 0667-2008"}', trio)

    def test_non_object_item_rejected(self, trio):
        with pytest.raises(MalformedOutput):
            parse_judgments('["just a string"]', trio)

    def test_provenance_is_llm(self, trio):
        raw = json.dumps([{"standard_id": "YY 0667-2008",
                           "applicability": "Mandatory",
                           "justification": "j", "clause": None}])
        parsed = parse_judgments(raw, trio)
        assert parsed.judgments[0].provenance is Provenance.LLM
        assert parsed.judgments[0].region is Region.CN


class TestEnrichJudgments:
    def parsed_trio(self, trio):
        raw = json.dumps([
            {"standard_id": "yy 0667-2008", "applicability": "Mandatory",
             "justification": "j", "clause": "made-up clause"},
            {"standard_id": "ISO 15197:2013", "applicability": "Recommended",
             "justification": "j", "clause": None},
        ])
        return parse_judgments(raw, trio).judgments

    def test_metadata_overwritten_from_corpus(self, corpus, trio):
        enriched = enrich_judgments(self.parsed_trio(trio), trio, corpus)
        assert enriched.dropped == 0
        first = enriched.judgments[0]
        authoritative = corpus.get("yy0667", Region.CN)
        assert first.standard_id == authoritative.id
        assert first.name == pick_title(authoritative)
        assert first.clause == authoritative.clause
        assert first.region is Region.CN

    def test_enriched_judgments_pass_schema(self, corpus, trio):
        enriched = enrich_judgments(self.parsed_trio(trio), trio, corpus)
        for judgment in enriched.judgments:
            validate_payload("judgment", judgment.to_dict())

    def test_region_free_judgment_resolved_when_unique(self, corpus, trio):
        j = ApplicabilityJudgment(
            standard_id="YY 0667-2008", norm_id="yy0667", name="",
            applicability=ApplicabilityLabel.MANDATORY, justification="j",
            clause=None, region=None, provenance=Provenance.PSEUDO_LABEL)
        enriched = enrich_judgments([j], trio, corpus)
        assert enriched.judgments[0].region is Region.CN

    def test_ambiguous_region_free_judgment_dropped(self):
        from regjudge.corpus import Corpus
        cn = make_record("AMB 1", region="CN")
        us = make_record("AMB 1", region="US")
        corpus = Corpus([cn, us])
        j = ApplicabilityJudgment(
            standard_id="AMB 1", norm_id="amb1", name="",
            applicability=ApplicabilityLabel.MANDATORY, justification="j",
            clause=None, region=None, provenance=Provenance.PSEUDO_LABEL)
        enriched = enrich_judgments([j], [cn, us], corpus)
        assert enriched.judgments == [] and enriched.dropped == 1

    def test_judgment_missing_from_corpus_dropped(self, trio):
        from regjudge.corpus import Corpus
        thin = Corpus([trio[1]])  # only iso15197 survives
        enriched = enrich_judgments(self.parsed_trio(trio), trio, thin)
        assert [j.norm_id for j in enriched.judgments] == ["iso15197"]
        assert enriched.dropped == 1


class TestPseudoLabelFallback:
    def gold_table(self):
        row = SimpleNamespace(
            standard_id="YY 1-2020", norm_id="yy1",
            applicability=ApplicabilityLabel.MANDATORY, justification="gold row")
        return [SimpleNamespace(device_id="d1", gold=[row])]

    def test_copies_gold_rows(self):
        judgments = pseudo_label_fallback("d1", self.gold_table())
        assert len(judgments) == 1
        j = judgments[0]
        assert j.provenance is Provenance.PSEUDO_LABEL
        assert j.region is None
        assert j.applicability is ApplicabilityLabel.MANDATORY
        assert j.justification == "gold row"

    def test_unknown_device_raises(self):
        with pytest.raises(NotFound):
            pseudo_label_fallback("missing", self.gold_table())


def chat_remote(transport, **kwargs) -> RemoteChatProvider:
    kwargs.setdefault("url", "http://chat.test/v1")
    return RemoteChatProvider("demo-chat", transport=transport, **kwargs)


class TestRemoteChatProvider:
    def test_success_extracts_content(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["model"] == "demo-chat"
            assert body["temperature"] == 0.3
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "[]"}}]})

        provider = chat_remote(httpx.MockTransport(handler))
        assert provider.complete([{"role": "user", "content": "hi"}], 0.3) == "[]"

    def test_5xx_is_retryable(self):
        provider = chat_remote(httpx.MockTransport(lambda r: httpx.Response(502)))
        with pytest.raises(ProviderError) as excinfo:
            provider.complete([], 0.0)
        assert excinfo.value.retryable

    def test_4xx_is_not_retryable(self):
        provider = chat_remote(httpx.MockTransport(lambda r: httpx.Response(404)))
        with pytest.raises(ProviderError) as excinfo:
            provider.complete([], 0.0)
        assert not excinfo.value.retryable

    def test_timeout_maps_to_provider_timeout(self):
        def handler(request):
            raise httpx.ReadTimeout("slow")

        provider = chat_remote(httpx.MockTransport(handler))
        with pytest.raises(ProviderTimeout):
            provider.complete([], 0.0)

    def test_malformed_body_raises(self):
        provider = chat_remote(httpx.MockTransport(
            lambda r: httpx.Response(200, json={"choices": []})))
        with pytest.raises(ProviderError):
            provider.complete([], 0.0)

    def test_secret_never_in_error_text(self):
        provider = chat_remote(httpx.MockTransport(lambda r: httpx.Response(403)),
                               api_key="sk-super-secret")
        with pytest.raises(ProviderError) as excinfo:
            provider.complete([], 0.0)
        assert "sk-super-secret" not in str(excinfo.value)

    def test_missing_configuration_rejected(self, monkeypatch):
        for env in ("REGJUDGE_LLM_URL", "REGJUDGE_LLM_MODEL"):
            monkeypatch.delenv(env, raising=False)
        with pytest.raises(InvalidInput):
            RemoteChatProvider()
