import json
from fractions import Fraction

import httpx
import pytest

from atlas.config import AtlasConfig
from atlas.errors import BackendError, BadRequestError, RefusedError
from atlas.gateway import (
    DomainContext,
    ModelGateway,
    PromptTemplate,
    load_default_prompts,
    load_screening_fixtures,
    mock_extraction,
    screen_query,
    validate_extraction_payload,
)
from atlas.segmentation import ClipWindow
from atlas.vector_index import ClipDescriptor, cosine


def _clip(video="cam-a", index=1):
    return ClipWindow(
        video_id=video, index=index, start_s=Fraction(0), length_s=Fraction(30)
    )


def _descriptor(text, video="cam-a", index=1):
    return ClipDescriptor(
        video_id=video, clip_index=index, start_s=Fraction(0), end_s=Fraction(30),
        description=text,
    )


# -- screening

def test_screening_fixture_suite():
    fixtures = load_screening_fixtures()
    assert len(fixtures["refused"]) == 10
    assert len(fixtures["allowed"]) == 10
    for q in fixtures["refused"]:
        verdict = screen_query(q)
        assert not verdict.allowed, q
        assert verdict.reason
    for q in fixtures["allowed"]:
        assert screen_query(q).allowed, q


def test_screening_paper_examples():
    assert not screen_query("What race is the pedestrian?").allowed
    assert screen_query("Are there any cyclists?").allowed


def test_screening_empty_query():
    verdict = screen_query("")
    assert not verdict.allowed
    assert verdict.reason == "empty query"
    assert not screen_query("   ").allowed


def test_screening_is_deterministic():
    q = "Is the driver an immigrant?"
    assert screen_query(q) == screen_query(q)


def test_traffic_vocabulary_not_over_blocked():
    # "illegal crossing" and "going straight" are core domain phrases
    assert screen_query("Show every illegal crossing at the junction").allowed
    assert screen_query("Does the truck go straight through?").allowed
    assert screen_query("Was visibility poor visibility during the event?").allowed


# -- captioner

def test_mock_caption_deterministic_and_distinct(gateway):
    a = gateway.caption_clip(_clip(index=1))
    b = gateway.caption_clip(_clip(index=1))
    c = gateway.caption_clip(_clip(index=2))
    assert a == b
    assert a != c
    assert "cam-a:1" in a


# -- embedder

def test_mock_embedding_deterministic(gateway):
    v1 = gateway.embed_text("a pedestrian waits")
    v2 = gateway.embed_text("a pedestrian waits")
    assert v1 == v2
    assert cosine(v1, v2) == pytest.approx(1.0, abs=1e-9)


def test_mock_embedding_lexical_overlap_orders_cosine(gateway):
    base = gateway.embed_text("pedestrian crossing crosswalk")
    close = gateway.embed_text("pedestrian crossing")
    far = gateway.embed_text("parked truck engine")
    assert cosine(base, close) > cosine(base, far)


def test_embed_rejects_empty_text(gateway):
    with pytest.raises(BadRequestError):
        gateway.embed_text("  ")


# -- enricher

def test_enrichment_contains_original_and_expands_only_mentioned(gateway):
    out = gateway.enrich_query("cyclists near cars")
    assert "cyclists near cars" in out
    expansion = out.replace("cyclists near cars", "")
    # cyclist and vehicle expansions only: no crosswalk / conflict terms
    assert "motorized vehicle" in expansion
    assert "crossing intention" in expansion
    assert "crosswalk" not in expansion
    assert "conflict" not in expansion


def test_enrichment_no_matches_returns_query_unchanged(gateway):
    assert gateway.enrich_query("anything unusual happening?") == "anything unusual happening?"


def test_enrichment_refuses_screened_query(gateway):
    with pytest.raises(RefusedError):
        gateway.enrich_query("What race is the pedestrian?")


def test_enrichment_terms_come_from_taxonomy(gateway, taxonomy):
    out = gateway.enrich_query("are trucks turning near pedestrians crossing?")
    if "(related: " in out:
        terms = out.split("(related: ")[1].rstrip(")").split(", ")
        display_names = {c.display_name for c in taxonomy.classes}
        assert set(terms) <= display_names


# -- narrator

def test_mock_narrative_deterministic(gateway):
    d = _descriptor("A dark SUV approaches the crosswalk. A pedestrian waits.")
    q = "what does the SUV do?"
    assert gateway.generate_narrative(q, d) == gateway.generate_narrative(q, d)


def test_mock_narrative_includes_prior_clip_marker(gateway):
    d = _descriptor("The bus blocks the junction. People wait.")
    convo = "Q: first\nA: something [clip cam-a:3]"
    out = gateway.generate_narrative("is the bus still blocking?", d, convo)
    assert "[clip cam-a:3]" in out


def test_mock_narrative_empty_evidence_errors(gateway):
    d = _descriptor("x")
    object.__setattr__(d, "description", "")
    with pytest.raises(BadRequestError, match="evidence missing"):
        gateway.generate_narrative("q", d)


# -- extractor

def test_extraction_paper_style_entities(gateway, taxonomy):
    answer = "A dark SUV nearly hits a man on a bike at the crosswalk."
    mentions = gateway.extract_entities(answer, "conflicts involving cyclists")
    by_class = {m.class_id: m for m in mentions}
    assert by_class["motorized_vehicle"].surface == "dark SUV"
    assert by_class["pedestrian"].surface == "man on a bike"
    assert by_class["crosswalk"].surface == "crosswalk"
    assert by_class["motorized_vehicle"].attributes == {"type": "suv", "color": "dark"}


def test_extraction_spans_are_exact(gateway):
    answer = "The silver sedan yields to an elderly pedestrian near the traffic light."
    for m in gateway.extract_entities(answer, "describe"):
        assert answer[m.span[0] : m.span[1]] == m.surface


def test_extraction_no_taxonomy_terms_yields_empty(gateway):
    assert gateway.extract_entities("nothing to see here", "anything") == []


def test_extraction_dedupes_semantically_identical_phrases(gateway, taxonomy):
    answer = "A dark SUV passes. The dark SUV returns. Later the dark SUV stops."
    mentions = [m for m in gateway.extract_entities(answer, "suv") if m.class_id == "motorized_vehicle"]
    assert len(mentions) == 1


def test_extraction_relation_triples(gateway, taxonomy):
    answer = "The dark SUV approaches the crosswalk, and the bus driver yields to a pedestrian."
    result = gateway.extract(answer, "describe")
    surfaces = {i: m.surface for i, m in enumerate(result.mentions)}
    labeled = {(surfaces[s], label, surfaces[o]) for s, label, o in result.triples}
    assert ("dark SUV", "approaches", "crosswalk") in labeled
    assert ("bus driver", "yields-to", "pedestrian") in labeled


def test_extraction_relations_do_not_span_sentences(gateway):
    answer = "The dark SUV stops. Causes aside, a pedestrian crosses."
    result = gateway.extract(answer, "describe")
    surfaces = {i: m.surface for i, m in enumerate(result.mentions)}
    assert all(
        not (surfaces[s] == "dark SUV" and surfaces[o] == "pedestrian")
        for s, _, o in result.triples
    )


def test_validate_extraction_drops_out_of_taxonomy_and_bad_spans(taxonomy):
    answer = "A dark SUV passes a pedestrian."
    payload = {
        "mentions": [
            {"surface": "dark SUV", "class": "motorized_vehicle", "span": [2, 10],
             "attributes": {"color": "dark", "hat": "none"}},
            {"surface": "alien", "class": "alien", "span": [0, 5]},
            {"surface": "pedestrian", "class": "pedestrian", "span": [20, 30]},
            {"surface": "mismatch", "class": "pedestrian", "span": [0, 8]},
        ],
        "triples": [[0, "approaches", 2], [0, "involves", 1]],
    }
    result = validate_extraction_payload(payload, answer, taxonomy)
    assert result.dropped == 2
    assert [m.class_id for m in result.mentions] == ["motorized_vehicle", "pedestrian"]
    # attribute keys outside the class contract are filtered out
    assert result.mentions[0].attributes == {"color": "dark"}
    # triples referencing dropped mentions vanish; survivors are remapped
    assert result.triples == ((0, "approaches", 1),)


def test_mock_determinism_across_gateway_instances(taxonomy, config):
    a = ModelGateway(taxonomy, config)
    b = ModelGateway(taxonomy, config)
    clip = _clip()
    assert a.caption_clip(clip) == b.caption_clip(clip)
    assert a.embed_text("same text") == b.embed_text("same text")
    answer = "A red truck blocks the sidewalk."
    assert mock_extraction(answer, "q", taxonomy) == mock_extraction(answer, "q", taxonomy)


# -- prompt templates

def test_default_prompts_carry_required_placeholders():
    prompts = load_default_prompts()
    assert {"user_question", "context", "conversation_context"} <= prompts["narrator"].placeholders()
    assert {"query", "context_type"} <= prompts["enricher"].placeholders()
    assert "question" in prompts["extractor"].placeholders()


def test_prompt_render_replaces_only_known_placeholders():
    t = PromptTemplate(role="narrator", body="Q={user_question} C={context} X={unknown_thing}")
    out = t.render(user_question="hi", context="ctx")
    assert out == "Q=hi C=ctx X={unknown_thing}"


def test_missing_placeholder_rejected_at_init(taxonomy, config):
    broken = {"narrator": PromptTemplate(role="narrator", body="no placeholders")}
    with pytest.raises(BadRequestError, match="missing placeholders"):
        ModelGateway(taxonomy, config, prompts=broken)


def test_backend_temperature_defaults(config):
    assert config.backend("enricher").temperature == 0.05
    assert config.backend("narrator").temperature == 0.3


# -- remote transport

def _remote_config(**roles):
    backends = {
        role: {"mode": "remote", "endpoint": f"http://models.test/{role}"}
        for role in roles
    }
    return AtlasConfig(backends=backends, retry_attempts=3)


def test_remote_narrator_success(taxonomy):
    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        assert body["role"] == "narrator"
        assert "USER QUESTION: what happens?" in body["prompt"]
        return httpx.Response(200, json={"text": "A calm junction."})

    gateway = ModelGateway(
        taxonomy,
        _remote_config(narrator=True),
        transport=httpx.MockTransport(handler),
        sleeper=lambda s: None,
    )
    out = gateway.generate_narrative("what happens?", _descriptor("calm scene."))
    assert out == "A calm junction."


def test_remote_failure_retries_then_raises_with_attempt_count(taxonomy):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(1)
        return httpx.Response(503)

    gateway = ModelGateway(
        taxonomy,
        _remote_config(embedder=True),
        transport=httpx.MockTransport(handler),
        sleeper=lambda s: None,
    )
    with pytest.raises(BackendError) as err:
        gateway.embed_text("hello")
    assert len(calls) == 3
    assert err.value.attempts == 3
    assert err.value.stage == "embed"


def test_remote_4xx_fails_without_retry(taxonomy):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(1)
        return httpx.Response(400)

    gateway = ModelGateway(
        taxonomy,
        _remote_config(captioner=True),
        transport=httpx.MockTransport(handler),
        sleeper=lambda s: None,
    )
    with pytest.raises(BackendError):
        gateway.caption_clip(_clip())
    assert len(calls) == 1


def test_remote_refusal_passes_through(taxonomy):
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json={"refused": True, "reason": "policy"})

    gateway = ModelGateway(
        taxonomy,
        _remote_config(narrator=True),
        transport=httpx.MockTransport(handler),
        sleeper=lambda s: None,
    )
    with pytest.raises(RefusedError, match="policy"):
        gateway.generate_narrative("q", _descriptor("text."))


def test_remote_mode_requires_endpoint():
    with pytest.raises(BadRequestError, match="endpoint"):
        AtlasConfig(backends={"narrator": {"mode": "remote"}}).backend("narrator")
