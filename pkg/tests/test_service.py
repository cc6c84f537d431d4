import json
from importlib import resources

import pytest
from fastapi.testclient import TestClient
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

from atlas.service import create_app

CONFLICT_QUERY = "Did a man on a bike swerve out of the crosswalk to avoid an SUV?"
BUS_QUERY = "Is the bus blocking the intersection being exploited by any pedestrian to act imprudently?"


def _schema_validator(name: str) -> Draft202012Validator:
    schemas = {}
    root = resources.files("atlas.schemas")
    for entry in root.iterdir():
        if entry.name.endswith(".schema.json"):
            doc = json.loads(entry.read_text("utf-8"))
            schemas[doc["$id"]] = doc
    registry = Registry().with_resources(
        (sid, Resource.from_contents(doc)) for sid, doc in schemas.items()
    )
    return Draft202012Validator(schemas[f"atlas/{name}"], registry=registry)


@pytest.fixture()
def client(orchestrator, config):
    app = create_app(orchestrator, config)
    with TestClient(app) as test_client:
        yield test_client


def _session(client) -> str:
    response = client.post("/api/sessions")
    assert response.status_code == 201
    return response.json()["session_id"]


def test_health(client):
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_sessions_are_unique(client):
    assert _session(client) != _session(client)


def test_query_returns_schema_valid_answer(client):
    session_id = _session(client)
    response = client.post(f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY})
    assert response.status_code == 200
    doc = response.json()
    _schema_validator("answer").validate(doc)
    assert doc["chosen"] == {"video_id": "cam-a", "clip_index": 1}
    # turn recorded on the session
    state = client.get(f"/api/sessions/{session_id}").json()
    assert len(state["turns"]) == 1
    assert state["active_clip"] == {"video_id": "cam-a", "clip_index": 1}


def test_profiling_query_refused_with_reason(client):
    session_id = _session(client)
    response = client.post(
        f"/api/sessions/{session_id}/query", json={"question": "What race is the pedestrian?"}
    )
    assert response.status_code == 403
    doc = response.json()
    _schema_validator("error").validate(doc)
    assert doc["code"] == "refused"
    assert doc["message"]


def test_unknown_session_not_found(client):
    response = client.post("/api/sessions/s-nope/query", json={"question": "hi"})
    assert response.status_code == 404
    assert response.json()["code"] == "not-found"


def test_graph_and_neighborhood_endpoints(client):
    session_id = _session(client)
    answer = client.post(
        f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY}
    ).json()
    answer_id = answer["answer_id"]

    graph = client.get(f"/api/answers/{answer_id}/graph").json()
    _schema_validator("graph").validate(graph)
    assert graph["nodes"]

    node_id = graph["nodes"][0]["node_id"]
    sub = client.get(f"/api/answers/{answer_id}/graph/{node_id}/neighborhood").json()
    _schema_validator("graph").validate(sub)
    assert any(n["node_id"] == node_id for n in sub["nodes"])

    zero = client.get(
        f"/api/answers/{answer_id}/graph/{node_id}/neighborhood", params={"radius": 0}
    ).json()
    assert len(zero["nodes"]) == 1 and zero["edges"] == []

    missing = client.get(f"/api/answers/{answer_id}/graph/n-nope/neighborhood")
    assert missing.status_code == 404


def test_overlays_for_chosen_clip(client):
    session_id = _session(client)
    answer = client.post(
        f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY}
    ).json()
    answer_id = answer["answer_id"]
    video_id = answer["chosen"]["video_id"]
    clip_index = answer["chosen"]["clip_index"]

    response = client.get(
        f"/api/clips/{video_id}/{clip_index}/overlays", params={"answer": answer_id}
    )
    assert response.status_code == 200
    doc = response.json()
    _schema_validator("overlay").validate(doc)
    assert doc["boxes"], "conflict fixture must ground at least one box series"
    assert all(s["confidence"] >= 0.65 for b in doc["boxes"] for s in b["samples"])
    assert {m["class_id"] for m in doc["masks"]} >= {"crosswalk"}


def test_overlays_scoped_to_related_set(client):
    session_id = _session(client)
    answer = client.post(
        f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY, "k": 1}
    ).json()
    response = client.get(
        "/api/clips/cam-b/2/overlays", params={"answer": answer["answer_id"]}
    )
    assert response.status_code == 404


def test_overlay_for_related_clips_in_other_videos(client):
    session_id = _session(client)
    answer = client.post(
        f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY}
    ).json()
    others = [r for r in answer["related"] if r["video_id"] != answer["chosen"]["video_id"]]
    assert others, "fixture answer must span two videos"
    for hit in others:
        response = client.get(
            f"/api/clips/{hit['video_id']}/{hit['clip_index']}/overlays",
            params={"answer": answer["answer_id"]},
        )
        assert response.status_code == 200
        doc = response.json()
        # tracks belong to the chosen clip's video; none leak into other videos,
        # even when frame ranges coincide numerically
        assert doc["boxes"] == []


def test_missing_media_is_not_found_but_overlays_work(client):
    session_id = _session(client)
    answer = client.post(
        f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY}
    ).json()
    media = client.get("/api/videos/cam-a/media")
    assert media.status_code == 404
    overlays = client.get(
        f"/api/clips/cam-a/1/overlays", params={"answer": answer["answer_id"]}
    )
    assert overlays.status_code == 200


def test_answer_refetchable_by_id(client):
    session_id = _session(client)
    answer = client.post(
        f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY}
    ).json()
    again = client.get(f"/api/answers/{answer['answer_id']}").json()
    assert again == answer


def test_websocket_stage_events_in_order(client):
    session_id = _session(client)
    validator = _schema_validator("event")
    with client.websocket_connect(f"/api/sessions/{session_id}/events") as ws:
        response = client.post(
            f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY}
        )
        assert response.status_code == 200
        stages = []
        while True:
            event = ws.receive_json()
            validator.validate(event)
            stages.append(event["stage"])
            if event["stage"] == "done":
                final = event
                break
    assert stages == [
        "screened", "enriched", "retrieved", "narrated", "extracted", "grounded", "done",
    ]
    assert final["detail"]["answer_id"] == response.json()["answer_id"]


def test_websocket_refused_query_emits_screened_then_done(client):
    session_id = _session(client)
    with client.websocket_connect(f"/api/sessions/{session_id}/events") as ws:
        response = client.post(
            f"/api/sessions/{session_id}/query", json={"question": "What race is the pedestrian?"}
        )
        assert response.status_code == 403
        first = ws.receive_json()
        second = ws.receive_json()
    assert first["stage"] == "screened"
    assert first["detail"] == {"allowed": False, "reason": response.json()["message"]}
    assert second["stage"] == "done"
    assert second["detail"] == {"refused": True}


def test_answer_persists_without_any_websocket(client, orchestrator):
    session_id = _session(client)
    response = client.post(
        f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY}
    )
    answer_id = response.json()["answer_id"]
    assert client.get(f"/api/answers/{answer_id}").status_code == 200


def test_websocket_unknown_session_closed(client):
    with pytest.raises(Exception):
        with client.websocket_connect("/api/sessions/s-nope/events") as ws:
            ws.receive_json()


def test_follow_up_over_http_switches_video(client):
    session_id = _session(client)
    client.post(f"/api/sessions/{session_id}/query", json={"question": CONFLICT_QUERY})
    follow = client.post(f"/api/sessions/{session_id}/query", json={"question": BUS_QUERY})
    assert follow.status_code == 200
    assert follow.json()["chosen"] == {"video_id": "cam-b", "clip_index": 1}
    state = client.get(f"/api/sessions/{session_id}").json()
    assert state["active_clip"] == {"video_id": "cam-b", "clip_index": 1}


def test_bad_request_body_rejected(client):
    session_id = _session(client)
    response = client.post(f"/api/sessions/{session_id}/query", json={"nope": 1})
    assert response.status_code == 422  # fastapi body validation
