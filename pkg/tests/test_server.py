import json
import socket
import threading
import time

import httpx
import pytest
import uvicorn
from fastapi.testclient import TestClient

from parley.server import ConversationRegistry, create_app


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def live_server():
    """Real uvicorn server in a thread, for streaming-response tests."""
    registry = ConversationRegistry(run_workers=False)
    app = create_app(registry=registry)
    port = free_port()
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("uvicorn failed to start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}", registry
    server.should_exit = True
    thread.join(timeout=5)


AGENT = {
    "id": "ava",
    "display_name": "Ava",
    "kind": "agent",
    "persona": ["I am a yoga instructor.", "I love hiking in the mountains."],
    "proactivity": {"imThreshold": 3.0, "interruptThreshold": 4.8, "system1Prob": 0.2},
}
HUMAN = {"id": "sam", "kind": "human"}


def conversation_body(**overrides):
    body = {
        "participants": [HUMAN, AGENT],
        "provider": {"kind": "mock", "synthesize": True, "seed": 5},
        "seed": 5,
    }
    body.update(overrides)
    return body


@pytest.fixture
def manual():
    """App whose engines are driven manually (no background workers)."""
    registry = ConversationRegistry(run_workers=False)
    app = create_app(registry=registry)
    with TestClient(app) as client:
        yield client, registry


def create_conversation(client, **overrides) -> str:
    resp = client.post("/conversations", json=conversation_body(**overrides))
    assert resp.status_code == 201, resp.text
    return resp.json()["id"]


def drive(registry, cid, messages=("Hey Ava, I tried yoga today!",)):
    engine = registry.engines[cid]
    for text in messages:
        engine.submit_message("sam", text)
    engine.drain()
    return engine


class TestConversations:
    def test_create_returns_snapshot(self, manual):
        client, _ = manual
        resp = client.post("/conversations", json=conversation_body())
        data = resp.json()
        assert data["id"] == "c001"
        assert [p["id"] for p in data["participants"]] == ["sam", "ava"]
        assert data["transcript"] == []

    def test_invalid_proactivity_rejected(self, manual):
        client, _ = manual
        bad_agent = dict(AGENT, proactivity={"imThreshold": 9})
        resp = client.post("/conversations", json=conversation_body(
            participants=[HUMAN, bad_agent]))
        assert resp.status_code == 422

    def test_unknown_conversation_404(self, manual):
        client, _ = manual
        assert client.get("/conversations/c999").status_code == 404

    def test_post_message_enqueues_trigger(self, manual):
        client, registry = manual
        cid = create_conversation(client)
        resp = client.post(f"/conversations/{cid}/messages",
                           json={"speaker": "sam", "text": "Hello"})
        assert resp.status_code == 202
        data = resp.json()
        assert data["utterance"]["timestep"] == 1
        assert data["queue_depth"] == 1

    def test_unknown_speaker_404(self, manual):
        client, _ = manual
        cid = create_conversation(client)
        resp = client.post(f"/conversations/{cid}/messages",
                           json={"speaker": "zed", "text": "hi"})
        assert resp.status_code == 404

    def test_snapshot_reflects_engine_progress(self, manual):
        client, registry = manual
        cid = create_conversation(client)
        drive(registry, cid)
        snapshot = client.get(f"/conversations/{cid}").json()
        assert len(snapshot["transcript"]) >= 1
        assert snapshot["queue_depth"] == 0


class TestThoughts:
    def test_list_thoughts_with_badges(self, manual):
        client, registry = manual
        cid = create_conversation(client)
        drive(registry, cid)
        data = client.get("/participants/ava/thoughts").json()
        assert data["thoughts"], "agent formed no thoughts"
        view = data["thoughts"][0]
        assert {"id", "text", "system", "state", "stimuli", "saliency", "score"} <= set(view)

    def test_force_express_appends_exactly_one_utterance(self, manual):
        client, registry = manual
        cid = create_conversation(client)
        engine = drive(registry, cid)
        live = [t for t in engine.agents["ava"].reservoir.thoughts if t.live]
        target = live[0]
        before = len(engine.state.transcript)
        resp = client.post(f"/thoughts/{target.id}/express")
        assert resp.status_code == 200
        assert len(engine.state.transcript) == before + 1
        assert resp.json()["thought"]["state"] == "expressed"

    def test_force_express_twice_409(self, manual):
        client, registry = manual
        cid = create_conversation(client)
        engine = drive(registry, cid)
        target = [t for t in engine.agents["ava"].reservoir.thoughts if t.live][0]
        assert client.post(f"/thoughts/{target.id}/express").status_code == 200
        assert client.post(f"/thoughts/{target.id}/express").status_code == 409

    def test_unknown_thought_404(self, manual):
        client, _ = manual
        create_conversation(client)
        assert client.post("/thoughts/ava.t99/express").status_code == 404
        assert client.delete("/thoughts/ava.t99").status_code == 404

    def test_delete_thought(self, manual):
        client, registry = manual
        cid = create_conversation(client)
        engine = drive(registry, cid)
        target = [t for t in engine.agents["ava"].reservoir.thoughts if t.live][0]
        assert client.delete(f"/thoughts/{target.id}").status_code == 204
        assert target.state == "discarded"

    def test_reasoning_view_capped_factors(self, manual):
        client, registry = manual
        cid = create_conversation(client)
        engine = drive(registry, cid)
        evaluated = [t for t in engine.agents["ava"].reservoir.thoughts if t.evaluation]
        resp = client.get(f"/thoughts/{evaluated[0].id}/reasoning")
        assert resp.status_code == 200
        data = resp.json()
        assert len(data["positive_factors"]) <= 2
        assert len(data["negative_factors"]) <= 2
        assert data["distribution"]
        assert data["final"] == evaluated[0].evaluation.final


class TestSettingsAndMemory:
    def test_settings_round_trip(self, manual):
        client, _ = manual
        create_conversation(client)
        resp = client.put("/participants/ava/settings", json={
            "system1Prob": 0.7, "imThreshold": 4.49, "interruptThreshold": 4.8,
            "proactiveTone": False,
        })
        assert resp.status_code == 200
        assert client.get("/participants/ava/settings").json()["imThreshold"] == 4.49

    def test_out_of_range_settings_422(self, manual):
        client, _ = manual
        create_conversation(client)
        resp = client.put("/participants/ava/settings", json={"imThreshold": 9})
        assert resp.status_code == 422

    def test_inverted_thresholds_422(self, manual):
        client, _ = manual
        create_conversation(client)
        resp = client.put("/participants/ava/settings",
                          json={"imThreshold": 5.0, "interruptThreshold": 4.0})
        assert resp.status_code == 422

    def test_memory_round_trip(self, manual):
        client, _ = manual
        create_conversation(client)
        items = [{"kind": "interest", "text": "I collect postcards", "weight": 1.5}]
        resp = client.put("/participants/ava/memory", json=items)
        assert resp.status_code == 200
        listed = client.get("/participants/ava/memory").json()["items"]
        assert [(i["kind"], i["text"], i["weight"]) for i in listed] == [
            ("interest", "I collect postcards", 1.5)]

    def test_bad_memory_weight_422(self, manual):
        client, _ = manual
        create_conversation(client)
        resp = client.put("/participants/ava/memory",
                          json=[{"kind": "interest", "text": "x", "weight": -1}])
        assert resp.status_code == 422

    def test_ambiguous_participant_needs_qualifier(self, manual):
        client, _ = manual
        create_conversation(client)
        create_conversation(client)
        assert client.get("/participants/ava/settings").status_code == 409
        assert client.get("/participants/c001:ava/settings").status_code == 200


class TestEventStream:
    def _read_events(self, base_url, cid, expect, last_event_id=None, timeout=5.0):
        headers = {"Last-Event-ID": str(last_event_id)} if last_event_id else {}
        events = []
        with httpx.Client(base_url=base_url, timeout=timeout) as client:
            with client.stream("GET", f"/conversations/{cid}/events",
                               headers=headers) as resp:
                assert resp.status_code == 200
                assert resp.headers["content-type"].startswith("text/event-stream")
                for line in resp.iter_lines():
                    if line.startswith("data: "):
                        events.append(json.loads(line[len("data: "):]))
                        if len(events) >= expect:
                            break
        return events

    def _setup(self, base_url):
        with httpx.Client(base_url=base_url, timeout=5.0) as client:
            resp = client.post("/conversations", json=conversation_body())
            assert resp.status_code == 201
            return resp.json()["id"]

    def test_replay_then_live_tail_in_order(self, live_server):
        base_url, registry = live_server
        cid = self._setup(base_url)
        drive(registry, cid)
        total = len(registry.engines[cid].log.events)
        events = self._read_events(base_url, cid, expect=total)
        assert [e["seq"] for e in events] == list(range(1, total + 1))
        types = {e["type"] for e in events}
        assert {"utterance", "trigger", "thought_created", "thought_evaluated",
                "decision"} <= types

    def test_resume_from_last_event_id(self, live_server):
        base_url, registry = live_server
        cid = self._setup(base_url)
        drive(registry, cid)
        total = len(registry.engines[cid].log.events)
        tail = self._read_events(base_url, cid, expect=total - 3, last_event_id=3)
        assert [e["seq"] for e in tail] == list(range(4, total + 1))

    def test_live_tail_follows_new_activity(self, live_server):
        base_url, registry = live_server
        cid = self._setup(base_url)
        engine = drive(registry, cid)
        already = len(engine.log.events)

        def later():
            time.sleep(0.3)
            engine.submit_message("sam", "another message")
            engine.drain()

        threading.Thread(target=later, daemon=True).start()
        events = self._read_events(base_url, cid, expect=already + 1, timeout=10.0)
        assert len(events) >= already + 1
        assert [e["seq"] for e in events] == list(range(1, len(events) + 1))

    def test_expressed_event_precedes_its_utterance(self, manual):
        client, registry = manual
        cid = create_conversation(client)
        engine = drive(registry, cid)
        live = [t for t in engine.agents["ava"].reservoir.thoughts if t.live]
        client.post(f"/thoughts/{live[0].id}/express")
        events = engine.log.events
        expressed_seq = [e["seq"] for e in events if e["type"] == "thought_expressed"]
        final_utterance_seq = max(e["seq"] for e in events if e["type"] == "utterance")
        assert expressed_seq and expressed_seq[-1] < final_utterance_seq


class TestWorkerMode:
    def test_background_worker_processes_messages(self):
        registry = ConversationRegistry(run_workers=True)
        app = create_app(registry=registry)
        with TestClient(app) as client:
            cid = create_conversation(client)
            client.post(f"/conversations/{cid}/messages",
                        json={"speaker": "sam", "text": "Hi Ava, tried yoga today!"})
            deadline = time.time() + 5.0
            thoughts = []
            while time.time() < deadline:
                thoughts = client.get("/participants/ava/thoughts").json()["thoughts"]
                if thoughts:
                    break
                time.sleep(0.05)
            assert thoughts, "worker never processed the trigger"


class TestAuth:
    def test_token_required_when_configured(self):
        registry = ConversationRegistry(run_workers=False)
        app = create_app(registry=registry, auth_token="sekrit")
        with TestClient(app) as client:
            assert client.post("/conversations", json=conversation_body()).status_code == 401
            ok = client.post("/conversations", json=conversation_body(),
                             headers={"Authorization": "Bearer sekrit"})
            assert ok.status_code == 201

    def test_healthz_open(self, manual):
        client, _ = manual
        assert client.get("/healthz").json()["status"] == "ok"
