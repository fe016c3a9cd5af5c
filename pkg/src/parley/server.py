"""HTTP + server-sent-events service exposing conversations to UIs and adapters.

The API is a thin shell over the engine: every mutation funnels through the
engine's own command surface (message submit, force-express, delete, settings
and memory updates), so the single-writer model holds with any number of HTTP
clients and event-stream subscribers.

Event streams replay the conversation's full event log (or the tail after the
``Last-Event-ID`` header) and then follow live appends, one JSON object per
event, identical in schema to the JSONL simulation logs.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import threading
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .core import (
    ConfigRangeError,
    ConversationState,
    Participant,
    ProactivityConfig,
    UnknownParticipant,
)
from .engine import Engine, EngineConfig, ThoughtNotLive, UnknownThought, WallClock
from .providers import MockProvider, OpenAICompatProvider, Provider

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "PARLEY_API_TOKEN"
CORS_ENV_VAR = "PARLEY_CORS_ORIGINS"


def build_provider(config: Optional[dict]) -> Provider:
    """Construct a provider from a config mapping ({kind: mock|live, ...})."""
    config = dict(config or {})
    kind = config.pop("kind", "mock")
    if kind == "mock":
        return MockProvider(
            seed=int(config.get("seed", 0)),
            synthesize=bool(config.get("synthesize", True)),
        )
    if kind == "live":
        return OpenAICompatProvider(
            base_url=config["base_url"],
            model=config["model"],
            embed_model=config.get("embed_model", "text-embedding-3-small"),
            api_key_env=config.get("api_key_env", "OPENAI_API_KEY"),
        )
    raise ValueError(f"unknown provider kind {kind!r}")


class ParticipantIn(BaseModel):
    id: str
    display_name: Optional[str] = None
    kind: str = Field(pattern="^(human|agent)$")
    persona: list[str] = Field(default_factory=list)
    proactivity: Optional[dict] = None


class ConversationIn(BaseModel):
    participants: list[ParticipantIn]
    arbitration: str = "highest_score"
    pause_seconds: float = 10.0
    max_queue: int = 64
    seed: int = 0
    provider: Optional[dict] = None


class MessageIn(BaseModel):
    speaker: str
    text: str = Field(min_length=1)


class MemoryItemIn(BaseModel):
    kind: str
    text: str = Field(min_length=1)
    weight: float = 1.0


class _Worker(threading.Thread):
    """Drives one engine: processes triggers and fires the pause watchdog."""

    def __init__(self, engine: Engine, poll_seconds: float = 0.02):
        super().__init__(daemon=True)
        self.engine = engine
        self.poll_seconds = poll_seconds
        self._halt = threading.Event()

    def run(self) -> None:
        while not self._halt.is_set():
            try:
                if self.engine.step() is None:
                    self.engine.pause_watchdog()
                    self._halt.wait(self.poll_seconds)
            except Exception:
                logger.exception("engine worker error")
                self._halt.wait(self.poll_seconds)

    def stop(self) -> None:
        self._halt.set()


class ConversationRegistry:
    """Owns every conversation engine served by this process."""

    def __init__(self, default_provider_config: Optional[dict] = None,
                 run_workers: bool = True):
        self.default_provider_config = default_provider_config or {"kind": "mock"}
        self.run_workers = run_workers
        self.engines: dict[str, Engine] = {}
        self._workers: dict[str, _Worker] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def create(self, spec: ConversationIn) -> tuple[str, Engine]:
        participants = []
        for p in spec.participants:
            proactivity = None
            if p.kind == "agent":
                proactivity = ProactivityConfig.from_dict(p.proactivity or {})
            participants.append(Participant(
                id=p.id,
                display_name=p.display_name or p.id.capitalize(),
                kind=p.kind,
                persona=list(p.persona),
                proactivity=proactivity,
            ))
        with self._lock:
            self._counter += 1
            cid = f"c{self._counter:03d}"
        provider = build_provider(spec.provider or self.default_provider_config)
        state = ConversationState(id=cid, participants=participants, rng_seed=spec.seed)
        config = EngineConfig(arbitration=spec.arbitration, max_queue=spec.max_queue,
                              pause_seconds=spec.pause_seconds)
        engine = Engine(state, provider, config, clock=WallClock())
        self.engines[cid] = engine
        if self.run_workers:
            worker = _Worker(engine)
            worker.start()
            self._workers[cid] = worker
        return cid, engine

    def get(self, cid: str) -> Engine:
        engine = self.engines.get(cid)
        if engine is None:
            raise HTTPException(404, f"unknown conversation {cid}")
        return engine

    def resolve_participant(self, pid: str):
        if ":" in pid:
            cid, bare = pid.split(":", 1)
            engine = self.get(cid)
            runtime = engine.agents.get(bare)
            if runtime is None:
                raise HTTPException(404, f"unknown participant {pid}")
            return engine, runtime
        matches = [
            (engine, engine.agents[pid])
            for engine in self.engines.values()
            if pid in engine.agents
        ]
        if not matches:
            raise HTTPException(404, f"unknown participant {pid}")
        if len(matches) > 1:
            raise HTTPException(409, f"participant id {pid} is ambiguous; "
                                     "qualify it as <conversation>:<participant>")
        return matches[0]

    def resolve_thought(self, tid: str):
        matches = []
        for engine in self.engines.values():
            for runtime in engine.agents.values():
                th = runtime.reservoir.get(tid)
                if th is not None:
                    matches.append((engine, runtime, th))
        if not matches:
            raise HTTPException(404, f"unknown thought {tid}")
        if len(matches) > 1:
            raise HTTPException(409, f"thought id {tid} is ambiguous")
        return matches[0]

    def shutdown(self) -> None:
        for worker in self._workers.values():
            worker.stop()
        for worker in self._workers.values():
            worker.join(timeout=1.0)
        for engine in self.engines.values():
            engine.log.close()


def thought_view(thought) -> dict:
    return {
        "id": thought.id,
        "owner": thought.owner,
        "text": thought.text,
        "system": thought.system,
        "state": thought.state,
        "stimuli": list(thought.stimuli),
        "saliency": thought.saliency_at_creation,
        "score": thought.evaluation.final if thought.evaluation else None,
        "created_at": thought.created_at,
    }


def create_app(registry: Optional[ConversationRegistry] = None,
               cors_origins: Optional[list[str]] = None,
               auth_token: Optional[str] = None) -> FastAPI:
    registry = registry or ConversationRegistry()
    token = auth_token if auth_token is not None else os.environ.get(TOKEN_ENV_VAR)
    origins = cors_origins or [
        o.strip() for o in os.environ.get(CORS_ENV_VAR, "*").split(",") if o.strip()
    ]

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        registry.shutdown()

    app = FastAPI(title="parley", lifespan=lifespan)
    app.state.registry = registry
    app.add_middleware(
        CORSMiddleware,
        allow_origins=origins,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def require_auth(request: Request) -> None:
        if token and request.headers.get("Authorization") != f"Bearer {token}":
            raise HTTPException(401, "missing or invalid bearer token")

    auth = Depends(require_auth)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "conversations": len(registry.engines)}

    @app.get("/conversations", dependencies=[auth])
    def list_conversations():
        return {"conversations": [
            {"id": cid, "participants": [p.id for p in engine.state.participants]}
            for cid, engine in registry.engines.items()
        ]}

    @app.post("/conversations", status_code=201, dependencies=[auth])
    def create_conversation(spec: ConversationIn):
        try:
            cid, engine = registry.create(spec)
        except (ConfigRangeError, ValueError) as exc:
            raise HTTPException(422, str(exc))
        return {"id": cid, **engine.state.snapshot()}

    @app.get("/conversations/{cid}", dependencies=[auth])
    def conversation_snapshot(cid: str):
        engine = registry.get(cid)
        snapshot = engine.state.snapshot()
        snapshot["queue_depth"] = engine.queue_depth()
        return snapshot

    @app.post("/conversations/{cid}/messages", status_code=202, dependencies=[auth])
    def post_message(cid: str, message: MessageIn):
        engine = registry.get(cid)
        try:
            utt = engine.submit_message(message.speaker, message.text)
        except UnknownParticipant as exc:
            raise HTTPException(404, f"unknown participant {exc}")
        return {"utterance": utt.to_dict(), "queue_depth": engine.queue_depth()}

    @app.get("/conversations/{cid}/events", dependencies=[auth])
    async def event_stream(cid: str, request: Request, last_event_id: int = 0):
        engine = registry.get(cid)
        header = request.headers.get("last-event-id")
        cursor = int(header) if header else last_event_id

        async def gen():
            position = cursor
            idle = 0.0
            while True:
                if await request.is_disconnected():
                    return
                batch = engine.log.events_since(position)
                for event in batch:
                    position = event["seq"]
                    yield (f"id: {event['seq']}\n"
                           f"event: {event['type']}\n"
                           f"data: {json.dumps(event, sort_keys=True)}\n\n")
                if not batch:
                    await asyncio.sleep(0.05)
                    idle += 0.05
                    if idle >= 1.0:
                        idle = 0.0
                        yield ": ping\n\n"
                else:
                    idle = 0.0

        return StreamingResponse(gen(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    @app.get("/participants/{pid}/thoughts", dependencies=[auth])
    def participant_thoughts(pid: str):
        _, runtime = registry.resolve_participant(pid)
        return {"thoughts": [thought_view(t) for t in runtime.reservoir.thoughts]}

    @app.post("/thoughts/{tid}/express", dependencies=[auth])
    def force_express(tid: str):
        engine, _, thought = registry.resolve_thought(tid)
        try:
            utt = engine.force_express(tid)
        except UnknownThought:
            raise HTTPException(404, f"unknown thought {tid}")
        except ThoughtNotLive as exc:
            raise HTTPException(409, str(exc))
        return {"utterance": utt.to_dict(), "thought": thought_view(thought)}

    @app.delete("/thoughts/{tid}", status_code=204, dependencies=[auth])
    def delete_thought(tid: str):
        engine, _, _ = registry.resolve_thought(tid)
        try:
            engine.delete_thought(tid)
        except UnknownThought:
            raise HTTPException(404, f"unknown thought {tid}")
        except ThoughtNotLive as exc:
            raise HTTPException(409, str(exc))
        return Response(status_code=204)

    @app.get("/thoughts/{tid}/reasoning", dependencies=[auth])
    def thought_reasoning(tid: str):
        _, _, thought = registry.resolve_thought(tid)
        if thought.evaluation is None:
            raise HTTPException(404, f"thought {tid} has not been evaluated")
        return {"thought": tid, **thought.evaluation.to_dict()}

    @app.get("/participants/{pid}/memory", dependencies=[auth])
    def get_memory(pid: str):
        _, runtime = registry.resolve_participant(pid)
        return {"items": [
            {"id": i.id, "kind": i.kind, "text": i.text, "weight": i.weight,
             "last_accessed": i.last_accessed}
            for i in runtime.store.items
        ]}

    @app.put("/participants/{pid}/memory", dependencies=[auth])
    def put_memory(pid: str, items: list[MemoryItemIn]):
        _, runtime = registry.resolve_participant(pid)
        try:
            created = runtime.store.import_json([i.model_dump() for i in items])
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return {"items": [
            {"id": i.id, "kind": i.kind, "text": i.text, "weight": i.weight,
             "last_accessed": i.last_accessed}
            for i in created
        ]}

    @app.get("/participants/{pid}/settings", dependencies=[auth])
    def get_settings(pid: str):
        _, runtime = registry.resolve_participant(pid)
        return runtime.participant.proactivity.to_dict()

    @app.put("/participants/{pid}/settings", dependencies=[auth])
    def put_settings(pid: str, settings: dict):
        _, runtime = registry.resolve_participant(pid)
        try:
            runtime.participant.proactivity = ProactivityConfig.from_dict(settings)
        except (ConfigRangeError, TypeError) as exc:
            raise HTTPException(422, str(exc))
        return runtime.participant.proactivity.to_dict()

    return app
