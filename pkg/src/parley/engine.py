"""Trigger queue and per-agent cognition cycle orchestration.

One engine owns one conversation. All input funnels through the trigger
queue and every state mutation happens under the engine lock, so any number
of front-ends (server, CLI, tests) can drive the same engine safely.

A processed trigger runs one cycle: interpret the triggering utterance once,
classify the turn once, then for every agent retrieve stimuli, form thoughts,
evaluate them, and decide. Arbitration lets at most one agent speak per
trigger; the spoken utterance enqueues the next trigger.

Everything observable is appended to a structured event log (JSONL-ready):
types utterance, trigger, thought_created, thought_evaluated, decision,
thought_expressed.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import memory as memory_mod
from .cognition import ThoughtReservoir, Thought, form_system1, form_system2, prune_reservoir
from .core import ConversationState, ParleyError, Participant, Utterance
from .evaluation import evaluate_batch
from .memory import MemoryStore
from .participation import (
    Decision,
    TurnPrediction,
    acknowledgment,
    articulate,
    classify_turn,
    decide,
)
from .providers import Provider

logger = logging.getLogger(__name__)

EVENT_TYPES = (
    "utterance",
    "trigger",
    "thought_created",
    "thought_evaluated",
    "decision",
    "thought_expressed",
)


class QueueFull(ParleyError):
    """The trigger queue is at capacity and holds nothing droppable."""


class UnknownThought(ParleyError):
    """No live or recorded thought with that id."""


class ThoughtNotLive(ParleyError):
    """The thought was already expressed or discarded."""


@dataclass
class TriggerEvent:
    """A queued conversational event that initiates one cognition cycle."""

    kind: str  # "on_new_message" | "on_pause"
    utterance_id: Optional[str]
    enqueued_at: float
    timestep: int

    def __post_init__(self) -> None:
        if self.kind == "on_new_message" and not self.utterance_id:
            raise ValueError("message triggers carry an utterance id")
        if self.kind == "on_pause" and self.utterance_id:
            raise ValueError("pause triggers carry no utterance id")


@dataclass
class EngineConfig:
    arbitration: str = "highest_score"  # | "round_robin"
    max_queue: int = 64
    pause_seconds: float = 10.0
    max_live_thoughts: int = 24
    reeval_top_k: int = 3

    def __post_init__(self) -> None:
        if self.pause_seconds <= 0:
            raise ValueError("pause_seconds must be positive")
        if self.arbitration not in ("highest_score", "round_robin"):
            raise ValueError(f"unknown arbitration {self.arbitration!r}")


class WallClock:
    def now(self) -> float:
        return time.time()


class VirtualClock:
    """Manually advanced clock so simulations outrun real time deterministically."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> float:
        self._now += seconds
        return self._now


class EventLog:
    """Ordered, append-only event record, optionally mirrored to a JSONL file."""

    def __init__(self, path: Optional[str | Path] = None):
        self.events: list[dict] = []
        self._lock = threading.Lock()
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def append(self, type: str, timestep: int, wall_time: float,
               agent: Optional[str], payload: dict) -> dict:
        if type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {type!r}")
        with self._lock:
            event = {
                "seq": len(self.events) + 1,
                "type": type,
                "timestep": timestep,
                "wall_time": wall_time,
                "agent": agent,
                "payload": payload,
            }
            self.events.append(event)
            if self._fh:
                self._fh.write(json.dumps(event, sort_keys=True) + "\n")
                self._fh.flush()
            return event

    def events_since(self, seq: int) -> list[dict]:
        with self._lock:
            return [e for e in self.events if e["seq"] > seq]

    def close(self) -> None:
        with self._lock:
            if self._fh:
                self._fh.close()
                self._fh = None


class AgentRuntime:
    """One agent's private memory store and thought reservoir."""

    def __init__(self, participant: Participant, provider: Provider,
                 seed_memories_from_persona: bool = True):
        self.participant = participant
        self.store = MemoryStore(participant.id, provider)
        self.reservoir = ThoughtReservoir(participant.id)
        if seed_memories_from_persona:
            for line in participant.persona:
                self.store.add("interest", line)

    def retrieval_items(self):
        return self.store.items + self.reservoir.memory_views()


class Engine:
    """Single-writer orchestrator for one conversation."""

    def __init__(
        self,
        state: ConversationState,
        provider: Provider,
        config: Optional[EngineConfig] = None,
        log: Optional[EventLog] = None,
        clock=None,
        rng: Optional[random.Random] = None,
        seed_memories_from_persona: bool = True,
    ):
        self.state = state
        self.provider = provider
        self.config = config or EngineConfig()
        self.log = log or EventLog()
        self.clock = clock or WallClock()
        self.rng = rng or random.Random(state.rng_seed)
        self.agents: dict[str, AgentRuntime] = {
            p.id: AgentRuntime(p, provider, seed_memories_from_persona)
            for p in state.agents()
        }
        self._queue: deque[TriggerEvent] = deque()
        self._lock = threading.RLock()
        self._cycle = 0
        self._last_activity = self.clock.now()
        self._pause_pending = False
        self._pause_markers: dict[str, Utterance] = {}

    # -- ingress -------------------------------------------------------------

    def submit_message(self, speaker: str, text: str) -> Utterance:
        """Append a participant's utterance and enqueue its trigger."""
        with self._lock:
            utt = self.state.append_utterance(speaker, text, wall_time=self.clock.now())
            self._log_utterance(utt)
            self._last_activity = self.clock.now()
            self.enqueue(TriggerEvent(
                kind="on_new_message", utterance_id=utt.id,
                enqueued_at=self.clock.now(), timestep=utt.timestep,
            ))
            return utt

    def enqueue(self, event: TriggerEvent) -> int:
        """FIFO enqueue; on overflow the oldest pause event is dropped first."""
        with self._lock:
            if len(self._queue) >= self.config.max_queue:
                for i, pending in enumerate(self._queue):
                    if pending.kind == "on_pause":
                        del self._queue[i]
                        if not any(e.kind == "on_pause" for e in self._queue):
                            self._pause_pending = False
                        break
                else:
                    raise QueueFull(f"trigger queue at capacity ({self.config.max_queue})")
            self._queue.append(event)
            return len(self._queue)

    def queue_depth(self) -> int:
        with self._lock:
            return len(self._queue)

    def pause_watchdog(self, now: Optional[float] = None) -> Optional[TriggerEvent]:
        """Emit one pause trigger after enough silence, only when the queue is idle."""
        with self._lock:
            now = self.clock.now() if now is None else now
            if self._queue or self._pause_pending:
                return None
            if now - self._last_activity < self.config.pause_seconds:
                return None
            event = TriggerEvent(kind="on_pause", utterance_id=None,
                                 enqueued_at=now, timestep=self.state.current_timestep)
            self.enqueue(event)
            self._pause_pending = True
            self._last_activity = now
            return event

    # -- cycle ---------------------------------------------------------------

    def step(self) -> Optional[list[Decision]]:
        """Process one queued trigger; returns None when the queue is empty."""
        with self._lock:
            if not self._queue:
                return None
            event = self._queue.popleft()
            if event.kind == "on_pause":
                self._pause_pending = any(e.kind == "on_pause" for e in self._queue)
            return self.run_cycle(event)

    def drain(self, max_cycles: int = 1000) -> int:
        """Process triggers until the queue is empty; returns cycles run."""
        ran = 0
        while ran < max_cycles and self.step() is not None:
            ran += 1
        return ran

    def run_cycle(self, event: TriggerEvent) -> list[Decision]:
        with self._lock:
            self._cycle += 1
            cycle = self._cycle
            self.log.append("trigger", self.state.current_timestep, self.clock.now(), None, {
                "kind": event.kind,
                "utterance": event.utterance_id,
                "cycle": cycle,
            })
            trigger_utt = self._trigger_utterance(event, cycle)
            if event.kind == "on_new_message":
                memory_mod.interpret_utterance(self.state, trigger_utt, self.provider)
            prediction = classify_turn(self.state, self.provider)
            queue_busy = len(self._queue) > 0

            decisions: list[Decision] = []
            for runtime in self.agents.values():
                decisions.append(
                    self._agent_cycle(runtime, trigger_utt, prediction, cycle, queue_busy)
                )

            winner = self._arbitrate(decisions)
            for d in decisions:
                if d.action == "speak" and d is not winner:
                    d.action = "silent"
                    d.lost_arbitration = True
                    d.thought = None
            if winner is not None:
                self._express(winner, cycle)
            for d in decisions:
                self.log.append("decision", self.state.current_timestep, self.clock.now(),
                                d.agent, d.to_dict())
            if winner is not None:
                self._speak(winner)

            for runtime in self.agents.values():
                runtime.reservoir.retain_fresh()
                prune_reservoir(runtime.reservoir, self.config.max_live_thoughts)
            return decisions

    def _trigger_utterance(self, event: TriggerEvent, cycle: int) -> Utterance:
        if event.kind == "on_new_message":
            for u in self.state.transcript:
                if u.id == event.utterance_id:
                    return u
            raise ParleyError(f"trigger references unknown utterance {event.utterance_id}")
        marker = Utterance(
            id=f"pause.{cycle}",
            speaker="",
            text=f"«silence for {self.config.pause_seconds:g} seconds»",
            timestep=self.state.current_timestep,
            wall_time=event.enqueued_at,
        )
        self._pause_markers[marker.id] = marker
        return marker

    def _agent_cycle(self, runtime: AgentRuntime, trigger_utt: Utterance,
                     prediction: TurnPrediction, cycle: int, queue_busy: bool) -> Decision:
        agent = runtime.participant
        t = self.state.current_timestep
        try:
            stimuli = memory_mod.retrieve_stimuli(
                runtime.retrieval_items(), trigger_utt, t,
                agent.proactivity, self.provider, rng=self.rng,
            )
            fresh = form_system1(agent, self.state, trigger_utt, self.provider,
                                 runtime.reservoir, cycle=cycle)
            fresh += form_system2(agent, self.state, stimuli,
                                  agent.proactivity.num_system2_thoughts,
                                  self.provider, runtime.reservoir, trigger_utt, cycle=cycle)
            for th in fresh:
                self.log.append("thought_created", t, self.clock.now(), agent.id, th.to_dict())
            scored = evaluate_batch(agent, self.state, runtime.reservoir, fresh,
                                    self.provider, k_retained=self.config.reeval_top_k,
                                    cycle=cycle)
            for th in scored:
                payload = th.evaluation.to_dict()
                payload["thought"] = th.id
                self.log.append("thought_evaluated", t, self.clock.now(), agent.id, payload)
            if queue_busy:
                return Decision(agent.id, "silent", "queue_busy")
            return decide(agent, runtime.reservoir, prediction, self.rng, cycle=cycle)
        except Exception:
            logger.exception("agent cycle failed for %s; staying silent", agent.id)
            return Decision(agent.id, "silent", "queue_busy")

    def _arbitrate(self, decisions: list[Decision]) -> Optional[Decision]:
        candidates = [d for d in decisions if d.action == "speak"]
        if not candidates:
            return None
        t = self.state.current_timestep

        def score(d: Decision) -> float:
            th = self._find_thought(d.agent, d.thought)
            return th.final_score() if th is not None else float("-inf")

        def silence(d: Decision) -> int:
            return t - self.agents[d.agent].participant.last_spoke_at

        if self.config.arbitration == "round_robin":
            key: Callable[[Decision], tuple] = lambda d: (-silence(d), d.agent)
        else:
            key = lambda d: (-score(d), -silence(d), d.agent)
        return sorted(candidates, key=key)[0]

    def _find_thought(self, agent_id: str, thought_id: Optional[str]) -> Optional[Thought]:
        if thought_id is None:
            return None
        runtime = self.agents.get(agent_id)
        return runtime.reservoir.get(thought_id) if runtime else None

    def _express(self, decision: Decision, cycle: int) -> None:
        """Articulate the winner's thought (or a fallback acknowledgment)."""
        runtime = self.agents[decision.agent]
        agent = runtime.participant
        thought = self._find_thought(decision.agent, decision.thought)
        if thought is None:
            text = acknowledgment(agent, self.state, self.provider)
            thought = runtime.reservoir.new_thought(
                text=text, system=1,
                stimuli=[self.state.last_utterance().id] if self.state.transcript else [],
                created_at=self.state.current_timestep, cycle=cycle,
            )
            thought.mark_expressed(self.state.current_timestep, cycle)
            decision.thought = thought.id
        else:
            text = articulate(agent, thought, self.state, self.provider,
                              proactive_tone=agent.proactivity.proactiveTone, cycle=cycle)
        decision.articulated_text = text
        self.log.append("thought_expressed", self.state.current_timestep, self.clock.now(),
                        agent.id, {
                            "thought": thought.id,
                            "text": text,
                            "score": thought.evaluation.final if thought.evaluation else None,
                            "created_cycle": thought.cycle,
                            "expressed_cycle": cycle,
                            "retained": thought.cycle < cycle,
                            "forced": False,
                        })

    def _speak(self, decision: Decision) -> Utterance:
        utt = self.state.append_utterance(decision.agent, decision.articulated_text,
                                          wall_time=self.clock.now())
        self._log_utterance(utt)
        self._last_activity = self.clock.now()
        self.enqueue(TriggerEvent(kind="on_new_message", utterance_id=utt.id,
                                  enqueued_at=self.clock.now(), timestep=utt.timestep))
        return utt

    def _log_utterance(self, utt: Utterance) -> None:
        self.log.append("utterance", utt.timestep, utt.wall_time, utt.speaker, {
            "id": utt.id,
            "speaker": utt.speaker,
            "text": utt.text,
        })

    # -- commands (server / UI) -----------------------------------------------

    def force_express(self, thought_id: str) -> Utterance:
        """Voice a thought regardless of thresholds; still runs articulation."""
        with self._lock:
            found = self._locate_thought(thought_id)
            if found is None:
                raise UnknownThought(thought_id)
            runtime, thought = found
            if not thought.live:
                raise ThoughtNotLive(f"{thought_id} is {thought.state}")
            self._cycle += 1
            cycle = self._cycle
            agent = runtime.participant
            text = articulate(agent, thought, self.state, self.provider,
                              proactive_tone=agent.proactivity.proactiveTone, cycle=cycle)
            self.log.append("thought_expressed", self.state.current_timestep, self.clock.now(),
                            agent.id, {
                                "thought": thought.id,
                                "text": text,
                                "score": thought.evaluation.final if thought.evaluation else None,
                                "created_cycle": thought.cycle,
                                "expressed_cycle": cycle,
                                "retained": thought.cycle < cycle,
                                "forced": True,
                            })
            return self._speak(Decision(agent.id, "speak", "open_motivated",
                                        thought=thought.id, articulated_text=text))

    def delete_thought(self, thought_id: str) -> None:
        with self._lock:
            found = self._locate_thought(thought_id)
            if found is None:
                raise UnknownThought(thought_id)
            _, thought = found
            if thought.state == "expressed":
                raise ThoughtNotLive("expressed thoughts are kept for provenance")
            if thought.state != "discarded":
                thought.mark_discarded()

    def _locate_thought(self, thought_id: str) -> Optional[tuple[AgentRuntime, Thought]]:
        for runtime in self.agents.values():
            th = runtime.reservoir.get(thought_id)
            if th is not None:
                return runtime, th
        return None

    def resolve_ref(self, ref: str) -> Optional[object]:
        """Resolve a stimulus ref to its utterance, memory item, or thought."""
        for u in self.state.transcript:
            if u.id == ref:
                return u
        if ref in self._pause_markers:
            return self._pause_markers[ref]
        for runtime in self.agents.values():
            th = runtime.reservoir.get(ref)
            if th is not None:
                return th
            item = runtime.store.get(ref)
            if item is not None:
                return item
        return None
