"""Covert thought formation and the per-agent thought reservoir.

Two formation modes mirror dual-process cognition: quick reactive thoughts
(system 1) grounded only in the triggering utterance, and deliberate thoughts
(system 2) grounded in retrieved stimuli, each annotated with the ids of the
utterances, memories, or earlier thoughts that prompted it.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .core import ConversationState, Participant, Utterance
from .memory import MemoryItem, RetrievalHit
from .providers import CompletionRequest, Provider, ProviderError

if TYPE_CHECKING:
    from .evaluation import MotivationScore

logger = logging.getLogger(__name__)

DEFAULT_MAX_LIVE = 24

FORMATION_INSTRUCTION = (
    "Form {n} thought(s) that you would most likely have at this point in the "
    "conversation, given the context. Make sure they are diverse, align with "
    "these contexts and are less than 15 words."
)

STATES = ("fresh", "retained", "expressed", "discarded")


@dataclass
class Thought:
    """One covert candidate contribution."""

    id: str
    owner: str
    text: str
    system: int  # 1 | 2
    stimuli: list[str]
    created_at: int
    cycle: int = 0
    saliency_at_creation: float = 0.0
    evaluation: Optional["MotivationScore"] = None
    state: str = "fresh"
    expressed_at: Optional[int] = None
    expressed_cycle: Optional[int] = None
    memory_view: Optional[MemoryItem] = field(default=None, repr=False)

    @property
    def live(self) -> bool:
        return self.state in ("fresh", "retained")

    def mark_retained(self) -> None:
        if self.state == "fresh":
            self.state = "retained"

    def mark_expressed(self, timestep: int, cycle: int) -> None:
        if not self.live:
            raise ValueError(f"thought {self.id} is {self.state}; cannot express")
        self.state = "expressed"
        self.expressed_at = timestep
        self.expressed_cycle = cycle

    def mark_discarded(self) -> None:
        if self.state == "expressed":
            raise ValueError("expressed thoughts are kept for provenance")
        self.state = "discarded"

    def final_score(self) -> float:
        return self.evaluation.final if self.evaluation else float("-inf")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "owner": self.owner,
            "text": self.text,
            "system": self.system,
            "stimuli": list(self.stimuli),
            "created_at": self.created_at,
            "cycle": self.cycle,
            "saliency_at_creation": self.saliency_at_creation,
            "state": self.state,
            "score": self.evaluation.final if self.evaluation else None,
        }


class ThoughtReservoir:
    """Ordered collection of one agent's thoughts across the conversation."""

    def __init__(self, owner: str):
        self.owner = owner
        self.thoughts: list[Thought] = []
        self._counter = 0

    def new_thought(self, text: str, system: int, stimuli: list[str], created_at: int,
                    cycle: int = 0, saliency: float = 0.0,
                    embedding=None) -> Thought:
        self._counter += 1
        tid = f"{self.owner}.t{self._counter}"
        thought = Thought(
            id=tid, owner=self.owner, text=text, system=system,
            stimuli=stimuli, created_at=created_at, cycle=cycle,
            saliency_at_creation=saliency,
        )
        thought.memory_view = MemoryItem(
            id=tid, kind="thought-ref", text=text,
            weight=1.0, last_accessed=created_at, embedding=embedding,
        )
        self.thoughts.append(thought)
        return thought

    def get(self, thought_id: str) -> Optional[Thought]:
        for t in self.thoughts:
            if t.id == thought_id:
                return t
        return None

    def live(self) -> list[Thought]:
        return [t for t in self.thoughts if t.live]

    def retained(self) -> list[Thought]:
        return [t for t in self.thoughts if t.state == "retained"]

    def memory_views(self) -> list[MemoryItem]:
        """Items representing live thoughts, for stimulus retrieval."""
        return [t.memory_view for t in self.live() if t.memory_view is not None]

    def retain_fresh(self) -> None:
        for t in self.thoughts:
            t.mark_retained()


def prune_reservoir(reservoir: ThoughtReservoir, max_live: int = DEFAULT_MAX_LIVE) -> int:
    """Discard the weakest live thoughts beyond ``max_live``; returns the count.

    Ordering is lowest score first (unscored counts as lowest), then oldest
    first on ties. Expressed thoughts are never discarded.
    """
    if max_live < 1:
        raise ValueError("max_live must be >= 1")
    live = reservoir.live()
    excess = len(live) - max_live
    if excess <= 0:
        return 0
    doomed = sorted(live, key=lambda t: (t.final_score(), t.created_at, t.id))[:excess]
    for t in doomed:
        t.mark_discarded()
    return excess


# -- formation ---------------------------------------------------------------

_FENCE_RE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$", re.MULTILINE)
_TRAILING_COMMA_RE = re.compile(r",\s*([\]}])")


def parse_thought_payload(text: str, limit: int) -> list[dict]:
    """Parse a JSON array of {text, stimuli} thought entries, tolerantly.

    Repairs code fences and trailing commas; if the payload is still not
    JSON, plain nonempty lines are taken as thought texts with no stimuli.
    """
    cleaned = _TRAILING_COMMA_RE.sub(r"\1", _FENCE_RE.sub("", text.strip()))
    entries: list[dict] = []
    try:
        data = json.loads(cleaned)
        if isinstance(data, dict):
            data = [data]
        for e in data:
            if isinstance(e, str):
                entries.append({"text": e, "stimuli": []})
            elif isinstance(e, dict) and e.get("text"):
                stimuli = e.get("stimuli") or []
                if not isinstance(stimuli, list):
                    stimuli = [stimuli]
                entries.append({"text": str(e["text"]), "stimuli": [str(s) for s in stimuli]})
    except (json.JSONDecodeError, TypeError):
        logger.warning("thought payload is not JSON; falling back to line split")
        for line in cleaned.splitlines():
            line = line.strip(" -*")
            if line:
                entries.append({"text": line, "stimuli": []})
    return entries[:limit]


def _persona_block(agent: Participant) -> str:
    return "\n".join(f"- {line}" for line in agent.persona) or "- (no persona given)"


def _history_block(state: ConversationState, n: int = 8) -> str:
    return "\n".join(
        f"[{u.id}] {state.participant(u.speaker).display_name}: {u.text}"
        for u in state.window(n)
    ) or "(conversation has not started)"


def form_system1(
    agent: Participant,
    state: ConversationState,
    trigger_utterance: Utterance,
    provider: Provider,
    reservoir: ThoughtReservoir,
    cycle: int = 0,
) -> list[Thought]:
    """Form quick reactive thoughts off the latest utterance (or pause marker)."""
    n = agent.proactivity.num_system1_thoughts
    if n <= 0:
        return []
    req = CompletionRequest(
        system_prompt=(
            f"You are {agent.display_name}, chatting in a group conversation.\n"
            f"Your persona:\n{_persona_block(agent)}"
        ),
        user_prompt=(
            f"Conversation:\n{_history_block(state)}\n\n"
            f"Latest: {trigger_utterance.text}\n"
            f"Count: {n}\n\n"
            "These are quick, instinctive reactions to the latest moment: "
            "acknowledgments, expressions of interest, or impulses to nudge the chat. "
            + FORMATION_INSTRUCTION.format(n=n)
            + ' Respond with a JSON array of objects like {"text": "..."}.'
        ),
        max_tokens=200,
        purpose="form_system1",
    )
    try:
        resp = provider.complete(req)
    except ProviderError as exc:
        logger.warning("system-1 formation failed for %s: %s", agent.id, exc)
        return []
    thoughts = []
    for entry in parse_thought_payload(resp.text, n):
        thoughts.append(reservoir.new_thought(
            text=entry["text"], system=1,
            stimuli=[trigger_utterance.id],
            created_at=state.current_timestep, cycle=cycle,
            embedding=_safe_embed(provider, entry["text"]),
        ))
    return thoughts


def form_system2(
    agent: Participant,
    state: ConversationState,
    stimuli: list[RetrievalHit],
    n: int,
    provider: Provider,
    reservoir: ThoughtReservoir,
    trigger_utterance: Utterance,
    cycle: int = 0,
) -> list[Thought]:
    """Form deliberate thoughts grounded in retrieved stimuli.

    Each thought is annotated with the stimulus ids cited in the structured
    response; unusable annotations fall back to the triggering utterance.
    """
    if n <= 0:
        return []
    stimulus_block = "\n".join(
        f"[{h.item.id}] ({h.item.kind}) {h.item.text}" for h in stimuli
    )
    memory_section = (
        f"Salient memories and earlier thoughts of yours:\n{stimulus_block}\n\n"
        if stimulus_block
        else ""
    )
    req = CompletionRequest(
        system_prompt=(
            f"You are {agent.display_name}, chatting in a group conversation.\n"
            f"Your persona:\n{_persona_block(agent)}"
        ),
        user_prompt=(
            "You are provided contexts including the conversation history and "
            "salient memories of yourself.\n\n"
            f"Conversation:\n{_history_block(state)}\n\n"
            + memory_section
            + f"Count: {n}\n"
            + FORMATION_INSTRUCTION.format(n=n)
            + ' Respond with a JSON array of objects like {"text": "...", "stimuli": ["id", ...]},'
            " citing for each thought the bracketed ids (memories, earlier thoughts, or"
            " utterances) that prompted it."
        ),
        max_tokens=300,
        purpose="form_system2",
    )
    try:
        resp = provider.complete(req)
    except ProviderError as exc:
        logger.warning("system-2 formation failed for %s: %s", agent.id, exc)
        return []
    known_ids = {h.item.id for h in stimuli}
    known_ids.update(u.id for u in state.transcript)
    known_ids.update(t.id for t in reservoir.thoughts)
    saliency_by_id = {h.item.id: h.saliency for h in stimuli}
    thoughts = []
    for entry in parse_thought_payload(resp.text, n):
        cited = [s for s in entry["stimuli"] if s in known_ids]
        if not cited:
            if entry["stimuli"]:
                logger.warning("unresolvable stimuli %s for %s; falling back to trigger",
                               entry["stimuli"], agent.id)
            cited = [trigger_utterance.id]
        thoughts.append(reservoir.new_thought(
            text=entry["text"], system=2, stimuli=cited,
            created_at=state.current_timestep, cycle=cycle,
            saliency=max((saliency_by_id.get(s, 0.0) for s in cited), default=0.0),
            embedding=_safe_embed(provider, entry["text"]),
        ))
    return thoughts


def _safe_embed(provider: Provider, text: str):
    try:
        return provider.embed(text)
    except (ProviderError, ValueError):
        return None
