"""Turn-taking classification and the thought-selection decision procedure.

A cycle classifies the current turn as open to anyone or allocated to a named
party, then each agent decides among exactly six outcomes:

* open turn, best thought clears imThreshold      -> speak it
* open turn, below bar, system-1 draw succeeds    -> speak a reactive thought
* open turn, below bar, draw fails                -> stay silent
* turn allocated to this agent                    -> speak best regardless
* turn allocated elsewhere, clears interrupt bar  -> interrupt
* turn allocated elsewhere, below bar             -> stay silent
"""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass
from typing import Optional

from .cognition import Thought, ThoughtReservoir
from .core import ConversationState, Participant
from .providers import CompletionRequest, Provider, ProviderError

logger = logging.getLogger(__name__)

CLASSIFY_WINDOW = 5

REASONS = (
    "open_motivated",
    "open_system1",
    "allocated_to_me",
    "interrupt",
    "none_motivated",
    "allocated_elsewhere",
    "queue_busy",
)


@dataclass
class TurnPrediction:
    """Who holds the next turn: a named participant, or anyone."""

    kind: str  # "open_to_anyone" | "allocated"
    addressee: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.kind == "allocated") != (self.addressee is not None):
            raise ValueError("addressee is present iff the turn is allocated")

    @classmethod
    def open(cls) -> "TurnPrediction":
        return cls(kind="open_to_anyone")

    @classmethod
    def to(cls, participant_id: str) -> "TurnPrediction":
        return cls(kind="allocated", addressee=participant_id)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "addressee": self.addressee}


@dataclass
class Decision:
    """One agent's participation outcome for one trigger event."""

    agent: str
    action: str  # "speak" | "silent"
    reason: str
    thought: Optional[str] = None
    articulated_text: Optional[str] = None
    lost_arbitration: bool = False

    def __post_init__(self) -> None:
        if self.reason not in REASONS:
            raise ValueError(f"unknown decision reason {self.reason!r}")

    def to_dict(self) -> dict:
        return {
            "agent": self.agent,
            "action": self.action,
            "reason": self.reason,
            "thought": self.thought,
            "articulated_text": self.articulated_text,
            "lost_arbitration": self.lost_arbitration,
        }


def classify_turn(state: ConversationState, provider: Provider,
                  window: int = CLASSIFY_WINDOW) -> TurnPrediction:
    """Predict whether the next turn is allocated to a named participant.

    Fails open: provider trouble or an unrecognized name both yield
    open-to-anyone.
    """
    if not state.transcript:
        return TurnPrediction.open()
    names = [p.display_name for p in state.participants]
    history = "\n".join(
        f"{state.participant(u.speaker).display_name}: {u.text}"
        for u in state.window(window)
    )
    req = CompletionRequest(
        system_prompt=(
            "You classify turn-taking in a group text conversation. The next "
            "turn is either allocated to one named participant (for example by "
            "addressing them directly) or open to anyone."
        ),
        user_prompt=(
            f"Participants: {', '.join(names)}\n\n"
            f"Last utterances:\n{history}\n\n"
            "Predict the most likely next speaker. Reply with exactly one "
            "participant name if the turn is allocated to them, or the single "
            "word: anyone"
        ),
        max_tokens=10,
        temperature=0.0,
        purpose="classify_turn",
    )
    try:
        answer = provider.complete(req).text.strip()
    except ProviderError as exc:
        logger.warning("turn classification failed, treating as open: %s", exc)
        return TurnPrediction.open()
    normalized = re.sub(r"[^\w ]", "", answer).strip().lower()
    if not normalized or normalized == "anyone":
        return TurnPrediction.open()
    for p in state.participants:
        if normalized == p.display_name.lower() or normalized == p.id.lower():
            return TurnPrediction.to(p.id)
    logger.warning("classifier returned unrecognized name %r; treating as open", answer)
    return TurnPrediction.open()


def _best(thoughts: list[Thought]) -> Optional[Thought]:
    # Ties go to the most recently created thought (largest created_at, then
    # reservoir insertion order).
    if not thoughts:
        return None
    return max(
        enumerate(thoughts),
        key=lambda pair: (pair[1].evaluation.final, pair[1].created_at, pair[0]),
    )[1]


def decide(
    agent: Participant,
    reservoir: ThoughtReservoir,
    prediction: TurnPrediction,
    rng: random.Random,
    cycle: Optional[int] = None,
) -> Decision:
    """Select a thought to voice (or stay silent) for the current trigger.

    Only thoughts scored in the current cycle compete (pass ``cycle=None`` to
    consider every scored live thought); anything unscored counts as minus
    infinity. The returned decision carries the selected thought id but no
    articulated text yet.
    """
    cfg = agent.proactivity
    scored = [
        t for t in reservoir.live()
        if t.evaluation is not None and (cycle is None or t.evaluation.cycle == cycle)
    ]
    best = _best(scored)

    if prediction.kind == "open_to_anyone":
        if best is not None and best.evaluation.final >= cfg.imThreshold:
            return Decision(agent.id, "speak", "open_motivated", thought=best.id)
        if rng.random() < cfg.system1Prob:
            pool = [
                t for t in scored
                if t.system == 1 and (cycle is None or t.cycle == cycle)
            ]
            quick = _best(pool)
            if quick is not None:
                return Decision(agent.id, "speak", "open_system1", thought=quick.id)
        return Decision(agent.id, "silent", "none_motivated")

    if prediction.addressee == agent.id:
        # Allocated to this agent: speak the best thought regardless of score;
        # with nothing to say, the caller supplies a minimal acknowledgment.
        return Decision(agent.id, "speak", "allocated_to_me",
                        thought=best.id if best else None)

    if best is not None and best.evaluation.final >= cfg.interruptThreshold:
        return Decision(agent.id, "speak", "interrupt", thought=best.id)
    return Decision(agent.id, "silent", "allocated_elsewhere")


def articulate(
    agent: Participant,
    thought: Thought,
    state: ConversationState,
    provider: Provider,
    proactive_tone: bool = False,
    cycle: int = 0,
) -> str:
    """Turn a covert thought into the overt message and mark it expressed.

    With ``proactive_tone`` a second restyling pass makes the phrasing
    assertive and forward. Provider failure falls back to the raw thought
    text so the agent still speaks.
    """
    history = "\n".join(
        f"{state.participant(u.speaker).display_name}: {u.text}"
        for u in state.window(6)
    )
    req = CompletionRequest(
        system_prompt=(
            f"You are {agent.display_name} in a group text conversation. "
            "Write in your own voice, first person, conversational and concise."
        ),
        user_prompt=(
            f"Conversation:\n{history}\n\n"
            f"Thought: {thought.text}\n\n"
            "Convert this covert thought of yours into the chat message you "
            "would actually send right now. Output only the message."
        ),
        max_tokens=120,
        purpose="articulate",
    )
    try:
        text = provider.complete(req).text.strip() or thought.text
    except ProviderError as exc:
        logger.warning("articulation failed for %s, using raw thought: %s", thought.id, exc)
        text = thought.text
    if proactive_tone:
        restyle = CompletionRequest(
            system_prompt=req.system_prompt,
            user_prompt=(
                f"Message: {text}\n\n"
                "Restyle this message so it sounds assertive and forward while "
                "keeping its meaning. Output only the message."
            ),
            max_tokens=120,
            purpose="restyle",
        )
        try:
            text = provider.complete(restyle).text.strip() or text
        except ProviderError as exc:
            logger.warning("tonal restyle failed for %s: %s", thought.id, exc)
    thought.mark_expressed(state.current_timestep, cycle)
    return text


def acknowledgment(agent: Participant, state: ConversationState, provider: Provider) -> str:
    """Minimal reply for a turn allocated to an agent with an empty reservoir."""
    last = state.last_utterance()
    req = CompletionRequest(
        system_prompt=(
            f"You are {agent.display_name} in a group text conversation. "
            "Write in your own voice, first person, conversational and concise."
        ),
        user_prompt=(
            f"The last message was: {last.text if last else '(nothing yet)'}\n"
            "You were addressed directly but have nothing substantive to add. "
            "Reply with a brief, natural acknowledgment."
        ),
        max_tokens=30,
        purpose="acknowledge",
    )
    try:
        return provider.complete(req).text.strip() or "Mm, good question!"
    except ProviderError:
        return "Mm, good question!"
