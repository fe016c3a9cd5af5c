"""Domain types shared by every module, plus the append-only conversation state.

Timesteps are counted in utterances: the first message of a conversation is
timestep 1 and every append increments by exactly one. Both recency decays
(memory saliency and silence growth) run on this clock. Pause detection is
the one thing that runs on wall-clock seconds instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import Optional


class ParleyError(Exception):
    """Base class for errors raised by this package."""


class UnknownParticipant(ParleyError):
    """A speaker id that is not registered in the conversation."""


class ConfigRangeError(ParleyError):
    """A proactivity setting is outside its documented range."""


@dataclass
class Utterance:
    """One overt message in the transcript.

    ``interpretation`` starts empty and is filled lazily (at most once) by the
    memory module; after that it is immutable.
    """

    id: str
    speaker: str
    text: str
    timestep: int
    wall_time: float
    interpretation: Optional[str] = None

    def set_interpretation(self, text: str) -> None:
        if self.interpretation is not None:
            raise ValueError(f"utterance {self.id} is already interpreted")
        self.interpretation = text

    def to_dict(self) -> dict:
        return asdict(self)


# Wire/config field names for the four headline proactivity knobs follow the
# playground settings schema (camelCase); the remaining knobs are plumbing.
_CONFIG_RANGES = {
    "system1Prob": (0.0, 1.0),
    "imThreshold": (1.0, 5.0),
    "interruptThreshold": (1.0, 5.0),
}


@dataclass
class ProactivityConfig:
    """Per-agent knobs controlling when and how the agent takes the floor.

    system1Prob: chance of voicing a quick reactive thought when nothing
        crosses the motivation bar (overt proactivity).
    imThreshold: motivation score required to self-select on an open turn
        (covert proactivity).
    interruptThreshold: motivation score required to speak over a turn
        allocated to someone else. Never lower than imThreshold.
    proactiveTone: restyle articulated messages to be assertive/forward
        (tonal proactivity).
    """

    system1Prob: float = 0.1
    imThreshold: float = 3.95
    interruptThreshold: float = 4.8
    proactiveTone: bool = False
    num_system1_thoughts: int = 1
    num_system2_thoughts: int = 2
    saliency_threshold: float = 0.3
    saliency_decay: float = 0.95
    motivation_growth: float = 1.02
    pause_trigger_seconds: float = 10.0
    creativity_prob: float = 0.0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name, (lo, hi) in _CONFIG_RANGES.items():
            value = getattr(self, name)
            if not (lo <= value <= hi):
                raise ConfigRangeError(f"{name}={value} outside [{lo}, {hi}]")
        if self.imThreshold > self.interruptThreshold:
            raise ConfigRangeError(
                "imThreshold must not exceed interruptThreshold "
                f"({self.imThreshold} > {self.interruptThreshold})"
            )
        if self.num_system1_thoughts < 0 or self.num_system2_thoughts < 0:
            raise ConfigRangeError("thought batch counts must be nonnegative")
        if not (0.0 < self.saliency_decay <= 1.0):
            raise ConfigRangeError("saliency_decay must be in (0, 1]")
        if self.motivation_growth < 1.0:
            raise ConfigRangeError("motivation_growth must be >= 1")
        if self.pause_trigger_seconds <= 0:
            raise ConfigRangeError("pause_trigger_seconds must be positive")
        if not (0.0 <= self.creativity_prob <= 1.0):
            raise ConfigRangeError("creativity_prob must be in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProactivityConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigRangeError(f"unknown settings: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Participant:
    """A human or agent party in the conversation.

    ``last_spoke_at`` is the timestep of the participant's latest utterance
    (0 if they have not spoken); silence growth is computed against it.
    """

    id: str
    display_name: str
    kind: str  # "human" | "agent"
    persona: list[str] = field(default_factory=list)
    proactivity: Optional[ProactivityConfig] = None
    last_spoke_at: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("human", "agent"):
            raise ValueError(f"participant kind must be human|agent, got {self.kind!r}")
        if self.kind == "human" and self.proactivity is not None:
            raise ValueError("human participants carry no proactivity config")
        if self.kind == "agent" and self.proactivity is None:
            self.proactivity = ProactivityConfig()

    @property
    def is_agent(self) -> bool:
        return self.kind == "agent"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "kind": self.kind,
            "persona": list(self.persona),
            "proactivity": self.proactivity.to_dict() if self.proactivity else None,
            "last_spoke_at": self.last_spoke_at,
        }


@dataclass
class ConversationState:
    """Append-only transcript plus the participant roster.

    Single-writer: only the engine appends. Everything else sees snapshots.
    """

    id: str
    participants: list[Participant] = field(default_factory=list)
    transcript: list[Utterance] = field(default_factory=list)
    current_timestep: int = 0
    rng_seed: int = 0
    _utterance_counter: int = field(default=0, repr=False)

    def participant(self, pid: str) -> Participant:
        for p in self.participants:
            if p.id == pid:
                return p
        raise UnknownParticipant(pid)

    def agents(self) -> list[Participant]:
        return [p for p in self.participants if p.is_agent]

    def last_utterance(self) -> Optional[Utterance]:
        return self.transcript[-1] if self.transcript else None

    def window(self, n: int) -> list[Utterance]:
        """Last ``n`` utterances, oldest first."""
        return self.transcript[-n:] if n > 0 else []

    def append_utterance(self, speaker: str, text: str, wall_time: Optional[float] = None) -> Utterance:
        """Append one utterance, advancing the timestep by exactly one."""
        party = self.participant(speaker)  # raises UnknownParticipant
        self._utterance_counter += 1
        self.current_timestep += 1
        utt = Utterance(
            id=f"u{self._utterance_counter}",
            speaker=speaker,
            text=text,
            timestep=self.current_timestep,
            wall_time=time.time() if wall_time is None else wall_time,
        )
        self.transcript.append(utt)
        party.last_spoke_at = utt.timestep
        return utt

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "participants": [p.to_dict() for p in self.participants],
            "transcript": [u.to_dict() for u in self.transcript],
            "current_timestep": self.current_timestep,
        }


def append_utterance(state: ConversationState, speaker: str, text: str,
                     wall_time: Optional[float] = None) -> Utterance:
    """Module-level alias for :meth:`ConversationState.append_utterance`."""
    return state.append_utterance(speaker, text, wall_time=wall_time)
