"""Intrinsic-motivation scoring of covert thoughts.

Each evaluation asks the model to argue for and against voicing the thought
(two factors each way, drawn from a fixed criterion catalog), then rate the
urge to speak on a 1-5 scale. The numeric score is the probability-weighted
mean over the rating token's top alternatives, multiplied by a silence factor
that grows the longer the agent has gone without speaking:

    raw   = sum(p(s) * s)          over digit ratings s in 1..5
    final = raw * growth ** (t - last_spoke_at)

Probabilities come from e**logprob of the first token of a dedicated rating
completion, so they are well-defined; ``final`` is deliberately uncapped.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .cognition import Thought, ThoughtReservoir
from .core import ConversationState, ParleyError, Participant
from .providers import CompletionRequest, CompletionResponse, Provider, ProviderError

logger = logging.getLogger(__name__)

EVAL_WINDOW = 12
DEFAULT_REEVAL_TOP_K = 3

# The eight criteria agents weigh when deciding to voice or withhold a
# thought, with the working definitions used verbatim in evaluation prompts.
CRITERIA: dict[str, str] = {
    "Relevance": (
        "How strongly the thought connects to your own knowledge, interests, "
        "or experiences and to the topic currently on the table; feeling "
        "disconnected from the discussion argues for withholding."
    ),
    "Information Gap": (
        "Whether the thought fills in missing knowledge, resolves confusion, "
        "or asks for a clarification the group needs; if the discussion is "
        "already predictable there is little to add."
    ),
    "Expected Impact": (
        "Whether voicing it would introduce a promising new topic, steer the "
        "conversation somewhere better, or deepen it; input that is redundant "
        "or bound to come up anyway has low impact."
    ),
    "Urgency": (
        "Whether the input is time-sensitive right now, such as correcting an "
        "error or a misunderstanding before the moment passes."
    ),
    "Coherence": (
        "Whether it builds logically on the previous utterance or extends the "
        "current topic, rather than disrupting the conversational flow."
    ),
    "Originality": (
        "Whether it contributes something not already said; reiterating a "
        "point that has been raised argues strongly for staying quiet."
    ),
    "Balance": (
        "Whether speaking now keeps participation even-handed: leaving space "
        "for quieter parties and not dominating the floor."
    ),
    "Dynamics": (
        "Whether the moment calls for a contribution: filling a lull or "
        "keeping momentum up, versus talking over an active exchange."
    ),
}

# Motivation levels 1-5; each rating digit is anchored to one of these.
LEVELS: dict[int, tuple[str, str]] = {
    1: ("Very Low", (
        "You are unlikely to express the thought and participate at this "
        "moment; you would not express it even given a long pause or an "
        "invitation to speak."
    )),
    2: ("Low", (
        "You are somewhat unlikely to express the thought at this moment; you "
        "would only consider speaking after a long silence when no one else "
        "seems to be taking the turn."
    )),
    3: ("Neutral", (
        "You are neutral about expressing the thought at this moment; you are "
        "fine either voicing it or staying silent and letting others speak."
    )),
    4: ("High", (
        "You are somewhat likely to express the thought at this moment; you "
        "have a strong desire to participate immediately after the current "
        "speaker finishes their turn."
    )),
    5: ("Very High", (
        "You are very likely to express the thought at this moment; you would "
        "even interrupt others who are speaking to do so."
    )),
}


class EvaluationParseError(ParleyError):
    """The evaluation response contained no usable rating."""


@dataclass
class RatingDistribution:
    """Probability mass over the ratings 1..5, normalized to sum to one."""

    mass: dict[int, float]

    def __post_init__(self) -> None:
        cleaned = {int(s): float(p) for s, p in self.mass.items() if 1 <= int(s) <= 5 and p > 0}
        if not cleaned:
            raise ValueError("distribution needs at least one positive-mass rating")
        total = sum(cleaned.values())
        self.mass = {s: p / total for s, p in sorted(cleaned.items())}

    def expected_value(self) -> float:
        return sum(p * s for s, p in self.mass.items())

    def to_dict(self) -> dict:
        return {str(s): p for s, p in self.mass.items()}


@dataclass
class MotivationScore:
    """The silence-adjusted motivation to voice one thought, with reasoning."""

    raw: float
    silence_factor: float
    final: float
    positive_factors: list[tuple[str, str]] = field(default_factory=list)
    negative_factors: list[tuple[str, str]] = field(default_factory=list)
    evaluated_at: int = 0
    cycle: int = 0
    distribution: Optional[RatingDistribution] = None

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "silence_factor": self.silence_factor,
            "final": self.final,
            "positive_factors": [{"criterion": c, "reason": r} for c, r in self.positive_factors],
            "negative_factors": [{"criterion": c, "reason": r} for c, r in self.negative_factors],
            "evaluated_at": self.evaluated_at,
            "distribution": self.distribution.to_dict() if self.distribution else None,
        }


def score_thought(dist: RatingDistribution, t: int, last_spoke_at: int,
                  growth: float) -> MotivationScore:
    """Pure scoring: probability-weighted rating times the silence factor."""
    if t < last_spoke_at:
        raise ValueError("current timestep precedes the last time the party spoke")
    raw = dist.expected_value()
    silence_factor = growth ** (t - last_spoke_at)
    return MotivationScore(raw=raw, silence_factor=silence_factor,
                           final=raw * silence_factor, evaluated_at=t,
                           distribution=dist)


def build_eval_prompt(agent: Participant, state: ConversationState,
                      thought: Thought) -> CompletionRequest:
    """Construct the factor-plus-rating evaluation request for one thought."""
    criteria_block = "\n".join(f"- {name}: {text}" for name, text in CRITERIA.items())
    levels_block = "\n".join(
        f"{digit} ({name}): {text}" for digit, (name, text) in LEVELS.items()
    )
    history = "\n".join(
        f"[{u.id}] {state.participant(u.speaker).display_name}: {u.text}"
        for u in state.window(EVAL_WINDOW)
    ) or "(conversation has not started)"
    return CompletionRequest(
        system_prompt=(
            f"You are {agent.display_name} in a group text conversation, privately "
            "judging how motivated you are to say one of your covert thoughts "
            "out loud right now."
        ),
        user_prompt=(
            f"Evaluation criteria:\n{criteria_block}\n\n"
            f"Motivation levels:\n{levels_block}\n\n"
            f"Conversation (most recent last):\n{history}\n\n"
            f"Thought: {thought.text}\n\n"
            "First, reason about why you may have a strong desire to express this "
            "thought right now: name the top two most relevant criteria, as\n"
            "Positive:\n1. <criterion>: <reason>\n2. <criterion>: <reason>\n"
            "Then reason about why your desire may be weak: name the top two most "
            "relevant criteria, as\n"
            "Negative:\n1. <criterion>: <reason>\n2. <criterion>: <reason>\n"
            "Finally, give your motivation rating on a scale of 1-5 on its own "
            "line, as\nRating: <digit>"
        ),
        want_top_logprobs=5,
        max_tokens=300,
        temperature=0.2,
        purpose="evaluate",
    )


def build_rating_prompt(eval_req: CompletionRequest, factors_text: str) -> CompletionRequest:
    """Follow-up request whose first output token is the bare rating digit."""
    return CompletionRequest(
        system_prompt=eval_req.system_prompt,
        user_prompt=(
            eval_req.user_prompt
            + "\n\nYour analysis so far:\n"
            + factors_text
            + "\n\nNow answer with ONLY the single digit (1-5) of your rating."
        ),
        want_top_logprobs=5,
        max_tokens=4,
        temperature=0.0,
        purpose="rate",
    )


_SECTION_RE = re.compile(r"^(positive|negative)\s*:?\s*$", re.IGNORECASE)
_FACTOR_RE = re.compile(r"^\s*(?:\d+[.)]\s*)?(?:-\s*)?([A-Za-z][A-Za-z ]+?)\s*:\s*(.+)$")
_RATING_RE = re.compile(r"rating\s*:?\s*([1-5])", re.IGNORECASE)
_CANONICAL = {name.lower(): name for name in CRITERIA}


def _parse_factors(text: str) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    positive: list[tuple[str, str]] = []
    negative: list[tuple[str, str]] = []
    current: Optional[list[tuple[str, str]]] = None
    for line in text.splitlines():
        stripped = line.strip()
        section = _SECTION_RE.match(stripped)
        if section:
            current = positive if section.group(1).lower() == "positive" else negative
            continue
        if current is None or len(current) >= 2:
            continue
        m = _FACTOR_RE.match(stripped)
        if not m:
            continue
        criterion = _CANONICAL.get(m.group(1).strip().lower())
        if criterion is None:
            logger.debug("dropping unknown criterion %r", m.group(1))
            continue
        current.append((criterion, m.group(2).strip()))
    return positive, negative


def parse_rating(resp: CompletionResponse) -> tuple[RatingDistribution, dict]:
    """Extract the rating distribution and the positive/negative factors.

    Digit tokens among the first-token alternatives contribute e**logprob of
    mass each and are renormalized; with no digit token the parsed integer in
    the text becomes a point mass; with no integer at all this raises
    :class:`EvaluationParseError`.
    """
    positive, negative = _parse_factors(resp.text)
    factors = {"positive": positive, "negative": negative}
    mass: dict[int, float] = {}
    for token, logprob in resp.first_token_alternatives:
        tok = token.strip()
        if len(tok) == 1 and tok in "12345":
            mass[int(tok)] = mass.get(int(tok), 0.0) + math.exp(logprob)
    if mass:
        return RatingDistribution(mass), factors
    matches = _RATING_RE.findall(resp.text)
    if matches:
        return RatingDistribution({int(matches[-1]): 1.0}), factors
    standalone = re.findall(r"(?<![\w.])[1-5](?![\w.])", resp.text)
    if standalone:
        return RatingDistribution({int(standalone[-1]): 1.0}), factors
    raise EvaluationParseError("no rating found in evaluation response")


def evaluate_thought(
    agent: Participant,
    state: ConversationState,
    thought: Thought,
    provider: Provider,
    cycle: int = 0,
) -> MotivationScore:
    """Run the two-call evaluation protocol for one thought and attach the score.

    Call one produces the factor analysis and a provisional rating; call two
    re-asks for the bare digit so its first-token alternatives are the rating
    distribution.
    """
    eval_req = build_eval_prompt(agent, state, thought)
    eval_resp = provider.complete(eval_req)
    rating_resp = provider.complete(build_rating_prompt(eval_req, eval_resp.text))
    merged = CompletionResponse(
        text=eval_resp.text + (f"\nRating: {rating_resp.text.strip()}" if rating_resp.text.strip() else ""),
        first_token_alternatives=rating_resp.first_token_alternatives,
    )
    dist, factors = parse_rating(merged)
    score = score_thought(
        dist, state.current_timestep, agent.last_spoke_at,
        agent.proactivity.motivation_growth,
    )
    score.positive_factors = factors["positive"]
    score.negative_factors = factors["negative"]
    score.cycle = cycle
    thought.evaluation = score
    return score


def evaluate_batch(
    agent: Participant,
    state: ConversationState,
    reservoir: ThoughtReservoir,
    fresh_thoughts: list[Thought],
    provider: Provider,
    k_retained: int = DEFAULT_REEVAL_TOP_K,
    cycle: int = 0,
) -> list[Thought]:
    """Evaluate every fresh thought plus the top-K previously-scored retained ones.

    Re-evaluating strong retained thoughts at the current timestep is what
    lets a held-back thought become eligible after a topic shift. Failures
    are isolated per thought (it simply keeps no current score).
    """
    retained = [t for t in reservoir.retained() if t.evaluation is not None]
    retained.sort(key=lambda t: -t.evaluation.final)
    targets = list(fresh_thoughts) + retained[:k_retained]
    scored: list[Thought] = []
    for th in targets:
        try:
            evaluate_thought(agent, state, th, provider, cycle=cycle)
        except (ProviderError, EvaluationParseError) as exc:
            logger.warning("evaluation failed for %s: %s", th.id, exc)
            continue
        scored.append(th)
    return scored
