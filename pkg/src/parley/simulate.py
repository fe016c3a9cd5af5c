"""Simulation harness: scripted multi-agent conversations plus metrics.

Two conditions share identical setup (personas, roster, initiator,
icebreaker) whenever they run from the same plan seed, enabling matched-pair
comparisons:

* ``inner_thoughts`` drives the full engine (reservoirs, scoring, decisions);
* ``baseline`` asks the provider to pick the next speaker by name and then
  generates that speaker's reply from persona alone.

All randomness derives from the plan seed and runs against virtual clocks,
so a mock-provider run replays byte-identically.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .core import ConversationState, Participant, ProactivityConfig
from .engine import Engine, EngineConfig, EventLog, VirtualClock
from .providers import CompletionRequest, MockProvider, Provider

logger = logging.getLogger(__name__)

CONDITIONS = ("inner_thoughts", "baseline", "paired")

DEFAULT_ICEBREAKERS = [
    "What did you do last weekend?",
    "What is your favorite thing to do?",
    "Hey!",
    "Anyone up to anything fun lately?",
    "How is everyone's week going?",
    "What are you all watching these days?",
    "Got any plans for the summer?",
    "What's the best meal you had recently?",
    "If you could travel anywhere next month, where would you go?",
    "What's a small thing that made you smile today?",
]

# Batch and threshold settings used for protocol runs: one quick thought and
# two deliberate thoughts per trigger, self-selection bar 3.95, quick-reply
# probability 0.1.
PROTOCOL_PROACTIVITY = {
    "system1Prob": 0.1,
    "imThreshold": 3.95,
    "interruptThreshold": 4.8,
    "proactiveTone": False,
    "num_system1_thoughts": 1,
    "num_system2_thoughts": 2,
}

BASELINE_WINDOW = 5
MAX_IDLE_CYCLES = 6


class SimulationStalled(RuntimeError):
    """A conversation failed to reach its turn target within the step budget."""


@dataclass
class PersonaSeed:
    """First-person persona lines for one simulated agent."""

    name: str
    lines: list[str]

    def __post_init__(self) -> None:
        if len(self.lines) < 3:
            raise ValueError(f"persona seed {self.name!r} needs at least 3 lines")


@dataclass
class SimulationPlan:
    condition: str = "inner_thoughts"
    num_conversations: int = 2
    agents_per_conversation: int = 4
    turns: int = 15
    icebreakers: list[str] = field(default_factory=lambda: list(DEFAULT_ICEBREAKERS))
    rng_seed: int = 0
    pool_size: int = 8
    proactivity: dict = field(default_factory=dict)
    personas_file: Optional[str] = None

    def __post_init__(self) -> None:
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.num_conversations < 1 or self.turns < 1:
            raise ValueError("num_conversations and turns must be >= 1")
        if self.agents_per_conversation < 2:
            raise ValueError("need at least 2 agents per conversation")
        if not self.icebreakers:
            raise ValueError("icebreaker pool is empty")

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationPlan":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SimulationReport:
    log_paths: list[Path]
    failures: list[tuple[str, str]]
    metrics: dict


def load_persona_seeds(path: Optional[str | Path] = None) -> list[PersonaSeed]:
    """Load persona seeds from a file, or the bundled eight-agent pool."""
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    else:
        raw = json.loads(
            resources.files("parley").joinpath("data/personas.json").read_text(encoding="utf-8")
        )
    return [PersonaSeed(name=e["name"], lines=list(e["lines"])) for e in raw]


def _seed_from(*parts: object) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_personas(
    seeds: list[PersonaSeed],
    pool_size: int,
    rng: random.Random,
    proactivity: Optional[dict] = None,
) -> list[Participant]:
    """Build the agent pool: each agent's own lines plus two sampled from others.

    The cross-sampling guarantees overlapping interests between agents.
    """
    if pool_size > len(seeds):
        raise ValueError(f"pool_size {pool_size} exceeds available seeds ({len(seeds)})")
    if pool_size < 2:
        raise ValueError("pool_size must be >= 2 so foreign persona lines exist")
    chosen = seeds[:pool_size]
    overrides = dict(PROTOCOL_PROACTIVITY)
    overrides.update(proactivity or {})
    participants = []
    for seed in chosen:
        foreign = [line for other in chosen if other.name != seed.name for line in other.lines]
        extra = rng.sample(foreign, 2)
        participants.append(Participant(
            id=seed.name.lower(),
            display_name=seed.name,
            kind="agent",
            persona=list(seed.lines) + extra,
            proactivity=ProactivityConfig(**overrides),
        ))
    return participants


ProviderFactory = Callable[[str, int], Provider]


def _default_provider_factory(plan: SimulationPlan) -> ProviderFactory:
    def factory(condition: str, index: int) -> Provider:
        return MockProvider(seed=_seed_from(plan.rng_seed, condition, index), synthesize=True)
    return factory


def run_simulation(
    plan: SimulationPlan,
    out_dir: str | Path,
    provider_factory: Optional[ProviderFactory] = None,
) -> SimulationReport:
    """Run every planned conversation, writing one JSONL log each plus metrics."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = load_persona_seeds(plan.personas_file)
    pool = build_personas(
        seeds, plan.pool_size,
        random.Random(_seed_from(plan.rng_seed, "pool")),
        plan.proactivity,
    )
    factory = provider_factory or _default_provider_factory(plan)
    conditions = ["inner_thoughts", "baseline"] if plan.condition == "paired" else [plan.condition]

    log_paths: list[Path] = []
    failures: list[tuple[str, str]] = []
    for condition in conditions:
        for index in range(1, plan.num_conversations + 1):
            # Setup draws depend only on (plan seed, index) so paired
            # conditions see identical rosters, initiators, and icebreakers.
            setup = random.Random(_seed_from(plan.rng_seed, "setup", index))
            roster = [copy.deepcopy(p) for p in setup.sample(pool, plan.agents_per_conversation)]
            initiator = setup.choice(roster)
            icebreaker = setup.choice(plan.icebreakers)
            conv_seed = _seed_from(plan.rng_seed, "conv", index)
            path = out / f"conv{index:02d}.{condition}.jsonl"
            provider = factory(condition, index)
            try:
                if condition == "inner_thoughts":
                    _run_engine_conversation(
                        f"conv{index:02d}", roster, initiator.id, icebreaker,
                        plan.turns, provider, conv_seed, path,
                    )
                else:
                    _run_baseline_conversation(
                        f"conv{index:02d}", roster, initiator.id, icebreaker,
                        plan.turns, provider, conv_seed, path,
                    )
                log_paths.append(path)
            except Exception as exc:
                logger.exception("conversation %s/%s failed", condition, index)
                failures.append((str(path), f"{type(exc).__name__}: {exc}"))
    metrics = summarize(log_paths)
    metrics_path = out / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, indent=2, sort_keys=True), encoding="utf-8")
    return SimulationReport(log_paths=log_paths, failures=failures, metrics=metrics)


def _run_engine_conversation(
    conv_id: str,
    roster: list[Participant],
    initiator: str,
    icebreaker: str,
    turns: int,
    provider: Provider,
    seed: int,
    path: Path,
) -> None:
    clock = VirtualClock()
    log = EventLog(path)
    state = ConversationState(id=conv_id, participants=roster, rng_seed=seed)
    config = EngineConfig()
    engine = Engine(state, provider, config, log=log, clock=clock,
                    rng=random.Random(seed))
    try:
        engine.submit_message(initiator, icebreaker)
        idle = 0
        budget = turns * 60
        steps = 0
        while state.current_timestep < turns:
            steps += 1
            if steps > budget:
                raise SimulationStalled(f"{conv_id}: no progress after {budget} cycles")
            if engine.queue_depth() == 0:
                clock.advance(config.pause_seconds)
                engine.pause_watchdog()
            before = state.current_timestep
            engine.step()
            clock.advance(1.0)
            if state.current_timestep == before:
                idle += 1
                if idle >= MAX_IDLE_CYCLES:
                    _force_progress(engine)
                    idle = 0
            else:
                idle = 0
    finally:
        log.close()


def _force_progress(engine: Engine) -> None:
    """Voice the strongest live thought so a stalled conversation moves on."""
    best = None
    for runtime in engine.agents.values():
        for th in runtime.reservoir.live():
            if best is None or th.final_score() > best.final_score():
                best = th
    if best is not None:
        engine.force_express(best.id)
    else:
        # Reservoirs are empty (formation kept failing): have the
        # longest-silent agent say something minimal to keep the floor moving.
        agents = sorted(engine.agents.values(), key=lambda r: (r.participant.last_spoke_at,
                                                               r.participant.id))
        from .participation import acknowledgment

        quietest = agents[0].participant
        engine.submit_message(quietest.id, acknowledgment(quietest, engine.state, engine.provider))


def _run_baseline_conversation(
    conv_id: str,
    roster: list[Participant],
    initiator: str,
    icebreaker: str,
    turns: int,
    provider: Provider,
    seed: int,
    path: Path,
) -> None:
    clock = VirtualClock()
    log = EventLog(path)
    state = ConversationState(id=conv_id, participants=roster, rng_seed=seed)

    def speak(speaker: str, text: str) -> None:
        utt = state.append_utterance(speaker, text, wall_time=clock.now())
        log.append("utterance", utt.timestep, utt.wall_time, speaker, {
            "id": utt.id, "speaker": speaker, "text": text,
        })
        clock.advance(1.0)

    try:
        speak(initiator, icebreaker)
        names = {p.display_name.lower(): p.id for p in roster}
        while state.current_timestep < turns:
            last = state.last_utterance()
            history = "\n".join(
                f"{state.participant(u.speaker).display_name}: {u.text}"
                for u in state.window(BASELINE_WINDOW)
            )
            pick_req = CompletionRequest(
                system_prompt="You predict turn-taking in a group text conversation.",
                user_prompt=(
                    f"Participants: {', '.join(p.display_name for p in roster)}\n"
                    f"Last speaker: {state.participant(last.speaker).display_name}\n\n"
                    f"Last utterances:\n{history}\n\n"
                    "Predict the most likely next speaker by name. Reply with the name only."
                ),
                max_tokens=10,
                temperature=0.0,
                purpose="baseline_pick_speaker",
            )
            answer = provider.complete(pick_req).text.strip().lower()
            answer = re.sub(r"[^\w ]", "", answer)
            speaker_id = names.get(answer)
            if speaker_id is None or speaker_id == last.speaker:
                speaker_id = next(p.id for p in roster if p.id != last.speaker)
            speaker = state.participant(speaker_id)
            reply_req = CompletionRequest(
                system_prompt=(
                    f"You are {speaker.display_name} in a group text conversation. "
                    "Reply in your own voice, first person, concise."
                ),
                user_prompt=(
                    f"Persona: {' '.join(speaker.persona)}\n\n"
                    f"Conversation:\n{history}\n\n"
                    "Write your next message, based on your persona."
                ),
                max_tokens=120,
                purpose="baseline_reply",
            )
            speak(speaker_id, provider.complete(reply_req).text.strip())
    finally:
        log.close()


def _read_log(path: Path) -> list[dict]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed event: {exc}") from exc
    return events


def _condition_of(path: Path) -> str:
    parts = path.name.split(".")
    return parts[-2] if len(parts) >= 3 and parts[-2] in CONDITIONS else "unknown"


def summarize(log_paths: list[Path | str]) -> dict:
    """Descriptive per-condition stats over a set of conversation logs."""
    conditions: dict[str, dict] = {}
    skipped: list[str] = []
    for raw_path in log_paths:
        path = Path(raw_path)
        try:
            events = _read_log(path)
        except (OSError, ValueError) as exc:
            logger.warning("skipping malformed log %s: %s", path, exc)
            skipped.append(str(path))
            continue
        bucket = conditions.setdefault(_condition_of(path), {
            "conversations": 0,
            "total_utterances": 0,
            "utterances_per_agent": {},
            "speaker_transitions": 0,
            "interruptions": 0,
            "retained_expressions": 0,
            "_expressed_scores": [],
        })
        bucket["conversations"] += 1
        utterances = [e for e in events if e["type"] == "utterance"]
        bucket["total_utterances"] += len(utterances)
        for e in utterances:
            speaker = e["payload"]["speaker"]
            bucket["utterances_per_agent"][speaker] = (
                bucket["utterances_per_agent"].get(speaker, 0) + 1
            )
        bucket["speaker_transitions"] += sum(
            1 for a, b in zip(utterances, utterances[1:])
            if a["payload"]["speaker"] != b["payload"]["speaker"]
        )
        bucket["interruptions"] += sum(
            1 for e in events
            if e["type"] == "decision"
            and e["payload"]["action"] == "speak"
            and e["payload"]["reason"] == "interrupt"
        )
        for e in events:
            if e["type"] == "thought_expressed":
                if e["payload"].get("retained"):
                    bucket["retained_expressions"] += 1
                if e["payload"].get("score") is not None:
                    bucket["_expressed_scores"].append(e["payload"]["score"])
    for bucket in conditions.values():
        total = bucket["total_utterances"]
        bucket["speaker_balance"] = {
            speaker: count / total
            for speaker, count in sorted(bucket["utterances_per_agent"].items())
        } if total else {}
        scores = bucket.pop("_expressed_scores")
        bucket["mean_expressed_motivation"] = (
            sum(scores) / len(scores) if scores else None
        )
    return {"conditions": conditions, "skipped": skipped}
