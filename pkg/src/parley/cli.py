"""Command-line front-end: simulations, log replay, the API server, and
one-off scoring/classification utilities.

Exit codes: 0 success, 1 runtime failure, 2 bad plan/input file, 3 port busy.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import sys
import time
from importlib import resources
from pathlib import Path

import click

from .core import ConversationState, Participant, ProactivityConfig
from .evaluation import RatingDistribution, score_thought
from .participation import classify_turn
from .providers import MockProvider, OpenAICompatProvider
from .simulate import SimulationPlan, run_simulation

logger = logging.getLogger(__name__)


def _load_json(path: str, exit_code: int = 2) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot read {path}: {exc}", err=True)
        sys.exit(exit_code)


def _resolve_config_path(path: str) -> Path:
    """Accept a filesystem path or the stem of a bundled preset."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("parley").joinpath(f"presets/{Path(path).stem}.json")
    if bundled.is_file():
        return Path(str(bundled))
    click.echo(f"error: no such config file or preset: {path}", err=True)
    sys.exit(2)


def _live_provider() -> OpenAICompatProvider:
    return OpenAICompatProvider(
        base_url=os.environ.get("PARLEY_BASE_URL", "https://api.openai.com/v1"),
        model=os.environ.get("PARLEY_MODEL", "gpt-4o-mini"),
    )


def _live_provider_factory():
    def factory(condition: str, index: int):
        return _live_provider()

    return factory


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Proactive multi-party conversation engine."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--plan", "plan_path", type=str, default=None,
              help="JSON plan file; flags below override its values.")
@click.option("--condition", type=click.Choice(["inner_thoughts", "baseline", "paired"]),
              default=None)
@click.option("--convs", type=int, default=None, help="Conversations per condition.")
@click.option("--agents", type=int, default=None, help="Agents per conversation.")
@click.option("--turns", type=int, default=None, help="Utterances per conversation.")
@click.option("--provider", "provider_kind", type=click.Choice(["mock", "live"]),
              default="mock")
@click.option("--seed", type=int, default=None)
@click.option("--personas", "personas_file", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (default ./runs/<timestamp>).")
def simulate(plan_path, condition, convs, agents, turns, provider_kind, seed,
             personas_file, out_dir):
    """Run scripted multi-agent conversations and write JSONL logs + metrics."""
    data: dict = {}
    if plan_path:
        data = dict(_load_json(plan_path))
    overrides = {
        "condition": condition,
        "num_conversations": convs,
        "agents_per_conversation": agents,
        "turns": turns,
        "rng_seed": seed,
        "personas_file": personas_file,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        plan = SimulationPlan.from_dict(data)
    except (ValueError, TypeError) as exc:
        click.echo(f"error: invalid plan: {exc}", err=True)
        sys.exit(2)
    out = Path(out_dir) if out_dir else Path("runs") / time.strftime("%Y%m%d-%H%M%S")
    factory = _live_provider_factory() if provider_kind == "live" else None
    report = run_simulation(plan, out, provider_factory=factory)
    for path in report.log_paths:
        click.echo(f"log: {path}")
    click.echo(f"metrics: {out / 'metrics.json'}")
    if report.failures:
        for path, err in report.failures:
            click.echo(f"FAILED {path}: {err}", err=True)
        sys.exit(1)


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--speed", type=float, default=1.0,
              help="Playback speed multiplier; 0 dumps instantly.")
@click.option("--show-thoughts", is_flag=True,
              help="Interleave covert events, dimmed.")
def replay(log_path, speed, show_thoughts):
    """Render a conversation log as a timed transcript."""
    covert_types = {"thought_created", "thought_evaluated", "thought_expressed", "decision"}
    with open(log_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                click.echo(f"error: malformed log line {lineno}: {exc}", err=True)
                sys.exit(2)
            if event["type"] == "utterance":
                text = event["payload"]["text"]
                if speed > 0:
                    time.sleep(min(len(text) * 0.03 / speed, 5.0))
                click.echo(f"[t{event['timestep']:>3}] {event['payload']['speaker']}: {text}")
            elif show_thoughts and event["type"] in covert_types:
                summary = _covert_summary(event)
                click.secho(f"       ({summary})", dim=True)


def _covert_summary(event: dict) -> str:
    payload = event["payload"]
    agent = event["agent"]
    if event["type"] == "thought_created":
        return f"{agent} thinks [{payload['id']}]: {payload['text']}"
    if event["type"] == "thought_evaluated":
        return f"{agent} rates {payload['thought']} at {payload['final']:.2f}"
    if event["type"] == "thought_expressed":
        return f"{agent} voices {payload['thought']}"
    return f"{agent} decision: {payload['action']} ({payload['reason']})"


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--config", "config_path", type=str, default=None,
              help="Conversation config JSON, or the name of a bundled "
                   "proactivity preset for a one-agent playground.")
def serve(port, host, config_path):
    """Run the HTTP/event-stream server until interrupted."""
    import uvicorn

    from .server import ConversationIn, ConversationRegistry, ParticipantIn, create_app

    probe = socket.socket()
    try:
        probe.bind((host, port))
    except OSError:
        click.echo(f"error: port {port} is busy", err=True)
        sys.exit(3)
    finally:
        probe.close()

    config: dict = {}
    if config_path:
        config = _load_json(str(_resolve_config_path(config_path)))
    if set(config) and set(config) <= set(ProactivityConfig.__dataclass_fields__):
        # A bare proactivity preset: wrap it into a default playground setup.
        config = {
            "conversation": {
                "participants": [
                    {"id": "you", "kind": "human"},
                    {"id": "ava", "kind": "agent",
                     "persona": ["I am a yoga instructor.",
                                 "I love hiking in the mountains."],
                     "proactivity": config},
                ],
            },
        }
    registry = ConversationRegistry(default_provider_config=config.get("provider"))
    app = create_app(registry=registry)
    if "conversation" in config:
        spec = ConversationIn(
            participants=[ParticipantIn(**p) for p in config["conversation"]["participants"]],
            **{k: v for k, v in config["conversation"].items() if k != "participants"},
        )
        cid, _ = registry.create(spec)
        click.echo(f"bootstrapped conversation {cid}")
    click.echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command(name="score-thought")
@click.option("--dist", required=True,
              help='Rating distribution, e.g. "4:0.6,5:0.4".')
@click.option("--silence-gap", type=int, default=0,
              help="Timesteps since the agent last spoke.")
@click.option("--growth", type=float, default=1.02)
def score_thought_cmd(dist, silence_gap, growth):
    """Compute the silence-adjusted motivation score for a rating distribution."""
    try:
        mass = {}
        for pair in dist.split(","):
            rating, prob = pair.split(":")
            mass[int(rating)] = float(prob)
        distribution = RatingDistribution(mass)
    except (ValueError, KeyError) as exc:
        click.echo(f"error: invalid distribution {dist!r}: {exc}", err=True)
        sys.exit(2)
    score = score_thought(distribution, t=silence_gap, last_spoke_at=0, growth=growth)
    click.echo(f"raw={score.raw:.6f} silence_factor={score.silence_factor:.6f} "
               f"final={score.final:.6f}")


@main.command(name="classify-turn")
@click.option("--transcript", "transcript_path", required=True,
              type=click.Path(exists=True),
              help="JSON file: {participants: [...], utterances: [{speaker, text}]}")
@click.option("--provider", "provider_kind", type=click.Choice(["mock", "live"]),
              default="mock")
@click.option("--seed", type=int, default=0)
def classify_turn_cmd(transcript_path, provider_kind, seed):
    """Classify whether the next turn is allocated or open to anyone."""
    data = _load_json(transcript_path)
    try:
        participants = [
            Participant(
                id=p["id"],
                display_name=p.get("display_name", p["id"].capitalize()),
                kind=p.get("kind", "human"),
                proactivity=ProactivityConfig() if p.get("kind") == "agent" else None,
            )
            for p in data["participants"]
        ]
        state = ConversationState(id="cli", participants=participants)
        for utt in data["utterances"]:
            state.append_utterance(utt["speaker"], utt["text"])
    except (KeyError, TypeError, ValueError) as exc:
        click.echo(f"error: invalid transcript: {exc}", err=True)
        sys.exit(2)
    provider = _live_provider() if provider_kind == "live" else MockProvider(
        seed=seed, synthesize=True)
    prediction = classify_turn(state, provider)
    if prediction.kind == "allocated":
        click.echo(f"allocated to {prediction.addressee}")
    else:
        click.echo("open to anyone")


if __name__ == "__main__":
    main()
