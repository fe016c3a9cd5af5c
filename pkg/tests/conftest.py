import random

import pytest

from parley.core import ConversationState, Participant, ProactivityConfig
from parley.providers import MockProvider


def make_agent(pid: str, persona=None, **proactivity) -> Participant:
    return Participant(
        id=pid,
        display_name=pid.capitalize(),
        kind="agent",
        persona=persona or [],
        proactivity=ProactivityConfig(**proactivity),
    )


def make_human(pid: str) -> Participant:
    return Participant(id=pid, display_name=pid.capitalize(), kind="human")


def make_state(*participants: Participant, seed: int = 0) -> ConversationState:
    return ConversationState(id="conv", participants=list(participants), rng_seed=seed)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def mock_provider():
    return MockProvider(seed=0)


@pytest.fixture
def synth_provider():
    return MockProvider(seed=0, synthesize=True)
