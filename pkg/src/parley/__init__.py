"""Proactive multi-party conversational agents with covert thought reservoirs."""

from .core import (
    ConversationState,
    Participant,
    ProactivityConfig,
    Utterance,
    UnknownParticipant,
    ConfigRangeError,
    ParleyError,
    append_utterance,
)
from .providers import (
    CompletionRequest,
    CompletionResponse,
    EmbeddingVector,
    MockProvider,
    OpenAICompatProvider,
    ProviderError,
    ScriptMiss,
    DegenerateVector,
    cosine_similarity,
)
from .memory import MemoryItem, MemoryStore, RetrievalHit, compute_saliency, interpret_utterance, retrieve_stimuli
from .cognition import Thought, ThoughtReservoir, form_system1, form_system2, prune_reservoir
from .evaluation import (
    CRITERIA,
    LEVELS,
    EvaluationParseError,
    MotivationScore,
    RatingDistribution,
    build_eval_prompt,
    evaluate_batch,
    parse_rating,
    score_thought,
)
from .participation import Decision, TurnPrediction, articulate, classify_turn, decide
from .engine import Engine, EngineConfig, EventLog, QueueFull, TriggerEvent, VirtualClock, WallClock
from .simulate import PersonaSeed, SimulationPlan, build_personas, run_simulation, summarize

__version__ = "0.1.0"
