"""Per-agent long-term memory and saliency-based stimulus retrieval.

Saliency of an item against the latest utterance is

    max(sim(item, interpretation), sim(item, raw_text), 0) * weight * decay

with decay = saliency_decay ** (t - last_accessed). Items above the strict
threshold are selected as stimuli and their last-access timestep refreshed;
nothing else about an item is ever mutated by retrieval.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import ConversationState, ProactivityConfig, Utterance
from .providers import EmbeddingVector, Provider, ProviderError, cosine_similarity

logger = logging.getLogger(__name__)

MEMORY_KINDS = ("objective", "knowledge", "interest", "thought-ref")

INTERPRET_INSTRUCTION = (
    "Interpret what {name} just said in the context of the conversation and "
    "what {name} might be thinking. Be as succinct as possible and use a "
    "single sentence."
)


@dataclass
class MemoryItem:
    """One long-term memory entry (or a view onto a live covert thought)."""

    id: str
    kind: str
    text: str
    weight: float = 1.0
    last_accessed: int = 0
    embedding: Optional[EmbeddingVector] = None

    def __post_init__(self) -> None:
        if self.kind not in MEMORY_KINDS:
            raise ValueError(f"memory kind must be one of {MEMORY_KINDS}, got {self.kind!r}")
        if self.weight <= 0:
            raise ValueError("memory weight must be > 0")


@dataclass
class RetrievalHit:
    """A selected stimulus with the components its saliency was built from."""

    item: MemoryItem
    saliency: float
    sim_raw: float
    sim_interp: float  # -inf when no interpretation was available
    decay: float

    def to_dict(self) -> dict:
        return {
            "item_id": self.item.id,
            "kind": self.item.kind,
            "text": self.item.text,
            "saliency": self.saliency,
            "sim_raw": self.sim_raw,
            "sim_interp": None if math.isinf(self.sim_interp) else self.sim_interp,
            "decay": self.decay,
        }


class MemoryStore:
    """The long-term memory items one agent owns.

    Embeddings are computed when an item is added and refreshed only when its
    text is edited.
    """

    def __init__(self, owner: str, provider: Provider):
        self.owner = owner
        self._provider = provider
        self.items: list[MemoryItem] = []
        self._counter = 0

    def add(self, kind: str, text: str, weight: float = 1.0, last_accessed: int = 0) -> MemoryItem:
        self._counter += 1
        item = MemoryItem(
            id=f"{self.owner}.m{self._counter}",
            kind=kind,
            text=text,
            weight=weight,
            last_accessed=last_accessed,
            embedding=self._provider.embed(text),
        )
        self.items.append(item)
        return item

    def remove(self, item_id: str) -> bool:
        before = len(self.items)
        self.items = [i for i in self.items if i.id != item_id]
        return len(self.items) != before

    def get(self, item_id: str) -> Optional[MemoryItem]:
        for item in self.items:
            if item.id == item_id:
                return item
        return None

    def update_text(self, item_id: str, text: str) -> MemoryItem:
        item = self.get(item_id)
        if item is None:
            raise KeyError(item_id)
        item.text = text
        item.embedding = self._provider.embed(text)
        return item

    def export_json(self) -> str:
        return json.dumps(
            [{"kind": i.kind, "text": i.text, "weight": i.weight} for i in self.items],
            indent=2,
        )

    def import_json(self, payload: str | list) -> list[MemoryItem]:
        """Replace the store contents from a JSON array of {kind, text, weight}."""
        entries = json.loads(payload) if isinstance(payload, str) else payload
        self.items = []
        self._counter = 0
        return [
            self.add(e["kind"], e["text"], float(e.get("weight", 1.0)))
            for e in entries
        ]


def interpret_utterance(state: ConversationState, u: Utterance, provider: Provider,
                        context_window: int = 6) -> str:
    """Fill (once) and return the cached one-sentence interpretation of ``u``.

    On provider failure the interpretation stays empty and retrieval falls
    back to raw-text similarity only.
    """
    if u.interpretation is not None:
        return u.interpretation
    speaker = state.participant(u.speaker)
    history = "\n".join(
        f"{state.participant(x.speaker).display_name}: {x.text}"
        for x in state.window(context_window)
    )
    from .providers import CompletionRequest

    req = CompletionRequest(
        system_prompt="You are observing a group text conversation.",
        user_prompt=(
            f"Conversation so far:\n{history}\n\n"
            f"Speaker: {speaker.display_name}\n"
            f"Utterance: {u.text}\n\n"
            + INTERPRET_INSTRUCTION.format(name=speaker.display_name)
        ),
        max_tokens=60,
        temperature=0.3,
        purpose="interpret",
    )
    try:
        text = provider.complete(req).text.strip()
    except ProviderError as exc:
        logger.warning("interpretation failed for %s: %s", u.id, exc)
        return ""
    u.set_interpretation(text)
    return text


def compute_saliency(
    item: MemoryItem,
    u: Utterance,
    t: int,
    cfg: ProactivityConfig,
    provider: Provider,
    raw_embedding: Optional[EmbeddingVector] = None,
    interp_embedding: Optional[EmbeddingVector] = None,
) -> RetrievalHit:
    """Score one item against the utterance; pass cached embeddings to avoid re-embedding."""
    if item.embedding is None:
        item.embedding = provider.embed(item.text)
    if raw_embedding is None:
        raw_embedding = provider.embed(u.text)
    sim_raw = cosine_similarity(item.embedding, raw_embedding)
    if interp_embedding is None and u.interpretation:
        interp_embedding = provider.embed(u.interpretation)
    sim_interp = (
        cosine_similarity(item.embedding, interp_embedding)
        if interp_embedding is not None
        else float("-inf")
    )
    decay = cfg.saliency_decay ** (t - item.last_accessed)
    # Negative cosines would produce negative saliency; floor the combined
    # similarity at zero so saliency stays nonnegative and reproducible.
    saliency = max(sim_interp, sim_raw, 0.0) * item.weight * decay
    return RetrievalHit(item=item, saliency=saliency, sim_raw=sim_raw,
                        sim_interp=sim_interp, decay=decay)


def retrieve_stimuli(
    items: Iterable[MemoryItem],
    u: Utterance,
    t: int,
    cfg: ProactivityConfig,
    provider: Provider,
    rng: Optional[random.Random] = None,
) -> list[RetrievalHit]:
    """Select the items salient to ``u``, most salient first.

    ``items`` should contain the agent's long-term memories plus views onto
    its live (unexpressed) covert thoughts. Selected items get their
    last-access timestep refreshed; with ``creativity_prob`` set, one random
    below-threshold item may be appended as an extra stimulus.
    """
    items = list(items)
    if not items:
        return []
    raw_embedding = provider.embed(u.text)
    interp_embedding = provider.embed(u.interpretation) if u.interpretation else None
    hits = [
        compute_saliency(item, u, t, cfg, provider,
                         raw_embedding=raw_embedding, interp_embedding=interp_embedding)
        for item in items
    ]
    selected = sorted(
        (h for h in hits if h.saliency > cfg.saliency_threshold),
        key=lambda h: -h.saliency,
    )
    if rng is not None and cfg.creativity_prob > 0 and rng.random() < cfg.creativity_prob:
        leftovers = [h for h in hits if h.saliency <= cfg.saliency_threshold]
        if leftovers:
            selected.append(rng.choice(leftovers))
    for hit in selected:
        hit.item.last_accessed = t
    return selected
