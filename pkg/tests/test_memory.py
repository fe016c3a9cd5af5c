import math
import random

import pytest
from hypothesis import given, strategies as st

from parley.core import ProactivityConfig
from parley.memory import MemoryStore, compute_saliency, interpret_utterance, retrieve_stimuli
from parley.providers import MockProvider, axis_vector, unit_vector_with_similarity

from conftest import make_agent, make_human, make_state


AXIS = (1.0, 0.0)


def forced_provider(item_sims: dict[str, float], utterance_text: str = "the trigger",
                    interp_text: str | None = None, interp_sims: dict[str, float] | None = None):
    """Mock provider where each item text's similarity to the utterance is pinned."""
    provider = MockProvider()
    provider.script_embedding(utterance_text, AXIS)
    if interp_text is not None:
        provider.script_embedding(interp_text, AXIS)
    for text, sim in item_sims.items():
        provider.script_embedding(text, unit_vector_with_similarity(sim).values)
    for text, sim in (interp_sims or {}).items():
        provider.script_embedding(text, unit_vector_with_similarity(sim).values)
    return provider


def make_utt(state, text="the trigger"):
    return state.append_utterance("h", text)


@pytest.fixture
def state():
    return make_state(make_human("h"), make_agent("a"))


class TestInterpretation:
    def test_scripted_interpretation_cached(self, state):
        provider = MockProvider()
        provider.script_completion("Disneyland", "Alice is sharing a fun weekend trip.")
        utt = make_utt(state, "I went to Disneyland last weekend.")
        text = interpret_utterance(state, utt, provider)
        assert text == "Alice is sharing a fun weekend trip."
        assert utt.interpretation == text

    def test_already_interpreted_makes_no_provider_calls(self, state):
        provider = MockProvider()
        utt = make_utt(state)
        utt.set_interpretation("cached reading")
        assert interpret_utterance(state, utt, provider) == "cached reading"
        assert provider.calls == []

    def test_provider_failure_leaves_interpretation_empty(self, state):
        provider = MockProvider()
        provider.script_failure("the trigger")
        utt = make_utt(state)
        assert interpret_utterance(state, utt, provider) == ""
        assert utt.interpretation is None


class TestSaliency:
    def test_zero_similarity_gives_zero(self, state):
        provider = forced_provider({"unrelated": 0.0})
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        item = store.add("knowledge", "unrelated")
        hit = compute_saliency(item, utt, t=utt.timestep, cfg=ProactivityConfig(), provider=provider)
        assert hit.saliency == pytest.approx(0.0, abs=1e-12)

    def test_max_of_raw_and_interp_no_decay(self, state):
        # item along the axis; raw text at cos 0.4, interpretation at cos 0.6,
        # weight 1, zero gap -> saliency max(0.4, 0.6) = 0.6
        provider = MockProvider()
        provider.script_embedding("memory text", AXIS)
        provider.script_embedding("the trigger", unit_vector_with_similarity(0.4).values)
        provider.script_embedding("the reading", unit_vector_with_similarity(0.6).values)
        utt = make_utt(state)
        utt.set_interpretation("the reading")
        store = MemoryStore("a", provider)
        item = store.add("interest", "memory text", last_accessed=utt.timestep)
        hit = compute_saliency(item, utt, t=utt.timestep, cfg=ProactivityConfig(), provider=provider)
        assert hit.sim_raw == pytest.approx(0.4, abs=1e-9)
        assert hit.sim_interp == pytest.approx(0.6, abs=1e-9)
        assert hit.saliency == pytest.approx(0.6, abs=1e-9)

    def test_decay_formula(self, state):
        # max-sim 0.6, w 1, decay 0.95^3 -> 0.6 * 0.857375 = 0.514425
        provider = forced_provider({"memory text": 0.6})
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        item = store.add("interest", "memory text", last_accessed=0)
        state.current_timestep = 3
        utt.timestep = 3
        hit = compute_saliency(item, utt, t=3, cfg=ProactivityConfig(), provider=provider)
        assert hit.decay == pytest.approx(0.95 ** 3, abs=1e-12)
        assert hit.saliency == pytest.approx(0.514425, abs=1e-9)

    def test_missing_interpretation_uses_raw_only(self, state):
        provider = forced_provider({"memory text": 0.5})
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        item = store.add("interest", "memory text", last_accessed=utt.timestep)
        hit = compute_saliency(item, utt, t=utt.timestep, cfg=ProactivityConfig(), provider=provider)
        assert math.isinf(hit.sim_interp) and hit.sim_interp < 0
        assert hit.saliency == pytest.approx(0.5, abs=1e-9)

    @given(gap=st.integers(min_value=0, max_value=60))
    def test_decay_monotone(self, gap):
        cfg = ProactivityConfig()
        base = 0.6 * cfg.saliency_decay ** gap
        lower = 0.6 * cfg.saliency_decay ** (gap + 1)
        assert lower < base


class TestRetrieval:
    def test_empty_store_returns_empty(self, state):
        provider = MockProvider()
        provider.script_embedding("the trigger", AXIS)
        utt = make_utt(state)
        assert retrieve_stimuli([], utt, 1, ProactivityConfig(), provider) == []

    def test_item_above_threshold_selected_and_refreshed(self, state):
        # weight 0.31 with perfect similarity -> saliency exactly 0.31 > 0.3
        provider = forced_provider({"pinned memory": 1.0})
        provider.script_embedding("pinned memory", AXIS)
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        item = store.add("interest", "pinned memory", weight=0.31, last_accessed=utt.timestep)
        hits = retrieve_stimuli(store.items, utt, utt.timestep, ProactivityConfig(), provider)
        assert [h.item.id for h in hits] == [item.id]
        assert item.last_accessed == utt.timestep

    def test_exact_threshold_excluded(self, state):
        # weight 0.30 with perfect similarity -> saliency exactly 0.30, strict >
        provider = MockProvider()
        provider.script_embedding("the trigger", AXIS)
        provider.script_embedding("pinned memory", AXIS)
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        item = store.add("interest", "pinned memory", weight=0.3, last_accessed=5)
        state.current_timestep = 5
        utt.timestep = 5
        hits = retrieve_stimuli(store.items, utt, 5, ProactivityConfig(), provider)
        assert hits == []
        assert item.last_accessed == 5  # untouched

    def test_sorted_descending(self, state):
        provider = forced_provider({"first": 0.9, "second": 0.5, "third": 0.7})
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        for text in ("first", "second", "third"):
            store.add("interest", text, last_accessed=utt.timestep)
        hits = retrieve_stimuli(store.items, utt, utt.timestep, ProactivityConfig(), provider)
        assert [h.item.text for h in hits] == ["first", "third", "second"]

    def test_access_refresh_resets_decay(self, state):
        provider = forced_provider({"memory": 0.8})
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        item = store.add("interest", "memory", last_accessed=0)
        state.current_timestep = 4
        utt.timestep = 4
        cfg = ProactivityConfig()
        first = compute_saliency(item, utt, 4, cfg, provider)
        assert first.decay == pytest.approx(0.95 ** 4)
        retrieve_stimuli(store.items, utt, 4, cfg, provider)
        second = compute_saliency(item, utt, 4, cfg, provider)
        assert second.decay == pytest.approx(1.0)

    def test_retrieval_never_mutates_item_content(self, state):
        provider = forced_provider({"memory": 0.8})
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        item = store.add("interest", "memory", weight=1.5, last_accessed=utt.timestep)
        embedding = item.embedding
        retrieve_stimuli(store.items, utt, utt.timestep, ProactivityConfig(), provider)
        assert (item.text, item.weight, item.embedding) == ("memory", 1.5, embedding)

    def test_creativity_injects_one_below_threshold_item(self, state):
        provider = forced_provider({"dull": 0.1})
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        store.add("interest", "dull", last_accessed=utt.timestep)
        cfg = ProactivityConfig(creativity_prob=1.0)
        hits = retrieve_stimuli(store.items, utt, utt.timestep, cfg, provider,
                                rng=random.Random(0))
        assert len(hits) == 1
        assert hits[0].item.text == "dull"

    def test_hit_components_reproduce_saliency(self, state):
        provider = forced_provider({"memory": 0.65})
        utt = make_utt(state)
        store = MemoryStore("a", provider)
        item = store.add("interest", "memory", weight=1.2, last_accessed=0)
        state.current_timestep = 2
        utt.timestep = 2
        hit = compute_saliency(item, utt, 2, ProactivityConfig(), provider)
        rebuilt = max(hit.sim_interp, hit.sim_raw, 0.0) * item.weight * hit.decay
        assert hit.saliency == pytest.approx(rebuilt, abs=1e-12)


class TestStore:
    def test_import_export_round_trip(self):
        provider = MockProvider()
        store = MemoryStore("a", provider)
        store.add("objective", "learn to sail", weight=2.0)
        store.add("interest", "jazz piano")
        payload = store.export_json()
        other = MemoryStore("b", provider)
        items = other.import_json(payload)
        assert [(i.kind, i.text, i.weight) for i in items] == [
            ("objective", "learn to sail", 2.0),
            ("interest", "jazz piano", 1.0),
        ]

    def test_weight_must_be_positive(self):
        provider = MockProvider()
        store = MemoryStore("a", provider)
        with pytest.raises(ValueError):
            store.add("interest", "x", weight=0.0)

    def test_update_text_reembeds(self):
        provider = MockProvider()
        store = MemoryStore("a", provider)
        item = store.add("interest", "old text")
        before = item.embedding
        store.update_text(item.id, "completely different words")
        assert item.embedding != before
