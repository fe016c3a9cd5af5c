import json
import random
from pathlib import Path

import pytest

from parley.simulate import (
    DEFAULT_ICEBREAKERS,
    PersonaSeed,
    SimulationPlan,
    build_personas,
    load_persona_seeds,
    run_simulation,
    summarize,
)


def read_events(path):
    return [json.loads(l) for l in Path(path).read_text().splitlines()]


class TestPersonas:
    def test_bundled_pool_has_eight_seeds(self):
        seeds = load_persona_seeds()
        assert len(seeds) == 8
        assert all(len(s.lines) >= 3 for s in seeds)

    def test_each_agent_gets_two_foreign_lines(self):
        seeds = load_persona_seeds()
        agents = build_personas(seeds, 8, random.Random(0))
        by_name = {s.name: set(s.lines) for s in seeds}
        for agent, seed in zip(agents, seeds):
            own = set(seed.lines)
            extras = [l for l in agent.persona if l not in own]
            assert len(agent.persona) == len(seed.lines) + 2
            assert len(extras) == 2
            foreign = set().union(*(lines for name, lines in by_name.items()
                                    if name != seed.name))
            assert all(e in foreign for e in extras)

    def test_pool_of_one_rejected(self):
        seeds = load_persona_seeds()
        with pytest.raises(ValueError):
            build_personas(seeds, 1, random.Random(0))

    def test_pool_larger_than_seeds_rejected(self):
        seeds = load_persona_seeds()[:3]
        with pytest.raises(ValueError):
            build_personas(seeds, 8, random.Random(0))

    def test_fixed_rng_reproducible(self):
        seeds = load_persona_seeds()
        a = build_personas(seeds, 8, random.Random(42))
        b = build_personas(seeds, 8, random.Random(42))
        assert [p.persona for p in a] == [p.persona for p in b]

    def test_seed_requires_three_lines(self):
        with pytest.raises(ValueError):
            PersonaSeed(name="x", lines=["one", "two"])


class TestPlan:
    def test_unknown_condition_rejected(self):
        with pytest.raises(ValueError):
            SimulationPlan(condition="nonsense")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            SimulationPlan.from_dict({"condition": "baseline", "bogus": 1})

    def test_icebreaker_pool_includes_quoted_openers(self):
        assert "What did you do last weekend?" in DEFAULT_ICEBREAKERS
        assert "What is your favorite thing to do?" in DEFAULT_ICEBREAKERS
        assert "Hey!" in DEFAULT_ICEBREAKERS
        assert len(DEFAULT_ICEBREAKERS) == 10


class TestRuns:
    def test_engine_condition_produces_exact_turn_count(self, tmp_path):
        plan = SimulationPlan(condition="inner_thoughts", num_conversations=2,
                              agents_per_conversation=4, turns=15, rng_seed=7)
        report = run_simulation(plan, tmp_path)
        assert report.failures == []
        assert len(report.log_paths) == 2
        for path in report.log_paths:
            events = read_events(path)
            assert sum(1 for e in events if e["type"] == "utterance") == 15

    def test_baseline_has_zero_thought_events(self, tmp_path):
        plan = SimulationPlan(condition="baseline", num_conversations=1,
                              turns=10, rng_seed=3)
        report = run_simulation(plan, tmp_path)
        events = read_events(report.log_paths[0])
        assert not [e for e in events if e["type"].startswith("thought")]
        assert sum(1 for e in events if e["type"] == "utterance") == 10

    def test_byte_identical_reruns(self, tmp_path):
        plan = SimulationPlan(condition="inner_thoughts", num_conversations=1,
                              turns=8, rng_seed=11)
        first = run_simulation(plan, tmp_path / "a").log_paths[0].read_bytes()
        second = run_simulation(plan, tmp_path / "b").log_paths[0].read_bytes()
        assert first == second

    def test_paired_conditions_share_setup(self, tmp_path):
        plan = SimulationPlan(condition="paired", num_conversations=2, turns=6, rng_seed=5)
        report = run_simulation(plan, tmp_path)
        for i in (1, 2):
            a = read_events(tmp_path / f"conv{i:02d}.inner_thoughts.jsonl")
            b = read_events(tmp_path / f"conv{i:02d}.baseline.jsonl")
            first_a = next(e for e in a if e["type"] == "utterance")
            first_b = next(e for e in b if e["type"] == "utterance")
            assert first_a["payload"] == first_b["payload"]  # initiator + icebreaker
            speakers_a = {e["payload"]["speaker"] for e in a if e["type"] == "utterance"}
            speakers_b = {e["payload"]["speaker"] for e in b if e["type"] == "utterance"}
            assert speakers_a <= speakers_b | speakers_a  # same roster universe
        assert report.metrics["conditions"].keys() == {"inner_thoughts", "baseline"}

    def test_protocol_batch_counts(self, tmp_path):
        plan = SimulationPlan(condition="inner_thoughts", num_conversations=1,
                              turns=4, rng_seed=2)
        run_simulation(plan, tmp_path)
        events = read_events(tmp_path / "conv01.inner_thoughts.jsonl")
        created = [e for e in events if e["type"] == "thought_created"]
        by_cycle_agent = {}
        for e in created:
            key = (e["payload"]["cycle"], e["agent"])
            by_cycle_agent.setdefault(key, []).append(e["payload"]["system"])
        for systems in by_cycle_agent.values():
            assert systems.count(1) <= 1
            assert systems.count(2) <= 2
            assert len(systems) >= 1


class TestSummarize:
    def _write_log(self, path, events):
        path.write_text("\n".join(json.dumps(e) for e in events) + "\n")

    def _utt(self, seq, speaker, text="x"):
        return {"seq": seq, "type": "utterance", "timestep": seq, "wall_time": 0.0,
                "agent": speaker, "payload": {"id": f"u{seq}", "speaker": speaker, "text": text}}

    def test_round_robin_balance(self, tmp_path):
        agents = ["a", "b", "c", "d"]
        events = [self._utt(i + 1, agents[i % 4]) for i in range(16)]
        path = tmp_path / "conv01.inner_thoughts.jsonl"
        self._write_log(path, events)
        report = summarize([path])
        balance = report["conditions"]["inner_thoughts"]["speaker_balance"]
        assert balance == {"a": 0.25, "b": 0.25, "c": 0.25, "d": 0.25}
        assert report["conditions"]["inner_thoughts"]["speaker_transitions"] == 15

    def test_interruption_counted(self, tmp_path):
        events = [
            self._utt(1, "a"),
            {"seq": 2, "type": "decision", "timestep": 1, "wall_time": 0.0, "agent": "b",
             "payload": {"action": "speak", "reason": "interrupt", "thought": "b.t1",
                         "articulated_text": "!", "lost_arbitration": False}},
        ]
        path = tmp_path / "conv01.inner_thoughts.jsonl"
        self._write_log(path, events)
        report = summarize([path])
        assert report["conditions"]["inner_thoughts"]["interruptions"] == 1

    def test_single_log_total(self, tmp_path):
        events = [self._utt(i + 1, "a") for i in range(15)]
        path = tmp_path / "conv01.baseline.jsonl"
        self._write_log(path, events)
        report = summarize([path])
        assert report["conditions"]["baseline"]["total_utterances"] == 15

    def test_malformed_log_skipped(self, tmp_path):
        bad = tmp_path / "conv01.baseline.jsonl"
        bad.write_text("{not json\n")
        good = tmp_path / "conv02.baseline.jsonl"
        self._write_log(good, [self._utt(1, "a")])
        report = summarize([bad, good])
        assert str(bad) in report["skipped"]
        assert report["conditions"]["baseline"]["total_utterances"] == 1
