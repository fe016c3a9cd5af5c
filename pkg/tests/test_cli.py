import json
import socket
from pathlib import Path

import pytest
from click.testing import CliRunner

from parley.cli import main


@pytest.fixture
def runner():
    return CliRunner()


class TestSimulate:
    def test_smoke_run_writes_logs_and_metrics(self, runner, tmp_path):
        result = runner.invoke(main, [
            "simulate", "--condition", "inner_thoughts", "--convs", "2",
            "--turns", "6", "--provider", "mock", "--seed", "7",
            "--out", str(tmp_path),
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "conv01.inner_thoughts.jsonl").exists()
        assert (tmp_path / "conv02.inner_thoughts.jsonl").exists()
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert metrics["conditions"]["inner_thoughts"]["conversations"] == 2

    def test_seeded_runs_are_byte_identical(self, runner, tmp_path):
        args = ["simulate", "--condition", "inner_thoughts", "--convs", "1",
                "--turns", "6", "--provider", "mock", "--seed", "7"]
        assert runner.invoke(main, args + ["--out", str(tmp_path / "a")]).exit_code == 0
        assert runner.invoke(main, args + ["--out", str(tmp_path / "b")]).exit_code == 0
        a = (tmp_path / "a" / "conv01.inner_thoughts.jsonl").read_bytes()
        b = (tmp_path / "b" / "conv01.inner_thoughts.jsonl").read_bytes()
        assert a == b

    def test_plan_file(self, runner, tmp_path):
        plan = tmp_path / "plan.json"
        plan.write_text(json.dumps({
            "condition": "baseline", "num_conversations": 1, "turns": 5, "rng_seed": 3,
        }))
        result = runner.invoke(main, ["simulate", "--plan", str(plan),
                                      "--out", str(tmp_path / "out")])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "conv01.baseline.jsonl").exists()

    def test_bad_plan_file_exits_2(self, runner, tmp_path):
        plan = tmp_path / "plan.json"
        plan.write_text("{not json")
        result = runner.invoke(main, ["simulate", "--plan", str(plan)])
        assert result.exit_code == 2

    def test_invalid_plan_values_exit_2(self, runner, tmp_path):
        plan = tmp_path / "plan.json"
        plan.write_text(json.dumps({"condition": "whatever"}))
        result = runner.invoke(main, ["simulate", "--plan", str(plan)])
        assert result.exit_code == 2


class TestReplay:
    def _write_log(self, tmp_path):
        events = []
        for i in range(15):
            events.append({"seq": i + 1, "type": "utterance", "timestep": i + 1,
                           "wall_time": float(i), "agent": "a",
                           "payload": {"id": f"u{i+1}", "speaker": "a", "text": f"line {i}"}})
        path = tmp_path / "log.jsonl"
        path.write_text("\n".join(json.dumps(e) for e in events) + "\n")
        return path

    def test_instant_dump_prints_all_turns(self, runner, tmp_path):
        path = self._write_log(tmp_path)
        result = runner.invoke(main, ["replay", "--log", str(path), "--speed", "0"])
        assert result.exit_code == 0
        lines = [l for l in result.output.splitlines() if l.strip()]
        assert len(lines) == 15

    def test_show_thoughts_interleaves_covert_events(self, runner, tmp_path):
        events = [
            {"seq": 1, "type": "utterance", "timestep": 1, "wall_time": 0.0, "agent": "a",
             "payload": {"id": "u1", "speaker": "a", "text": "hi"}},
            {"seq": 2, "type": "thought_created", "timestep": 1, "wall_time": 0.0,
             "agent": "b", "payload": {"id": "b.t1", "text": "quiet idea", "system": 1,
                                       "stimuli": ["u1"], "created_at": 1, "cycle": 1,
                                       "saliency_at_creation": 0.0, "state": "fresh",
                                       "score": None}},
        ]
        path = tmp_path / "log.jsonl"
        path.write_text("\n".join(json.dumps(e) for e in events) + "\n")
        result = runner.invoke(main, ["replay", "--log", str(path), "--speed", "0",
                                      "--show-thoughts"])
        assert result.exit_code == 0
        assert "quiet idea" in result.output

    def test_malformed_line_aborts_with_line_number(self, runner, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text('{"seq": 1, "type": "utterance", "timestep": 1, "wall_time": 0,'
                        ' "agent": "a", "payload": {"id": "u1", "speaker": "a", "text": "x"}}\n'
                        "{broken\n")
        result = runner.invoke(main, ["replay", "--log", str(path), "--speed", "0"])
        assert result.exit_code == 2
        assert "line 2" in result.output


class TestServe:
    def test_busy_port_exits_3(self, runner):
        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        try:
            result = runner.invoke(main, ["serve", "--port", str(port)])
            assert result.exit_code == 3
        finally:
            sock.close()


class TestScoreThought:
    def test_weighted_score_with_silence(self, runner):
        result = runner.invoke(main, [
            "score-thought", "--dist", "4:0.6,5:0.4", "--silence-gap", "1",
            "--growth", "1.02",
        ])
        assert result.exit_code == 0
        assert "final=4.488000" in result.output

    def test_point_mass(self, runner):
        result = runner.invoke(main, ["score-thought", "--dist", "4:1.0"])
        assert "final=4.000000" in result.output

    def test_bad_distribution_exits_2(self, runner):
        result = runner.invoke(main, ["score-thought", "--dist", "nope"])
        assert result.exit_code == 2


class TestClassifyTurn:
    def _transcript(self, tmp_path, last_text):
        path = tmp_path / "t.json"
        path.write_text(json.dumps({
            "participants": [
                {"id": "alice", "display_name": "Alice"},
                {"id": "bob", "display_name": "Bob"},
            ],
            "utterances": [{"speaker": "bob", "text": last_text}],
        }))
        return path

    def test_direct_address(self, runner, tmp_path):
        path = self._transcript(tmp_path, "What about you, Alice?")
        result = runner.invoke(main, ["classify-turn", "--transcript", str(path)])
        assert result.exit_code == 0
        assert "allocated to alice" in result.output

    def test_open_statement(self, runner, tmp_path):
        path = self._transcript(tmp_path, "I went to Disneyland last weekend.")
        result = runner.invoke(main, ["classify-turn", "--transcript", str(path)])
        assert "open to anyone" in result.output

    def test_bad_transcript_exits_2(self, runner, tmp_path):
        path = tmp_path / "t.json"
        path.write_text(json.dumps({"participants": []}))
        result = runner.invoke(main, ["classify-turn", "--transcript", str(path)])
        assert result.exit_code == 2
