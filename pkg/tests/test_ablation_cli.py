import json

import pandas as pd
import pytest
from click.testing import CliRunner

import recover
from agent.engine import VARIANTS
from agent.providers import build_providers
from cli import cli
from core.store import DEMO_FIXTURE, SUITE_FIXTURES, load_fixtures, load_traces, save_traces
from core.trace import (
    ErrorClass,
    ErrorEvent,
    ExecutionTrace,
    Message,
    Outcome,
    Role,
    ToolCallRequest,
    ToolInvocation,
    ai,
    human,
    tool,
)
from evaluation.ablation import run_ablation

REPORT_FILES = [f"{kind}_{slug}.{ext}" for slug in ("base", "bp", "bpt", "full")
                for kind, ext in (("traces", "jsonl"), ("report", "json"), ("outcomes", "parquet"))]


@pytest.fixture
def runner(monkeypatch):
    for var in ("AGENTLOOP_MODEL_URL", "AGENTLOOP_EMBEDDING_URL", "AGENTLOOP_TOOLS_SERVER"):
        monkeypatch.delenv(var, raising=False)
    return CliRunner()


def write_trace(tmp_path, trace, name="trace.jsonl"):
    return str(save_traces([trace], tmp_path / name))


# ── run ──────────────────────────────────────────────────────────────────────

def test_run_demo(runner, tmp_path):
    out = tmp_path / "demo.jsonl"
    result = runner.invoke(cli, ["run", "--out", str(out)])
    assert result.exit_code == 0, result.output
    (trace,) = load_traces(out)
    assert trace.task_id == "demo-trip"
    assert trace.variant == "Full"
    assert trace.tool_sequence == ["get_weather", "book_flight", "reserve_hotel"]
    assert "trace written to" in result.output


def test_run_missing_fixture_file(runner, tmp_path):
    out = tmp_path / "never.jsonl"
    result = runner.invoke(cli, ["run", "--fixture", str(tmp_path / "nope.jsonl"), "--out", str(out)])
    assert result.exit_code == 4
    assert not out.exists()


def test_run_unknown_task(runner, tmp_path):
    result = runner.invoke(cli, ["run", "--task", "no-such-task", "--out", str(tmp_path / "t.jsonl")])
    assert result.exit_code == 4


def test_base_reads_more_tokens_than_full(runner, tmp_path):
    for code in ("base", "full"):
        result = runner.invoke(cli, ["run", "--ablation", code, "--out", str(tmp_path / f"{code}.jsonl")])
        assert result.exit_code == 0, result.output
    (base,) = load_traces(tmp_path / "base.jsonl")
    (full,) = load_traces(tmp_path / "full.jsonl")
    assert base.variant == "Base"
    assert base.input_tokens > full.input_tokens


def test_bad_config_key(runner):
    result = runner.invoke(cli, ["--set", "retrieval.nope=1", "run"])
    assert result.exit_code == 3


def test_show_config_replays(runner, tmp_path):
    first = runner.invoke(cli, ["--set", "retrieval.top_m=30", "--show-config"])
    assert first.exit_code == 0
    assert "top_m: 30" in first.output
    path = tmp_path / "resolved.yaml"
    path.write_text(first.output, encoding="utf-8")
    second = runner.invoke(cli, ["--config", str(path), "--show-config"])
    assert second.output == first.output


# ── eval and recovery ────────────────────────────────────────────────────────

def test_eval_writes_reproducible_reports(runner, tmp_path):
    args = ["--set", "memory.summarize_threshold=10", "eval", "--report-dir", str(tmp_path / "r1")]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    for label in ("Base", "B-P", "B-PT", "Full"):
        assert f"| {label} |" in result.output
        assert f"{label}: partition 1.000000000" in result.output
    r1 = tmp_path / "r1"
    assert sorted(p.name for p in r1.iterdir()) == sorted(REPORT_FILES + ["comparison.md"])

    full = json.loads((r1 / "report_full.json").read_text(encoding="utf-8"))
    assert full["n_tasks"] == 10
    assert full["counts"] == {"completed": 8, "failed": 1, "incomplete": 1}

    outcomes = pd.read_parquet(r1 / "outcomes_full.parquet")
    assert list(outcomes["task_id"]) == [t["task_id"] for t in full["tasks"]]
    assert outcomes["classification"].value_counts().to_dict() == full["counts"]

    totals = {slug: json.loads((r1 / f"report_{slug}.json").read_text(encoding="utf-8"))["input_tokens_total"]
              for slug in ("base", "bpt", "full")}
    assert totals["base"] > totals["bpt"] >= totals["full"]

    rerun = runner.invoke(cli, ["--set", "memory.summarize_threshold=10", "eval", "--report-dir", str(tmp_path / "r2")])
    assert rerun.exit_code == 0, rerun.output
    for name in ("comparison.md", "report_base.json", "report_full.json", "traces_full.jsonl"):
        assert (r1 / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_eval_rejects_bad_fixtures_before_running(runner, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"task_id": "x", "turns": []}\n', encoding="utf-8")
    result = runner.invoke(cli, ["eval", "--fixtures", str(bad), "--report-dir", str(tmp_path / "r")])
    assert result.exit_code == 4
    assert not (tmp_path / "r").exists()


def test_eval_rejects_unknown_variant(runner, tmp_path):
    result = runner.invoke(cli, ["eval", "--variants", "base,turbo", "--report-dir", str(tmp_path)])
    assert result.exit_code == 3


def test_recovery_rebuilds_reports(runner, tmp_path):
    result = runner.invoke(cli, ["eval", "--variants", "base,full", "--report-dir", str(tmp_path)])
    assert result.exit_code == 0, result.output
    original = (tmp_path / "report_full.json").read_bytes()
    (tmp_path / "report_full.json").unlink()
    (tmp_path / "comparison.md").unlink()

    runs = recover.run_recovery(SUITE_FIXTURES, tmp_path)
    assert list(runs) == ["Base", "Full"]
    assert (tmp_path / "report_full.json").read_bytes() == original
    assert (tmp_path / "comparison.md").exists()


def test_recovery_needs_traces(tmp_path):
    with pytest.raises(FileNotFoundError):
        recover.run_recovery(SUITE_FIXTURES, tmp_path)


def test_run_ablation_keeps_variant_order(settings, engine_cfg):
    fixtures = load_fixtures(DEMO_FIXTURE)
    runs = run_ablation(fixtures, list(VARIANTS.values()), lambda: build_providers(settings), engine_cfg)
    assert list(runs) == ["Base", "B-P", "B-PT", "Full"]
    for run in runs.values():
        assert run.report.partition_sum == 1.0
        assert run.report.n_tasks == 1


# ── inspect ──────────────────────────────────────────────────────────────────

def test_inspect_lists_steps(runner, tmp_path):
    trace = ExecutionTrace("t1", invoked=[ToolInvocation("get_weather", {"city": "Oslo"}, Outcome.OK)],
                           final_answer="Cold.", variant="Full")
    result = runner.invoke(cli, ["inspect", write_trace(tmp_path, trace)])
    assert result.exit_code == 0
    assert "== t1 [Full] OK" in result.output
    assert '1. get_weather {"city": "Oslo"} -> ok' in result.output
    assert "answer: Cold." in result.output


def test_inspect_shows_failures(runner, tmp_path):
    trace = ExecutionTrace("t2", error_events=[ErrorEvent(ErrorClass.RECURSION_LIMIT, "turn 0")])
    result = runner.invoke(cli, ["inspect", write_trace(tmp_path, trace)])
    assert "FAILED (recursion_limit)" in result.output
    assert "steps: none" in result.output
    assert "answer: (none)" in result.output


def test_inspect_marks_repaired_messages(runner, tmp_path):
    call = ToolCallRequest("c1", "get_weather", {"city": "Oslo"})
    messages = [
        human("weather in Oslo?"),
        ai("checking", (call,)),
        Message(Role.TOOL, "[placeholder] tool call cancelled", tool_call_id="c1", synthetic=True),
        ai("It is cold."),
    ]
    trace = ExecutionTrace("t3", messages=messages, final_answer="It is cold.")
    result = runner.invoke(cli, ["inspect", write_trace(tmp_path, trace)])
    assert result.exit_code == 0
    assert "[2] tool (c1): [placeholder] tool call cancelled  [repaired]" in result.output
    assert "[1] ai calls get_weather: checking" in result.output


def test_inspect_malformed_trace(runner, tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_bytes(b'{"task_id": "t1", "invoked": [')
    result = runner.invoke(cli, ["inspect", str(path)])
    assert result.exit_code == 6


def test_inspect_non_numeric_token_counter(runner, tmp_path):
    path = tmp_path / "tokens.jsonl"
    path.write_text('{"task_id": "t1", "invoked": [], "error_events": [], "final_answer": null, '
                    '"input_tokens": "abc", "output_tokens": 0}\n', encoding="utf-8")
    result = runner.invoke(cli, ["inspect", str(path)])
    assert result.exit_code == 6
    assert "Traceback" not in result.output


def test_inspect_missing_file(runner, tmp_path):
    assert runner.invoke(cli, ["inspect", str(tmp_path / "none.jsonl")]).exit_code == 6


# ── tools ────────────────────────────────────────────────────────────────────

def test_tools_list(runner):
    result = runner.invoke(cli, ["tools", "list"])
    assert result.exit_code == 0
    lines = [line for line in result.output.splitlines() if not line.startswith("[")]
    assert len(lines) == 20
    assert lines[0].startswith("get_weather")
    assert [line for line in lines if line.endswith("[expensive]")][0].startswith("make_slides")


def test_tools_validate(runner):
    result = runner.invoke(cli, ["tools", "validate"])
    assert result.exit_code == 0
    assert result.output.startswith("20 tools OK")


def test_tools_validate_broken_registry(runner, tmp_path):
    path = tmp_path / "registry.jsonl"
    path.write_text('{"tool_name": "x", "description": "", "category": "other"}\n', encoding="utf-8")
    assert runner.invoke(cli, ["tools", "validate", "--registry", str(path)]).exit_code == 7


def test_tools_validate_malformed_constraint(runner, tmp_path):
    path = tmp_path / "registry.jsonl"
    path.write_text('{"tool_name": "get_weather", "category": "information_retrieval", "description": "Weather.", '
                    '"parameters": [{"name": "city", "type": "city", "constraint": "min:abc"}]}\n',
                    encoding="utf-8")
    result = runner.invoke(cli, ["tools", "validate", "--registry", str(path)])
    assert result.exit_code == 7
    assert "Traceback" not in result.output


def test_tool_messages_roundtrip_through_inspect(runner, tmp_path):
    call = ToolCallRequest("c9", "get_weather", {"city": "Rome"})
    messages = [human("Rome?"), ai("", (call,)), tool("c9", "Weather in Rome: 20°C, sunny."), ai("Warm.")]
    trace = ExecutionTrace("t4", messages=messages, final_answer="Warm.")
    result = runner.invoke(cli, ["inspect", write_trace(tmp_path, trace)])
    assert "Weather in Rome: 20°C, sunny." in result.output
