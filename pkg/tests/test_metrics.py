import random

import pytest

from core.errors import EmptyInputError, TaskMismatchError
from core.trace import ErrorClass, ErrorEvent, ExecutionTrace, Outcome, TaskFixture, ToolInvocation
from evaluation.metrics import (
    Classification,
    TaskOutcome,
    aggregate,
    classify_task,
    is_subsequence,
    longest_in_order_match,
    task_performance_score,
)


def subsequence_oracle(reference, actual):
    # table[i][j]: reference[:i] is a subsequence of actual[:j]
    table = [[i == 0 for _ in range(len(actual) + 1)] for i in range(len(reference) + 1)]
    for i in range(1, len(reference) + 1):
        for j in range(1, len(actual) + 1):
            table[i][j] = table[i][j - 1] or (table[i - 1][j - 1] and reference[i - 1] == actual[j - 1])
    return table[-1][-1]


def fixture(reference, task_id="t1"):
    candidates = tuple(dict.fromkeys(list(reference) + ["a", "b", "x"]))
    return TaskFixture(task_id, ("do it",), candidates, tuple(reference), "done")


def trace(invoked, errors=(), task_id="t1"):
    return ExecutionTrace(
        task_id,
        invoked=[ToolInvocation(name, {}, Outcome.OK) for name in invoked],
        error_events=[ErrorEvent(ErrorClass(e)) for e in errors],
        final_answer="done",
    )


def outcome(label, task_id="t"):
    return TaskOutcome(task_id, label, 0, 0, 0, 1.0 if label == "completed" else 0.0)


# ── Subsequence ──────────────────────────────────────────────────────────────

@pytest.mark.parametrize("reference, actual, expected", [
    (["a", "b"], ["a", "x", "b"], True),
    (["a", "b"], ["b", "a"], False),
    ([], [], True),
    ([], ["a"], True),
    (["a"], [], False),
    (["a", "a"], ["a"], False),
])
def test_subsequence_examples(reference, actual, expected):
    assert is_subsequence(reference, actual) is expected


def test_subsequence_agrees_with_dynamic_programming():
    rng = random.Random(7)
    alphabet = "abcdefgh"
    for _ in range(1000):
        reference = [rng.choice(alphabet) for _ in range(rng.randint(0, 12))]
        actual = [rng.choice(alphabet) for _ in range(rng.randint(0, 12))]
        assert is_subsequence(reference, actual) == subsequence_oracle(reference, actual)


def test_longest_match_is_full_exactly_for_subsequences():
    rng = random.Random(11)
    for _ in range(300):
        reference = [rng.choice("abcd") for _ in range(rng.randint(0, 5))]
        actual = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        full = longest_in_order_match(reference, actual) == len(reference)
        assert full == is_subsequence(reference, actual)


# ── Classification ───────────────────────────────────────────────────────────

def test_exact_match_completes():
    result = classify_task(fixture(["a"]), trace(["a"]))
    assert result.classification is Classification.COMPLETED
    assert (result.c_count, result.w_count, result.m_count) == (1, 0, 0)
    assert result.tps == 1.0


def test_wrong_tool_leaves_task_incomplete():
    result = classify_task(fixture(["a", "b"]), trace(["a", "x"]))
    assert result.classification is Classification.INCOMPLETE
    assert (result.c_count, result.w_count, result.m_count) == (1, 1, 1)
    assert result.tps == pytest.approx(1 / 3)


def test_extra_tools_still_complete():
    result = classify_task(fixture(["a", "b"]), trace(["a", "x", "b"]))
    assert result.classification is Classification.COMPLETED
    assert (result.c_count, result.w_count, result.m_count) == (2, 1, 0)


def test_nothing_invoked_is_a_failure():
    assert classify_task(fixture(["a"]), trace([])).classification is Classification.FAILED


def test_an_error_event_takes_precedence():
    result = classify_task(fixture(["a"]), trace(["a"], errors=["recursion_limit"]))
    assert result.classification is Classification.FAILED


def test_nothing_required_and_nothing_done_is_flagged():
    result = classify_task(fixture([]), trace([], errors=["provider_error"]))
    assert result.degenerate and result.tps == 1.0


def test_trace_must_belong_to_the_fixture():
    with pytest.raises(TaskMismatchError):
        classify_task(fixture(["a"], task_id="t1"), trace(["a"], task_id="t2"))


# ── Performance score ────────────────────────────────────────────────────────

@pytest.mark.parametrize("c, w, m, expected", [
    (1, 0, 0, 1.0),
    (2, 1, 1, 0.5),
    (0, 2, 1, 0.0),
    (0, 0, 0, 1.0),
])
def test_performance_score(c, w, m, expected):
    assert task_performance_score(c, w, m) == expected


def test_performance_score_weights():
    assert task_performance_score(2, 1, 1, lambda_w=2.0, lambda_m=0.0) == 0.5


def test_performance_score_stays_in_unit_interval():
    rng = random.Random(3)
    for _ in range(500):
        c, w, m = rng.randint(0, 9), rng.randint(0, 9), rng.randint(0, 9)
        assert 0.0 <= task_performance_score(c, w, m, rng.uniform(0.1, 3), rng.uniform(0.1, 3)) <= 1.0


# ── Aggregation ──────────────────────────────────────────────────────────────

@pytest.mark.parametrize("counts, fractions", [
    ((481, 28, 341), (0.5659, 0.0329, 0.4012)),
    ((650, 64, 136), (0.7647, 0.0753, 0.1600)),
])
def test_partition_over_a_large_suite(counts, fractions):
    labels = ["completed"] * counts[0] + ["failed"] * counts[1] + ["incomplete"] * counts[2]
    report = aggregate([outcome(label, f"t{i}") for i, label in enumerate(labels)])
    assert report.n_tasks == 850
    assert report.partition_sum == 1.0
    assert report.tcr + report.tfr + report.tir == pytest.approx(1.0, abs=1e-9)
    for rate, expected in zip((report.tcr, report.tfr, report.tir), fractions):
        assert abs(rate - expected) < 5e-4


def test_all_completed():
    report = aggregate([outcome("completed", f"t{i}") for i in range(4)])
    assert (report.tcr, report.tfr, report.tir, report.tps_avg) == (1.0, 0.0, 0.0, 1.0)


def test_single_tool_suites_score_their_completion_rate():
    cases = [(["a"], ["a"]), (["a"], []), (["b"], ["x"]), (["b"], ["b"]), (["a"], ["a"])]
    outcomes = [classify_task(fixture(r, f"t{i}"), trace(l, task_id=f"t{i}")) for i, (r, l) in enumerate(cases)]
    report = aggregate(outcomes)
    assert report.tcr == 0.6
    assert abs(report.tps_avg - report.tcr) < 1e-12


def test_aggregate_carries_tokens_and_variant():
    report = aggregate([outcome("completed")], token_totals=(120, 30), variant="Full")
    rec = report.to_record()
    assert (rec["input_tokens_total"], rec["output_tokens_total"], rec["variant"]) == (120, 30, "Full")
    assert rec["crcff"] == {} and rec["n_judged"] == 0


def test_aggregate_needs_outcomes():
    with pytest.raises(EmptyInputError):
        aggregate([])
