# evaluation/metrics.py
"""
Execution-fidelity metrics over tool traces.

A task is *failed* when it invoked nothing or hit an error, otherwise
*completed* when the reference tools occur in order within the invoked
sequence, otherwise *incomplete*. The performance score weighs correct,
wrong and missing tools: C / (C + lw*W + lm*M).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable, Mapping, Sequence

from core.errors import EmptyInputError, TaskMismatchError
from core.trace import ExecutionTrace, TaskFixture

CRCFF_DIMENSIONS = ("correctness", "relevance", "completeness", "fluency", "faithfulness")


class Classification(str, Enum):
    COMPLETED = "completed"
    FAILED = "failed"
    INCOMPLETE = "incomplete"


@dataclass(frozen=True)
class TaskOutcome:
    task_id: str
    classification: Classification
    c_count: int
    w_count: int
    m_count: int
    tps: float
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "classification", Classification(self.classification))
        if min(self.c_count, self.w_count, self.m_count) < 0:
            raise ValueError("C, W and M are nonnegative")


def is_subsequence(reference: Sequence[Hashable], actual: Sequence[Hashable]) -> bool:
    """True iff ``reference`` occurs in ``actual`` in order, gaps allowed."""
    it = iter(actual)
    return all(any(item == seen for seen in it) for item in reference)


def longest_in_order_match(reference: Sequence[Hashable], actual: Sequence[Hashable]) -> int:
    """Length of the longest common subsequence of the two tool lists."""
    if not reference or not actual:
        return 0
    prev = [0] * (len(actual) + 1)
    for r in reference:
        row = [0]
        for j, a in enumerate(actual, start=1):
            row.append(prev[j - 1] + 1 if r == a else max(prev[j], row[j - 1]))
        prev = row
    return prev[-1]


def task_performance_score(c: int, w: int, m: int, lambda_w: float = 1.0, lambda_m: float = 1.0) -> float:
    denominator = c + lambda_w * w + lambda_m * m
    if denominator == 0:
        # nothing required and nothing done
        return 1.0
    return c / denominator


def classify_task(
    fixture: TaskFixture,
    trace: ExecutionTrace,
    lambda_w: float = 1.0,
    lambda_m: float = 1.0,
) -> TaskOutcome:
    if fixture.task_id != trace.task_id:
        raise TaskMismatchError(f"trace {trace.task_id!r} does not belong to fixture {fixture.task_id!r}")
    reference = list(fixture.reference_sequence)
    actual = trace.tool_sequence
    if not actual or trace.error_events:
        label = Classification.FAILED
    elif is_subsequence(reference, actual):
        label = Classification.COMPLETED
    else:
        label = Classification.INCOMPLETE
    c = longest_in_order_match(reference, actual)
    w, m = len(actual) - c, len(reference) - c
    return TaskOutcome(
        task_id=fixture.task_id,
        classification=label,
        c_count=c,
        w_count=w,
        m_count=m,
        tps=task_performance_score(c, w, m, lambda_w, lambda_m),
        degenerate=c + w + m == 0,
    )


# ── Aggregation ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MetricsReport:
    n_tasks: int
    counts: Mapping[str, int]
    tcr: float
    tfr: float
    tir: float
    tps_avg: float
    lambda_w: float = 1.0
    lambda_m: float = 1.0
    crcff: Mapping[str, float] = field(default_factory=dict)
    n_judged: int = 0
    input_tokens_total: int = 0
    output_tokens_total: int = 0
    degenerate_tasks: tuple[str, ...] = ()
    variant: str | None = None

    @property
    def partition_sum(self) -> float:
        """Sum of the three rates, computed from the integer counts."""
        return sum(self.counts.values()) / self.n_tasks

    def to_record(self) -> dict:
        return {
            "variant": self.variant,
            "n_tasks": self.n_tasks,
            "counts": dict(self.counts),
            "tcr": self.tcr,
            "tfr": self.tfr,
            "tir": self.tir,
            "tps_avg": self.tps_avg,
            "lambda_w": self.lambda_w,
            "lambda_m": self.lambda_m,
            "crcff": dict(self.crcff),
            "n_judged": self.n_judged,
            "input_tokens_total": self.input_tokens_total,
            "output_tokens_total": self.output_tokens_total,
            "partition_sum": self.partition_sum,
            "degenerate_tasks": list(self.degenerate_tasks),
        }


def aggregate(
    outcomes: Sequence[TaskOutcome],
    judge_scores: Sequence | None = None,
    token_totals: tuple[int, int] = (0, 0),
    lambda_w: float = 1.0,
    lambda_m: float = 1.0,
    variant: str | None = None,
) -> MetricsReport:
    """
    Fold per-task outcomes into one report. ``judge_scores`` holds one
    JudgeScore (or None for unjudged tasks) per outcome; CRCFF values are the
    judged means divided by 10.
    """
    if not outcomes:
        raise EmptyInputError("aggregate needs at least one task outcome")
    n = len(outcomes)
    counts = {c.value: 0 for c in Classification}
    for outcome in outcomes:
        counts[outcome.classification.value] += 1
    judged = [s for s in (judge_scores or ()) if s is not None]
    crcff = {}
    if judged:
        crcff = {dim: math.fsum(getattr(s, dim) for s in judged) / len(judged) / 10 for dim in CRCFF_DIMENSIONS}
    return MetricsReport(
        n_tasks=n,
        counts=counts,
        tcr=counts[Classification.COMPLETED.value] / n,
        tfr=counts[Classification.FAILED.value] / n,
        tir=counts[Classification.INCOMPLETE.value] / n,
        tps_avg=math.fsum(o.tps for o in outcomes) / n,
        lambda_w=lambda_w,
        lambda_m=lambda_m,
        crcff=crcff,
        n_judged=len(judged),
        input_tokens_total=int(token_totals[0]),
        output_tokens_total=int(token_totals[1]),
        degenerate_tasks=tuple(o.task_id for o in outcomes if o.degenerate),
        variant=variant,
    )
