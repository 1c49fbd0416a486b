# evaluation/ablation.py
"""Run fixture sets under ablation variants and score them."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from tqdm import tqdm

from agent.engine import AblationFlags, EngineConfig, run_task
from agent.providers import Providers
from core.errors import AgentLoopError, EmptyInputError
from core.trace import ErrorClass, ErrorEvent, ExecutionTrace, TaskFixture
from evaluation.judge import Judge, JudgeContext, JudgeScore, StubJudge, judge_crcff
from evaluation.metrics import MetricsReport, TaskOutcome, aggregate, classify_task

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariantRun:
    label: str
    traces: tuple[ExecutionTrace, ...]
    outcomes: tuple[TaskOutcome, ...]
    scores: tuple[JudgeScore | None, ...]
    report: MetricsReport

    @property
    def slug(self) -> str:
        return self.label.lower().replace("-", "")


def _run_one(fixture: TaskFixture, cfg: EngineConfig, providers: Providers) -> ExecutionTrace:
    try:
        trace, _ = run_task(fixture, cfg, providers)
        return trace
    except AgentLoopError as exc:
        logger.warning("%s aborted: %s", fixture.task_id, exc)
        return ExecutionTrace(
            fixture.task_id,
            error_events=(ErrorEvent(ErrorClass.PROVIDER_ERROR, str(exc)),),
            variant=cfg.ablation.label,
        )


def score_traces(
    fixtures: Sequence[TaskFixture],
    traces: Sequence[ExecutionTrace],
    judge: Judge,
    lambda_w: float = 1.0,
    lambda_m: float = 1.0,
    label: str | None = None,
) -> VariantRun:
    """Classify and judge already recorded traces, paired with fixtures by position."""
    outcomes = tuple(classify_task(f, t, lambda_w, lambda_m) for f, t in zip(fixtures, traces, strict=True))
    scores = tuple(
        judge_crcff(t.final_answer, f.reference_answer, JudgeContext(" ".join(f.turns), f.task_id), judge)
        for f, t in zip(fixtures, traces)
    )
    totals = (sum(t.input_tokens for t in traces), sum(t.output_tokens for t in traces))
    label = label or (traces[0].variant if traces and traces[0].variant else "run")
    report = aggregate(outcomes, scores, totals, lambda_w, lambda_m, variant=label)
    return VariantRun(label, tuple(traces), outcomes, scores, report)


def evaluate_variant(
    fixtures: Sequence[TaskFixture],
    cfg: EngineConfig,
    providers: Providers,
    judge: Judge | None = None,
    jobs: int = 1,
    lambda_w: float = 1.0,
    lambda_m: float = 1.0,
) -> VariantRun:
    if not fixtures:
        raise EmptyInputError("no fixtures to evaluate")
    providers.prepare(fixtures)
    label = cfg.ablation.label
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        traces = list(tqdm(
            pool.map(lambda f: _run_one(f, cfg, providers), fixtures),
            total=len(fixtures), desc=label, disable=None,
        ))
    run = score_traces(fixtures, traces, judge or StubJudge(), lambda_w, lambda_m, label)
    logger.info("%s: TCR %.4f  TFR %.4f  TIR %.4f  TPS %.4f  input tokens %d", label,
                run.report.tcr, run.report.tfr, run.report.tir, run.report.tps_avg, run.report.input_tokens_total)
    return run


def run_ablation(
    fixtures: Sequence[TaskFixture],
    variants: Sequence[AblationFlags],
    providers_factory: Callable[[], Providers],
    cfg: EngineConfig,
    judge: Judge | None = None,
    jobs: int = 1,
    lambda_w: float = 1.0,
    lambda_m: float = 1.0,
) -> dict[str, VariantRun]:
    """
    Evaluate each variant on the same fixtures with freshly built providers,
    so no state carries over between variants. Keys are variant labels in
    request order.
    """
    if not fixtures:
        raise EmptyInputError("no fixtures to evaluate")
    runs = {}
    for flags in variants:
        variant_cfg = replace(cfg, ablation=flags)
        runs[flags.label] = evaluate_variant(
            fixtures, variant_cfg, providers_factory(), judge, jobs, lambda_w, lambda_m
        )
    return runs
