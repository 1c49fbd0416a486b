# evaluation/report.py
import json
import logging
from pathlib import Path

import pandas as pd

from core.store import REPORT_DIR, save_traces
from evaluation.ablation import VariantRun
from evaluation.metrics import CRCFF_DIMENSIONS

logger = logging.getLogger(__name__)


def ensure_dir(report_dir) -> Path:
    path = Path(report_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def task_rows(run: VariantRun) -> list[dict]:
    rows = []
    for outcome, score, trace in zip(run.outcomes, run.scores, run.traces):
        row = {
            "task_id": outcome.task_id,
            "classification": outcome.classification.value,
            "c_count": outcome.c_count,
            "w_count": outcome.w_count,
            "m_count": outcome.m_count,
            "tps": outcome.tps,
            "input_tokens": trace.input_tokens,
            "output_tokens": trace.output_tokens,
            "judged": score is not None,
        }
        for dim in CRCFF_DIMENSIONS:
            row[dim] = getattr(score, dim) if score is not None else None
        rows.append(row)
    return rows


def outcome_table(run: VariantRun) -> pd.DataFrame:
    df = pd.DataFrame(task_rows(run))
    df["classification"] = df["classification"].astype("category")
    return df


def save_report(run: VariantRun, report_dir=REPORT_DIR) -> Path:
    path = ensure_dir(report_dir) / f"report_{run.slug}.json"
    rec = run.report.to_record()
    rec["tasks"] = task_rows(run)
    path.write_text(json.dumps(rec, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    logger.info("Saved %s report to %s", run.label, path)
    return path


def save_outcomes(run: VariantRun, report_dir=REPORT_DIR) -> Path:
    path = ensure_dir(report_dir) / f"outcomes_{run.slug}.parquet"
    df = outcome_table(run)
    df.to_parquet(path, index=False)
    logger.info("Saved %d outcome rows to %s", len(df), path)
    return path


def comparison_table(runs: dict[str, VariantRun]) -> str:
    """Markdown table with one row per variant, execution metrics then CRCFF then tokens."""
    header = ["Variant", "TCR", "TFR", "TIR", "TPS", *[d.capitalize() for d in CRCFF_DIMENSIONS],
              "Input tokens", "Output tokens"]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for label, run in runs.items():
        r = run.report
        quality = [f"{r.crcff[d]:.4f}" if r.crcff else "n/a" for d in CRCFF_DIMENSIONS]
        cells = [label, f"{r.tcr:.4f}", f"{r.tfr:.4f}", f"{r.tir:.4f}", f"{r.tps_avg:.4f}", *quality,
                 str(r.input_tokens_total), str(r.output_tokens_total)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def save_comparison(runs: dict[str, VariantRun], report_dir=REPORT_DIR) -> Path:
    path = ensure_dir(report_dir) / "comparison.md"
    n = next(iter(runs.values())).report.n_tasks if runs else 0
    body = f"# Ablation comparison\n\n{n} tasks per variant.\n\n" + comparison_table(runs)
    path.write_text(body, encoding="utf-8")
    logger.info("Saved comparison of %d variants to %s", len(runs), path)
    return path


def save_all(runs: dict[str, VariantRun], report_dir=REPORT_DIR) -> list[Path]:
    """Traces first, so a failure while scoring or writing tables never loses a run."""
    report_dir = ensure_dir(report_dir)
    paths = []
    for run in runs.values():
        paths.append(save_traces(list(run.traces), report_dir / f"traces_{run.slug}.jsonl"))
        paths.append(save_report(run, report_dir))
        paths.append(save_outcomes(run, report_dir))
    paths.append(save_comparison(runs, report_dir))
    return paths
