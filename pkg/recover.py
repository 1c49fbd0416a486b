# recover.py
"""
Rebuild report files from traces saved by an earlier ``eval`` run, without
running any task again. Useful when scoring or table writing failed after the
traces were on disk, or to rescore with other lambda weights.
"""
import logging
from pathlib import Path

import click

from agent.engine import VARIANT_LABELS
from core.errors import AgentLoopError
from core.store import REPORT_DIR, SUITE_FIXTURES, load_fixtures, load_traces
from evaluation.ablation import score_traces
from evaluation.judge import StubJudge
from evaluation.report import save_comparison, save_outcomes, save_report

logger = logging.getLogger("recover")


def run_recovery(fixtures_path=SUITE_FIXTURES, report_dir=REPORT_DIR, lambda_w=1.0, lambda_m=1.0) -> dict:
    report_dir = Path(report_dir)
    fixtures = load_fixtures(fixtures_path)
    by_id = {f.task_id: f for f in fixtures}
    runs = {}
    for code, label in VARIANT_LABELS.items():
        path = report_dir / f"traces_{code}.jsonl"
        if not path.exists():
            continue
        logger.info("Loading %s traces from %s (skipping task execution)", label, path)
        traces = load_traces(path)
        unknown = [t.task_id for t in traces if t.task_id not in by_id]
        if unknown:
            raise AgentLoopError(f"{path} holds traces for unknown tasks: {', '.join(unknown)}")
        paired = [by_id[t.task_id] for t in traces]
        runs[label] = score_traces(paired, traces, StubJudge(), lambda_w, lambda_m, label)

    if not runs:
        raise FileNotFoundError(f"no traces_*.jsonl in {report_dir}. Run `python cli.py eval` first.")
    for run in runs.values():
        save_report(run, report_dir)
        save_outcomes(run, report_dir)
    save_comparison(runs, report_dir)
    logger.info("Recovery complete: %s", ", ".join(runs))
    return runs


@click.command()
@click.option("--fixtures", "fixtures_path", type=click.Path(dir_okay=False), default=str(SUITE_FIXTURES),
              show_default=True)
@click.option("--report-dir", type=click.Path(file_okay=False, path_type=Path), default=REPORT_DIR,
              show_default=True)
@click.option("--lambda-w", type=float, default=1.0, show_default=True)
@click.option("--lambda-m", type=float, default=1.0, show_default=True)
def main(fixtures_path, report_dir, lambda_w, lambda_m):
    logging.basicConfig(level=logging.INFO, format="[%(name)s] %(message)s")
    try:
        runs = run_recovery(fixtures_path, report_dir, lambda_w, lambda_m)
    except (AgentLoopError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc)) from exc
    for label, run in runs.items():
        click.echo(f"{label}: TCR {run.report.tcr:.4f}  TPS {run.report.tps_avg:.4f}")


if __name__ == "__main__":
    main()
