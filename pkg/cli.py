# cli.py
"""
Command-line entry point.

    python cli.py run [--fixture PATH | --query TEXT] [--ablation base|bp|bpt|full]
    python cli.py eval [--fixtures PATH] [--variants base,bp,bpt,full] [--report-dir DIR]
    python cli.py inspect TRACE_FILE
    python cli.py tools list | tools validate

Exit codes: 0 ok, 2 usage, 3 config, 4 fixtures, 5 provider setup,
6 malformed trace, 7 tool registry.
"""
import json
import logging
import os
from contextlib import contextmanager
from pathlib import Path

import click
from dotenv import load_dotenv

from agent.engine import VARIANTS, AblationFlags, run_task
from agent.providers import MODEL_KEY_ENV, MODEL_URL_ENV, build_providers
from core.errors import (
    ConfigError,
    DuplicateToolError,
    FixtureError,
    InvalidSchemaError,
    InvariantViolationError,
    MalformedRecordError,
    ProviderError,
)
from core.store import DEMO_FIXTURE, SUITE_FIXTURES, TRACE_DIR, load_fixtures, load_traces, save_traces
from core.trace import ExecutionTrace, Role, TaskFixture
from evaluation.ablation import run_ablation
from evaluation.judge import RemoteJudge, StubJudge
from evaluation.report import comparison_table, save_all
from settings import load_settings, parse_assignment
from tools.host import list_tools, load_registry
from tools.schema import ToolFailure
from tools.wire import SocketTransport

EXIT_CONFIG = 3
EXIT_FIXTURE = 4
EXIT_PROVIDER = 5
EXIT_TRACE = 6
EXIT_REGISTRY = 7


@contextmanager
def exit_on(code: int, *exc_types):
    """Turn the given exceptions into a one-line error and a distinct exit status."""
    try:
        yield
    except exc_types as exc:
        click.echo(f"error: {exc}", err=True)
        click.get_current_context().exit(code)


def setup_providers(settings):
    with exit_on(EXIT_CONFIG, ConfigError):
        with exit_on(EXIT_PROVIDER, ProviderError):
            with exit_on(EXIT_REGISTRY, InvalidSchemaError, DuplicateToolError, MalformedRecordError,
                         InvariantViolationError, FileNotFoundError):
                return build_providers(settings)


def variant_overrides(code: str | None) -> dict:
    if code is None:
        return {}
    flags = VARIANTS[code]
    return {
        "engine.ablation.prompt": flags.adaptive_prompt,
        "engine.ablation.retrieval": flags.tool_retrieval,
        "engine.ablation.memory": flags.memory_management,
    }


@click.group(invoke_without_command=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML config file layered over the defaults.")
@click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE",
              help="Override one config key, e.g. --set retrieval.top_m=30.")
@click.option("--show-config", is_flag=True, help="Print the resolved config as YAML and exit.")
@click.option("-v", "--verbose", count=True, help="-v for debug logging.")
@click.pass_context
def cli(ctx, config_path, assignments, show_config, verbose):
    load_dotenv()
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="[%(name)s] %(message)s")
    with exit_on(EXIT_CONFIG, ConfigError):
        overrides = dict(parse_assignment(a) for a in assignments)
        ctx.obj = load_settings(config_path, overrides=overrides)
    if show_config:
        click.echo(ctx.obj.to_yaml(), nl=False)
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


# ── run ──────────────────────────────────────────────────────────────────────

@cli.command()
@click.option("--fixture", "fixture_path", type=click.Path(dir_okay=False), default=None,
              help="Fixture file; defaults to the bundled demo fixture.")
@click.option("--task", "task_id", default=None, help="task_id to run; defaults to the first fixture.")
@click.option("--query", default=None, help="Run a single inline query against the whole registry.")
@click.option("--ablation", type=click.Choice(list(VARIANTS)), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Trace file to write.")
@click.pass_obj
def run(settings, fixture_path, task_id, query, ablation, out_path):
    """Run one task and write its trace."""
    with exit_on(EXIT_CONFIG, ConfigError):
        settings = settings.with_overrides(variant_overrides(ablation))
        cfg = settings.engine_config()
    providers = setup_providers(settings)

    if query is not None:
        fixture = TaskFixture("inline", (query,), tuple(providers.host.names()), (), "")
    else:
        with exit_on(EXIT_FIXTURE, FileNotFoundError, FixtureError, MalformedRecordError):
            fixtures = load_fixtures(fixture_path or DEMO_FIXTURE)
        matches = [f for f in fixtures if task_id in (None, f.task_id)]
        if not matches:
            click.echo(f"error: no fixture {task_id or ''} in {fixture_path or DEMO_FIXTURE}".strip(), err=True)
            click.get_current_context().exit(EXIT_FIXTURE)
        fixture = matches[0]

    trace, _ = run_task(fixture, cfg, providers)
    path = Path(out_path) if out_path else TRACE_DIR / f"{trace.task_id}_{trace.variant.lower().replace('-', '')}.jsonl"
    save_traces([trace], path)
    click.echo(f"{trace.task_id} [{trace.variant}] tools={trace.tool_sequence} "
               f"errors={len(trace.error_events)} input_tokens={trace.input_tokens} "
               f"output_tokens={trace.output_tokens}")
    if trace.final_answer is not None:
        click.echo(f"answer: {trace.final_answer}")
    click.echo(f"trace written to {path}")


# ── eval ─────────────────────────────────────────────────────────────────────

@cli.command("eval")
@click.option("--fixtures", "fixtures_path", type=click.Path(dir_okay=False), default=str(SUITE_FIXTURES),
              show_default=True)
@click.option("--variants", default="base,bp,bpt,full", show_default=True)
@click.option("--lambda-w", type=float, default=None)
@click.option("--lambda-m", type=float, default=None)
@click.option("--judge", type=click.Choice(["stub", "remote"]), default=None)
@click.option("--report-dir", type=click.Path(file_okay=False), default=None)
@click.option("--jobs", type=click.IntRange(min=1), default=None)
@click.pass_obj
def evaluate(settings, fixtures_path, variants, lambda_w, lambda_m, judge, report_dir, jobs):
    """Evaluate a fixture set under ablation variants and write reports."""
    with exit_on(EXIT_CONFIG, ConfigError):
        settings = settings.with_overrides({
            "eval.lambda_w": lambda_w, "eval.lambda_m": lambda_m, "eval.judge": judge,
            "eval.report_dir": report_dir, "eval.jobs": jobs,
        })
        flags = [AblationFlags.from_code(code) for code in variants.split(",") if code.strip()]
        cfg = settings.engine_config()
        if float(settings.get("eval.lambda_w")) <= 0 or float(settings.get("eval.lambda_m")) <= 0:
            raise ConfigError("lambda weights must be positive")

    # fail fast on any invalid fixture before running anything
    with exit_on(EXIT_FIXTURE, FileNotFoundError, FixtureError, MalformedRecordError):
        fixtures = load_fixtures(fixtures_path)
        if not fixtures:
            raise FixtureError({"<file>": f"{fixtures_path} holds no fixtures"})

    setup_providers(settings)
    judge_name = settings.get("eval.judge")
    if judge_name == "remote":
        url = os.getenv(MODEL_URL_ENV)
        if not url:
            click.echo(f"error: --judge remote needs {MODEL_URL_ENV}", err=True)
            click.get_current_context().exit(EXIT_PROVIDER)
        scorer = RemoteJudge(url, os.getenv(MODEL_KEY_ENV), str(settings.get("model.name")))
    else:
        scorer = StubJudge()

    runs = run_ablation(
        fixtures, flags, lambda: build_providers(settings), cfg, scorer,
        jobs=int(settings.get("eval.jobs")),
        lambda_w=float(settings.get("eval.lambda_w")),
        lambda_m=float(settings.get("eval.lambda_m")),
    )
    save_all(runs, settings.get("eval.report_dir"))
    click.echo(comparison_table(runs), nl=False)
    for label, variant_run in runs.items():
        click.echo(f"{label}: partition {variant_run.report.partition_sum:.9f}")


# ── inspect ──────────────────────────────────────────────────────────────────

def trace_status(trace: ExecutionTrace) -> str:
    if trace.error_events:
        return "FAILED (" + ", ".join(dict.fromkeys(e.error_class.value for e in trace.error_events)) + ")"
    if not trace.invoked:
        return "NO TOOL CALLS"
    return "OK"


def render_trace(trace: ExecutionTrace) -> str:
    lines = [f"== {trace.task_id} [{trace.variant or 'unknown'}] {trace_status(trace)}",
             f"tokens: input {trace.input_tokens}, output {trace.output_tokens}"]
    lines.append("steps:" if trace.invoked else "steps: none")
    for i, inv in enumerate(trace.invoked, start=1):
        lines.append(f"  {i}. {inv.tool_name} {json.dumps(inv.arguments, sort_keys=True, ensure_ascii=False)}"
                     f" -> {inv.outcome.value}")
    if trace.error_events:
        lines.append("errors:")
        lines += [f"  - {e.error_class.value}: {e.detail}" for e in trace.error_events]
    if trace.messages:
        lines.append("transcript:")
        for pos, msg in enumerate(trace.messages):
            calls = ", ".join(c.tool_name for c in msg.tool_calls)
            head = f"  [{pos}] {msg.role.value}"
            if msg.role is Role.TOOL:
                head += f" ({msg.tool_call_id})"
            if calls:
                head += f" calls {calls}"
            text = " ".join(msg.content.split())
            text = text if len(text) <= 80 else text[:77] + "..."
            lines.append(f"{head}: {text}" + ("  [repaired]" if msg.synthetic else ""))
    lines.append(f"answer: {trace.final_answer if trace.final_answer is not None else '(none)'}")
    return "\n".join(lines)


@cli.command()
@click.argument("trace_path", type=click.Path(dir_okay=False))
def inspect(trace_path):
    """Render a trace file step by step."""
    with exit_on(EXIT_TRACE, FileNotFoundError, MalformedRecordError, InvariantViolationError):
        traces = load_traces(trace_path)
    click.echo("\n\n".join(render_trace(t) for t in traces))


# ── tools ────────────────────────────────────────────────────────────────────

@cli.group()
def tools():
    """Inspect the tool registry."""


@tools.command("list")
@click.option("--registry", "registry_path", type=click.Path(dir_okay=False), default=None)
@click.option("--server", default=None, help="host:port of a running tool server to list instead.")
@click.pass_obj
def tools_list(settings, registry_path, server):
    """List registered tools in registration order."""
    if server:
        address, _, port = server.rpartition(":")
        if not port.isdigit():
            raise click.BadParameter("expected host:port", param_hint="--server")
        with exit_on(EXIT_PROVIDER, ToolFailure):
            schemas = list_tools(SocketTransport(address or "127.0.0.1", int(port)))
    else:
        with exit_on(EXIT_REGISTRY, InvalidSchemaError, DuplicateToolError, MalformedRecordError,
                     InvariantViolationError, FileNotFoundError):
            schemas = load_registry(registry_path or settings.get("registry.path")).list_tools()
    for schema in schemas:
        flag = " [expensive]" if schema.is_expensive else ""
        click.echo(f"{schema.tool_name:<24} {schema.category.value:<22} {schema.signature()}{flag}")


@tools.command("validate")
@click.option("--registry", "registry_path", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def tools_validate(settings, registry_path):
    """Check every registry record against the schema rules."""
    path = registry_path or settings.get("registry.path")
    with exit_on(EXIT_REGISTRY, InvalidSchemaError, DuplicateToolError, MalformedRecordError,
                 InvariantViolationError, FileNotFoundError):
        host = load_registry(path)
    click.echo(f"{len(host)} tools OK in {path}")


if __name__ == "__main__":
    cli()
