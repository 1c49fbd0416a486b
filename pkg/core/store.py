# core/store.py
import logging
from pathlib import Path

from core.errors import FixtureError, InvariantViolationError, MalformedRecordError
from core.trace import (
    FIXTURE_KEYS,
    ExecutionTrace,
    TaskFixture,
    iter_records,
    parse_traces,
    serialize_trace,
)

logger = logging.getLogger(__name__)

PROJECT_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = PROJECT_DIR / "data"
FIXTURE_DIR = DATA_DIR / "fixtures"
TEMPLATE_DIR = DATA_DIR / "templates"
TRACE_DIR = Path("runs/traces")
REPORT_DIR = Path("runs/reports")

DEFAULT_PROFILE = DATA_DIR / "profile.yaml"
DEFAULT_REGISTRY = DATA_DIR / "registry.jsonl"
DEFAULT_CONFIG = DATA_DIR / "config.yaml"
DEMO_FIXTURE = FIXTURE_DIR / "demo.jsonl"
SUITE_FIXTURES = FIXTURE_DIR / "suite.jsonl"


def read_bytes(path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found or not a readable file.")
    return path.read_bytes()


def read_records(path) -> list[tuple[int, dict]]:
    """All (byte offset, record) pairs of a newline-delimited JSON file."""
    return list(iter_records(read_bytes(path)))


def load_fixtures(path) -> list[TaskFixture]:
    """
    Load benchmark fixtures in file order. Every invalid fixture is collected
    first so the raised FixtureError names all offending task_ids at once.
    """
    fixtures, problems = [], {}
    for offset, rec in read_records(path):
        task_id = str(rec.get("task_id", f"<record at byte {offset}>"))
        missing = [k for k in FIXTURE_KEYS if k not in rec]
        if missing:
            problems[task_id] = f"missing keys: {', '.join(missing)}"
            continue
        try:
            fixtures.append(TaskFixture.from_record(rec))
        except (InvariantViolationError, TypeError, ValueError) as exc:
            problems[task_id] = str(exc)
    if problems:
        raise FixtureError(problems)
    logger.info("Loaded %d fixtures from %s", len(fixtures), path)
    return fixtures


def save_traces(traces: list[ExecutionTrace], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(serialize_trace(t) for t in traces))
    logger.info("Saved %d traces to %s", len(traces), path)
    return path


def load_traces(path) -> list[ExecutionTrace]:
    data = read_bytes(path)
    if not data.strip():
        raise MalformedRecordError("empty trace file", 0)
    return parse_traces(data)
