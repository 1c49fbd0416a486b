# tools/host.py
"""
Tool registry, argument validation and dispatch.

Dispatch goes through a transport: ``LocalTransport`` runs executors in
process, ``tools.wire.SocketTransport`` talks to the mock tool server. Either
way ``invoke`` only accepts a ``ValidatedCall``, which nothing but
``validate_arguments`` can construct.
"""
from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import jsonschema

from agent.tokens import count_tokens
from core.errors import DuplicateToolError, InvalidSchemaError
from core.store import DEFAULT_REGISTRY, read_records
from core.trace import ErrorClass, Outcome
from tools.mocks import EXECUTORS, noise_tools
from tools.schema import ToolFailure, ToolSchema, TransientNetworkFailure

logger = logging.getLogger(__name__)

Executor = Callable[[dict], str]


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    status: Outcome
    content: str = ""
    error_class: ErrorClass | None = None
    duration: float = field(default=0.0, compare=False)
    content_tokens: int = 0

    def __post_init__(self):
        object.__setattr__(self, "status", Outcome(self.status))
        if self.error_class is not None:
            object.__setattr__(self, "error_class", ErrorClass(self.error_class))
        if self.status is Outcome.OK and self.error_class is not None:
            raise ValueError("ok results carry no error class")
        if self.status is Outcome.ERROR and self.error_class is None:
            raise ValueError("error results must be classified")

    @property
    def ok(self) -> bool:
        return self.status is Outcome.OK

    @classmethod
    def failure(cls, call_id: str, error_class: ErrorClass, detail: str, duration: float = 0.0) -> "ToolResult":
        return cls(call_id, Outcome.ERROR, detail, error_class, duration, count_tokens(detail))

    @classmethod
    def success(cls, call_id: str, content: str, duration: float = 0.0) -> "ToolResult":
        return cls(call_id, Outcome.OK, content, None, duration, count_tokens(content))


def classify_exception(exc: BaseException) -> ErrorClass:
    """Map any failure to exactly one ErrorClass."""
    if isinstance(exc, ToolFailure):
        return exc.error_class
    if isinstance(exc, TimeoutError):
        return ErrorClass.TIMEOUT
    if isinstance(exc, (ConnectionError, OSError)):
        return ErrorClass.TRANSIENT_NETWORK
    return ErrorClass.TOOL_CRASH


# ── Registry ─────────────────────────────────────────────────────────────────

@dataclass
class _Entry:
    schema: ToolSchema
    executor: Executor
    lock: threading.Lock | None


class ToolHost:
    def __init__(self):
        self._entries: dict[str, _Entry] = {}

    def register(self, schema: ToolSchema, executor: Executor, concurrency_safe: bool = True) -> "ToolHost":
        schema.validate()
        if schema.tool_name in self._entries:
            raise DuplicateToolError(f"tool {schema.tool_name!r} already registered")
        if not callable(executor):
            raise InvalidSchemaError(f"{schema.tool_name}: executor is not callable")
        lock = None if concurrency_safe else threading.Lock()
        self._entries[schema.tool_name] = _Entry(schema, executor, lock)
        return self

    def get(self, tool_name: str) -> ToolSchema | None:
        entry = self._entries.get(tool_name)
        return entry.schema if entry else None

    def names(self) -> list[str]:
        return list(self._entries)

    def list_tools(self) -> list[ToolSchema]:
        return [e.schema for e in self._entries.values()]

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, tool_name: str) -> bool:
        return tool_name in self._entries

    def execute(self, call_id: str, tool_name: str, arguments: dict) -> ToolResult:
        """Run an executor in process and classify whatever goes wrong."""
        entry = self._entries.get(tool_name)
        if entry is None:
            return ToolResult.failure(call_id, ErrorClass.TOOL_NOT_FOUND, f"unknown tool {tool_name!r}")
        start = time.perf_counter()
        try:
            if entry.lock is not None:
                with entry.lock:
                    content = entry.executor(dict(arguments))
            else:
                content = entry.executor(dict(arguments))
        except Exception as exc:  # every executor fault is classified, never re-raised
            error_class = classify_exception(exc)
            logger.warning("%s failed (%s): %s", tool_name, error_class.value, exc)
            return ToolResult.failure(call_id, error_class, f"{type(exc).__name__}: {exc}",
                                      time.perf_counter() - start)
        if not isinstance(content, str):
            return ToolResult.failure(call_id, ErrorClass.TOOL_CRASH, "executor returned non-text output",
                                      time.perf_counter() - start)
        return ToolResult.success(call_id, content, time.perf_counter() - start)

    def ensure_noise(self, n: int, seed: int = 0) -> list[str]:
        """Register ``n`` distractor tools once; returns their names."""
        names = []
        for schema in noise_tools(n, seed):
            if schema.tool_name not in self._entries:
                self.register(schema, EXECUTORS["noise"])
            names.append(schema.tool_name)
        return names


def load_registry(path=DEFAULT_REGISTRY, executors: dict[str, Executor] | None = None) -> ToolHost:
    executors = EXECUTORS if executors is None else executors
    host = ToolHost()
    for _, rec in read_records(path):
        schema = ToolSchema.from_record(rec)
        name = schema.metadata.get("executor", schema.tool_name)
        if name not in executors:
            raise InvalidSchemaError(f"{schema.tool_name}: no executor named {name!r}")
        host.register(schema, executors[name], bool(schema.metadata.get("concurrency_safe", True)))
    logger.info("Registered %d tools from %s", len(host), path)
    return host


# ── Validation ───────────────────────────────────────────────────────────────

_SEAL = object()


@dataclass(frozen=True)
class ValidatedCall:
    call_id: str
    schema: ToolSchema
    arguments: dict[str, Any]
    seal: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.seal is not _SEAL:
            raise TypeError("ValidatedCall is issued by validate_arguments only")

    @property
    def tool_name(self) -> str:
        return self.schema.tool_name


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str | None = None
    call: ValidatedCall | None = None


def validate_arguments(schema: ToolSchema, arguments: dict, call_id: str = "") -> Verdict:
    """
    Reject missing required parameters, constraint failures and unknown
    parameters; the reason names the first offender in canonical order
    (declared parameters first, then unknown names alphabetically).
    """
    for param in schema.parameters:
        if param.name not in arguments:
            if param.required:
                return Verdict(False, f"missing: {param.name}")
            continue
        try:
            jsonschema.validate(arguments[param.name], param.json_schema())
        except jsonschema.ValidationError as exc:
            return Verdict(False, f"invalid: {param.name} ({exc.message})")
    declared = {p.name for p in schema.parameters}
    unknown = sorted(k for k in arguments if k not in declared)
    if unknown:
        return Verdict(False, f"unknown: {unknown[0]}")
    return Verdict(True, None, ValidatedCall(call_id, schema, dict(arguments), _SEAL))


# ── Transports and dispatch ──────────────────────────────────────────────────

class Transport(Protocol):
    def list_tools(self) -> list[ToolSchema]: ...

    def call(self, call_id: str, tool_name: str, arguments: dict) -> ToolResult: ...


class LocalTransport:
    def __init__(self, host: ToolHost):
        self.host = host

    def list_tools(self) -> list[ToolSchema]:
        return self.host.list_tools()

    def call(self, call_id: str, tool_name: str, arguments: dict) -> ToolResult:
        return self.host.execute(call_id, tool_name, arguments)


def invoke(call: ValidatedCall, transport: Transport, confirmed: bool = False) -> ToolResult:
    """Dispatch a validated call; failures come back as error results, never as ok."""
    if not isinstance(call, ValidatedCall):
        raise TypeError("invoke requires a ValidatedCall from validate_arguments")
    if call.schema.is_expensive and not confirmed:
        return ToolResult.failure(
            call.call_id, ErrorClass.INVALID_ARGUMENTS,
            f"confirmation required: {call.schema.confirmation_prompt}",
        )
    start = time.perf_counter()
    try:
        return transport.call(call.call_id, call.tool_name, call.arguments)
    except Exception as exc:
        error_class = classify_exception(exc)
        logger.warning("transport failed for %s (%s): %s", call.tool_name, error_class.value, exc)
        return ToolResult.failure(call.call_id, error_class, f"{type(exc).__name__}: {exc}",
                                  time.perf_counter() - start)


def list_tools(transport: Transport) -> list[ToolSchema]:
    """Schemas in registration order; transport faults surface as ToolFailure(transient_network)."""
    try:
        return list(transport.list_tools())
    except (ConnectionError, OSError) as exc:
        raise TransientNetworkFailure(f"tools/list failed: {exc}") from exc
