# core/trace.py
"""
Data model for dialogue messages, sessions, execution traces and benchmark
fixtures, plus the newline-delimited JSON record format used on disk.

Every type here is a frozen value. Sessions grow through ``Session.append``,
which returns a new session and re-checks the ordering invariants.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Iterator, Mapping

from core.errors import InvariantViolationError, MalformedRecordError


class Role(str, Enum):
    HUMAN = "human"
    AI = "ai"
    TOOL = "tool"
    SYSTEM = "system"


class Outcome(str, Enum):
    OK = "ok"
    ERROR = "error"


class ErrorClass(str, Enum):
    TRANSIENT_NETWORK = "transient_network"
    TIMEOUT = "timeout"
    INVALID_ARGUMENTS = "invalid_arguments"
    TOOL_NOT_FOUND = "tool_not_found"
    TOOL_CRASH = "tool_crash"
    PROVIDER_ERROR = "provider_error"
    RECURSION_LIMIT = "recursion_limit"


RETRYABLE_CLASSES = frozenset({ErrorClass.TRANSIENT_NETWORK, ErrorClass.TIMEOUT})


# ── Messages and sessions ────────────────────────────────────────────────────

@dataclass(frozen=True)
class ToolCallRequest:
    call_id: str
    tool_name: str
    arguments: dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"call_id": self.call_id, "tool_name": self.tool_name, "arguments": self.arguments}

    @classmethod
    def from_record(cls, rec: Mapping) -> "ToolCallRequest":
        return cls(str(rec["call_id"]), str(rec["tool_name"]), dict(rec.get("arguments") or {}))


@dataclass(frozen=True)
class Message:
    role: Role
    content: str = ""
    tool_calls: tuple[ToolCallRequest, ...] = ()
    tool_call_id: str | None = None
    token_count: int = 0
    synthetic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))
        if self.tool_calls and self.role is not Role.AI:
            raise InvariantViolationError("tool_calls only on ai messages", self.role.value)
        if (self.tool_call_id is not None) != (self.role is Role.TOOL):
            raise InvariantViolationError("tool_call_id present iff role is tool", self.role.value)
        if self.token_count < 0:
            raise InvariantViolationError("token_count >= 0", str(self.token_count))

    @property
    def calls_tools(self) -> bool:
        return self.role is Role.AI and bool(self.tool_calls)

    def to_record(self) -> dict:
        rec = {
            "role": self.role.value,
            "content": self.content,
            "token_count": self.token_count,
            "synthetic": self.synthetic,
        }
        if self.tool_calls:
            rec["tool_calls"] = [c.to_record() for c in self.tool_calls]
        if self.tool_call_id is not None:
            rec["tool_call_id"] = self.tool_call_id
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "Message":
        return cls(
            role=Role(rec["role"]),
            content=str(rec.get("content", "")),
            tool_calls=tuple(ToolCallRequest.from_record(c) for c in rec.get("tool_calls") or ()),
            tool_call_id=rec.get("tool_call_id"),
            token_count=int(rec.get("token_count", 0)),
            synthetic=bool(rec.get("synthetic", False)),
        )


def human(content: str, token_count: int = 0) -> Message:
    return Message(Role.HUMAN, content, token_count=token_count)


def ai(content: str, tool_calls: Iterable[ToolCallRequest] = (), token_count: int = 0) -> Message:
    return Message(Role.AI, content, tuple(tool_calls), token_count=token_count)


def tool(call_id: str, content: str, token_count: int = 0) -> Message:
    return Message(Role.TOOL, content, tool_call_id=call_id, token_count=token_count)


def system(content: str, token_count: int = 0) -> Message:
    return Message(Role.SYSTEM, content, token_count=token_count)


def check_message_order(messages: Iterable[Message]) -> None:
    """Raise InvariantViolationError if the sequence breaks a Session invariant."""
    seen_human = False
    known_calls: set[str] = set()
    for pos, msg in enumerate(messages):
        if msg.role is Role.HUMAN:
            seen_human = True
        elif msg.role in (Role.AI, Role.TOOL) and not seen_human:
            raise InvariantViolationError(
                "first human message precedes ai/tool messages", f"position {pos}"
            )
        if msg.role is Role.AI:
            for call in msg.tool_calls:
                # synthetic continuations may repeat an existing call_id
                if call.call_id in known_calls and not msg.synthetic:
                    raise InvariantViolationError("call_id unique within session", call.call_id)
                known_calls.add(call.call_id)
        elif msg.role is Role.TOOL and msg.tool_call_id not in known_calls:
            raise InvariantViolationError(
                "tool message answers a preceding call_id", f"unknown call_id {msg.tool_call_id!r}"
            )


@dataclass(frozen=True)
class Session:
    messages: tuple[Message, ...] = ()
    summary: str | None = None
    state: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        check_message_order(self.messages)

    def append(self, *messages: Message) -> "Session":
        return replace(self, messages=self.messages + tuple(messages))

    def with_messages(self, messages: Iterable[Message]) -> "Session":
        return replace(self, messages=tuple(messages))

    def human_indices(self) -> list[int]:
        return [i for i, m in enumerate(self.messages) if m.role is Role.HUMAN]

    def __len__(self) -> int:
        return len(self.messages)


# ── Traces ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ToolInvocation:
    tool_name: str
    arguments: dict[str, Any]
    outcome: Outcome

    def __post_init__(self):
        object.__setattr__(self, "outcome", Outcome(self.outcome))


@dataclass(frozen=True)
class ErrorEvent:
    error_class: ErrorClass
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "error_class", ErrorClass(self.error_class))


@dataclass(frozen=True)
class ExecutionTrace:
    task_id: str
    invoked: tuple[ToolInvocation, ...] = ()
    error_events: tuple[ErrorEvent, ...] = ()
    final_answer: str | None = None
    input_tokens: int = 0
    output_tokens: int = 0
    messages: tuple[Message, ...] = ()
    variant: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "invoked", tuple(self.invoked))
        object.__setattr__(self, "error_events", tuple(self.error_events))
        object.__setattr__(self, "messages", tuple(self.messages))
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise InvariantViolationError("token counters >= 0", self.task_id)
        check_message_order(self.messages)

    @property
    def tool_sequence(self) -> list[str]:
        return [inv.tool_name for inv in self.invoked]

    @property
    def failed_with(self) -> list[ErrorClass]:
        return [e.error_class for e in self.error_events]


class TraceRecorder:
    """Mutable accumulator the engine fills while a task runs; ``freeze`` yields the trace."""

    def __init__(self, task_id: str, variant: str | None = None):
        self.task_id = task_id
        self.variant = variant
        self.invoked: list[ToolInvocation] = []
        self.error_events: list[ErrorEvent] = []
        self.input_tokens = 0
        self.output_tokens = 0
        self.model_calls: list[tuple[int, int]] = []

    def add_model_call(self, prompt_tokens: int, completion_tokens: int) -> None:
        if prompt_tokens < 0 or completion_tokens < 0:
            raise InvariantViolationError("token counters monotonically accumulated")
        self.input_tokens += prompt_tokens
        self.output_tokens += completion_tokens
        self.model_calls.append((prompt_tokens, completion_tokens))

    def add_invocation(self, tool_name: str, arguments: dict, outcome: Outcome) -> None:
        self.invoked.append(ToolInvocation(tool_name, dict(arguments), outcome))

    def add_error(self, error_class: ErrorClass, detail: str) -> None:
        self.error_events.append(ErrorEvent(error_class, detail))

    def freeze(self, final_answer: str | None, session: Session | None = None) -> ExecutionTrace:
        return ExecutionTrace(
            task_id=self.task_id,
            invoked=tuple(self.invoked),
            error_events=tuple(self.error_events),
            final_answer=final_answer,
            input_tokens=self.input_tokens,
            output_tokens=self.output_tokens,
            messages=session.messages if session is not None else (),
            variant=self.variant,
        )


# ── Fixtures ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TaskFixture:
    task_id: str
    turns: tuple[str, ...]
    candidate_tools: tuple[str, ...]
    reference_sequence: tuple[str, ...]
    reference_answer: str
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        object.__setattr__(self, "candidate_tools", tuple(self.candidate_tools))
        object.__setattr__(self, "reference_sequence", tuple(self.reference_sequence))
        if not self.turns:
            raise InvariantViolationError("turns nonempty", self.task_id)
        missing = [t for t in self.reference_sequence if t not in self.candidate_tools]
        if missing:
            raise InvariantViolationError(
                "reference_sequence tools are candidate tools",
                f"{self.task_id}: {', '.join(missing)}",
            )

    @classmethod
    def from_record(cls, rec: Mapping) -> "TaskFixture":
        return cls(
            task_id=str(rec["task_id"]),
            turns=tuple(rec["turns"]),
            candidate_tools=tuple(rec["candidate_tools"]),
            reference_sequence=tuple(rec["reference_sequence"]),
            reference_answer=str(rec["reference_answer"]),
            metadata=dict(rec.get("metadata") or {}),
        )

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "turns": list(self.turns),
            "candidate_tools": list(self.candidate_tools),
            "reference_sequence": list(self.reference_sequence),
            "reference_answer": self.reference_answer,
            "metadata": self.metadata,
        }


# ── Record codec ─────────────────────────────────────────────────────────────

TRACE_KEYS = ("task_id", "invoked", "error_events", "final_answer", "input_tokens", "output_tokens")
FIXTURE_KEYS = ("task_id", "turns", "candidate_tools", "reference_sequence", "reference_answer")


def dump_record(rec: Mapping) -> bytes:
    """One canonical JSON line: sorted keys, compact separators, trailing newline."""
    text = json.dumps(rec, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return (text + "\n").encode("utf-8")


def load_record(line: bytes, base_offset: int = 0) -> dict:
    """Decode one record line; failures name the absolute byte offset."""
    try:
        text = line.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedRecordError("invalid utf-8", base_offset + exc.start) from exc
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = base_offset + len(text[: exc.pos].encode("utf-8"))
        raise MalformedRecordError(f"malformed record: {exc.msg}", offset) from exc
    if not isinstance(rec, dict):
        raise MalformedRecordError("record is not an object", base_offset)
    return rec


def trace_to_record(trace: ExecutionTrace) -> dict:
    rec = {
        "task_id": trace.task_id,
        "invoked": [
            {"tool_name": i.tool_name, "arguments": i.arguments, "outcome": i.outcome.value}
            for i in trace.invoked
        ],
        "error_events": [
            {"class": e.error_class.value, "detail": e.detail} for e in trace.error_events
        ],
        "final_answer": trace.final_answer,
        "input_tokens": trace.input_tokens,
        "output_tokens": trace.output_tokens,
    }
    if trace.messages:
        rec["messages"] = [m.to_record() for m in trace.messages]
    if trace.variant is not None:
        rec["variant"] = trace.variant
    return rec


def record_to_trace(rec: Mapping, base_offset: int = 0) -> ExecutionTrace:
    missing = [k for k in TRACE_KEYS if k not in rec]
    if missing:
        raise MalformedRecordError(f"trace record missing keys: {', '.join(missing)}", base_offset)
    try:
        invoked = tuple(
            ToolInvocation(i["tool_name"], dict(i.get("arguments") or {}), Outcome(i["outcome"]))
            for i in rec["invoked"]
        )
        events = tuple(ErrorEvent(ErrorClass(e["class"]), e.get("detail", "")) for e in rec["error_events"])
        messages = tuple(Message.from_record(m) for m in rec.get("messages") or ())
        input_tokens, output_tokens = int(rec["input_tokens"]), int(rec["output_tokens"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvariantViolationError("trace record field types", str(exc)) from exc
    return ExecutionTrace(
        task_id=str(rec["task_id"]),
        invoked=invoked,
        error_events=events,
        final_answer=rec["final_answer"],
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        messages=messages,
        variant=rec.get("variant"),
    )


def serialize_trace(trace: ExecutionTrace) -> bytes:
    return dump_record(trace_to_record(trace))


def parse_trace(data: bytes) -> ExecutionTrace:
    """Parse exactly one trace record (a trailing newline is allowed)."""
    body = data[:-1] if data.endswith(b"\n") else data
    if b"\n" in body:
        raise MalformedRecordError("expected a single trace record", body.index(b"\n"))
    return record_to_trace(load_record(body), 0)


def iter_records(data: bytes) -> Iterator[tuple[int, dict]]:
    """Yield (byte offset, record) for every nonblank line of a JSONL payload."""
    offset = 0
    for line in data.splitlines(keepends=True):
        if line.strip():
            yield offset, load_record(line.rstrip(b"\r\n"), offset)
        offset += len(line)


def parse_traces(data: bytes) -> list[ExecutionTrace]:
    return [record_to_trace(rec, off) for off, rec in iter_records(data)]
