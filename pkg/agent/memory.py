# agent/memory.py
"""
Dialogue history upkeep.

Structural layer: every turn must read Human, k x (AI with a tool call, Tool),
then a closing AI, i.e. 2 + 2k messages. ``align_history`` inserts synthetic
messages until that holds and reports each repair.

Compression layer: once a session holds more than K non-system messages, the
prefix from the first human message up to (excluding) the second-to-last
human message is replaced by a summary system message at position 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Sequence

from agent.providers import Summarizer
from agent.tokens import count_tokens
from core.errors import ConfigError, InsufficientHistoryError, ProviderError
from core.trace import Message, Role, Session, ToolCallRequest, system

logger = logging.getLogger(__name__)

PLACEHOLDER_PREFIX = "[placeholder]"
TERMINAL_TEXT = "[placeholder] turn ended without a final response."


class RepairKind(str, Enum):
    INSERTED_PLACEHOLDER_TOOL = "inserted_placeholder_tool"
    INSERTED_PLACEHOLDER_AI = "inserted_placeholder_ai"
    BACKFILLED_CONTENT = "backfilled_content"


class PlaceholderReason(str, Enum):
    CANCELLED = "cancelled"
    API_FAILURE = "api_failure"
    OUTPUT_ERROR = "output_error"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class Repair:
    position: int
    kind: RepairKind
    reason: str


@dataclass(frozen=True)
class AlignmentReport:
    repairs: tuple[Repair, ...] = ()
    canonical: bool = True


@dataclass(frozen=True)
class Canonical:
    k: int

    @property
    def length(self) -> int:
        return 2 + 2 * self.k


@dataclass(frozen=True)
class Violation:
    position: int
    expected: str
    found: str


@dataclass(frozen=True)
class LogEntry:
    """What the tool host recorded for one call."""
    tool_name: str
    content: str


@dataclass(frozen=True)
class MemoryConfig:
    summarize_threshold: int = 30
    compression_target: tuple[float, float] = (0.35, 0.40)
    summarizer: Summarizer | None = None

    def __post_init__(self):
        if self.summarize_threshold < 4:
            raise ConfigError("memory.summarize_threshold must be at least 4")
        low, high = self.compression_target
        if not 0 < low <= high <= 1:
            raise ConfigError("memory.compression_target must satisfy 0 < low <= high <= 1")


# ── Turn grammar ─────────────────────────────────────────────────────────────

def _role(msg: Message) -> str:
    return msg.role.value


def validate_turn_structure(messages: Sequence[Message]) -> Canonical | Violation:
    if not messages or messages[0].role is not Role.HUMAN:
        return Violation(0, "human", _role(messages[0]) if messages else "end")
    k, pos = 0, 1
    while True:
        if pos >= len(messages):
            return Violation(pos, "ai", "end")
        msg = messages[pos]
        if msg.role is not Role.AI:
            return Violation(pos, "ai", _role(msg))
        if not msg.tool_calls:
            if pos + 1 < len(messages):
                return Violation(pos + 1, "end", _role(messages[pos + 1]))
            return Canonical(k)
        if pos + 1 >= len(messages):
            return Violation(pos + 1, "tool", "end")
        reply = messages[pos + 1]
        if reply.role is not Role.TOOL:
            return Violation(pos + 1, "tool", _role(reply))
        if reply.tool_call_id not in {c.call_id for c in msg.tool_calls}:
            return Violation(pos + 1, "tool", f"tool for unknown call {reply.tool_call_id}")
        k += 1
        pos += 2


def split_turns(messages: Sequence[Message]) -> tuple[list[Message], list[list[Message]]]:
    """Leading messages before the first human message, then one list per turn."""
    prefix, turns = [], []
    for msg in messages:
        if msg.role is Role.HUMAN:
            turns.append([msg])
        elif turns:
            turns[-1].append(msg)
        else:
            prefix.append(msg)
    return prefix, turns


# ── Alignment ────────────────────────────────────────────────────────────────

def placeholder_tool(call: ToolCallRequest, reason: PlaceholderReason) -> Message:
    text = f"{PLACEHOLDER_PREFIX} tool={call.tool_name} call_id={call.call_id} reason={reason.value}"
    return Message(Role.TOOL, text, tool_call_id=call.call_id, token_count=count_tokens(text), synthetic=True)


def placeholder_ai(call: ToolCallRequest, text: str) -> Message:
    return Message(Role.AI, text, (call,), token_count=count_tokens(text), synthetic=True)


def terminal_ai(text: str = TERMINAL_TEXT) -> Message:
    return Message(Role.AI, text, token_count=count_tokens(text), synthetic=True)


def _missing_reason(following: Message | None) -> PlaceholderReason:
    if following is None or following.role is Role.HUMAN:
        return PlaceholderReason.CANCELLED
    if following.role is Role.TOOL:
        return PlaceholderReason.OUTPUT_ERROR
    return PlaceholderReason.API_FAILURE


class _TurnAligner:
    def __init__(self, offset: int, log: Mapping[str, LogEntry]):
        self.offset = offset
        self.log = log
        self.out: list[Message] = []
        self.repairs: list[Repair] = []

    def emit(self, msg: Message, kind: RepairKind | None = None, reason: str = "") -> None:
        if kind is not None:
            self.repairs.append(Repair(self.offset + len(self.out), kind, reason))
        self.out.append(msg)

    def tool_result(self, msg: Message) -> None:
        if msg.content:
            self.emit(msg)
            return
        entry = self.log.get(msg.tool_call_id)
        if entry is not None and entry.content:
            self.emit(replace(msg, content=entry.content, token_count=count_tokens(entry.content), synthetic=True),
                      RepairKind.BACKFILLED_CONTENT, "recovered from execution log")
        else:
            name = entry.tool_name if entry else "unknown"
            filled = placeholder_tool(ToolCallRequest(msg.tool_call_id, name), PlaceholderReason.TRUNCATED)
            self.emit(filled, RepairKind.BACKFILLED_CONTENT, PlaceholderReason.TRUNCATED.value)

    def align(self, turn: list[Message]) -> list[Message]:
        self.emit(turn[0])
        pos = 1
        while pos < len(turn):
            msg = turn[pos]
            pos += 1
            if msg.role is Role.AI and msg.tool_calls:
                self.emit(msg)
                for j, call in enumerate(msg.tool_calls):
                    if j > 0:
                        nxt = turn[pos] if pos < len(turn) else None
                        if nxt is not None and nxt.synthetic and nxt.role is Role.AI and nxt.tool_calls == (call,):
                            self.emit(nxt)
                            pos += 1
                        else:
                            self.emit(placeholder_ai(call, "[placeholder] continuing with the next call."),
                                      RepairKind.INSERTED_PLACEHOLDER_AI, "one call per step")
                    nxt = turn[pos] if pos < len(turn) else None
                    if nxt is not None and nxt.role is Role.TOOL and nxt.tool_call_id == call.call_id:
                        self.tool_result(nxt)
                        pos += 1
                    else:
                        reason = _missing_reason(nxt)
                        self.emit(placeholder_tool(call, reason), RepairKind.INSERTED_PLACEHOLDER_TOOL, reason.value)
            elif msg.role is Role.TOOL:
                entry = self.log.get(msg.tool_call_id)
                call = ToolCallRequest(msg.tool_call_id, entry.tool_name if entry else "unknown")
                self.emit(placeholder_ai(call, "[placeholder] reconstructed tool call."),
                          RepairKind.INSERTED_PLACEHOLDER_AI, "tool result without a call")
                self.tool_result(msg)
            else:
                self.emit(msg)
        last = self.out[-1]
        if not (last.role is Role.AI and not last.tool_calls):
            self.emit(terminal_ai(), RepairKind.INSERTED_PLACEHOLDER_AI, "missing final response")
        return self.out


def align_history(
    session: Session,
    execution_log: Mapping[str, LogEntry] | None = None,
) -> tuple[Session, AlignmentReport]:
    """
    Bring every turn to the 2 + 2k form by inserting synthetic messages.
    Original messages keep their order and are never removed; an empty tool
    result is backfilled from ``execution_log`` when the log has it.
    """
    log = execution_log or {}
    prefix, turns = split_turns(session.messages)
    out, repairs, canonical = list(prefix), [], True
    for turn in turns:
        aligner = _TurnAligner(len(out), log)
        aligned = aligner.align(turn)
        canonical = canonical and isinstance(validate_turn_structure(aligned), Canonical)
        out.extend(aligned)
        repairs.extend(aligner.repairs)
    if repairs:
        logger.warning("Aligned session with %d repairs", len(repairs))
    aligned_session = session if not repairs else session.with_messages(out)
    return aligned_session, AlignmentReport(tuple(repairs), canonical)


# ── Summarization ────────────────────────────────────────────────────────────

def should_summarize(session: Session, cfg: MemoryConfig) -> bool:
    return sum(1 for m in session.messages if m.role is not Role.SYSTEM) > cfg.summarize_threshold


def select_summary_segment(session: Session) -> tuple[int, int]:
    humans = session.human_indices()
    if len(humans) < 3:
        raise InsufficientHistoryError(f"need 3 human messages to summarize, found {len(humans)}")
    return humans[0], humans[-2]


def segment_tokens(messages: Sequence[Message]) -> int:
    return sum(count_tokens(m.content) for m in messages)


def summarize_and_replace(session: Session, segment: tuple[int, int], cfg: MemoryConfig) -> Session:
    """
    Replace ``segment`` with a summary system message at position 0. An
    earlier summary is fed to the summarizer and its system message dropped.
    On summarizer failure the error propagates and nothing is replaced.
    """
    if cfg.summarizer is None:
        raise ConfigError("memory.summarizer is not configured")
    start, end = segment
    messages = session.messages
    part = messages[start:end]
    try:
        text = cfg.summarizer.summarize(part, session.summary)
    except ProviderError:
        raise
    except Exception as exc:
        raise ProviderError(f"summarizer failed: {exc}") from exc
    if not text or not text.strip():
        raise ProviderError("summarizer returned empty text")

    kept = [
        m for i, m in enumerate(messages)
        if not start <= i < end and not (i < start and m.role is Role.SYSTEM)
    ]
    logger.debug("Summarized %d messages (%d tokens) into %d tokens",
                 len(part), segment_tokens(part), count_tokens(text))
    return Session(
        messages=(system(text, count_tokens(text)), *kept),
        summary=text,
        state={**session.state, "summary": text},
    )
