# agent/engine.py
"""
The observe-think-act loop.

Per turn: append the user message, compress history when it grows past K,
pick the tools to offer, compose the system prompt, then alternate model
calls and tool executions until the model answers or the turn runs out of
iterations. Everything observable goes into a TraceRecorder.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

from retrying import RetryError, Retrying

from agent.memory import MemoryConfig, select_summary_segment, should_summarize, summarize_and_replace, terminal_ai
from agent.prompts import (
    AgentProfile,
    PromptBundle,
    apply_safety_filter,
    classify_intent,
    compose_prompt,
    detect_user_language,
    static_prompt,
)
from agent.providers import ModelRequest, Providers
from agent.retrieval import RetrievalConfig
from agent.tokens import DEFAULT_TOKENIZER, Tokenizer, count_tokens
from core.errors import ConfigError, InsufficientHistoryError, ProviderError
from core.trace import (
    RETRYABLE_CLASSES,
    ErrorClass,
    ExecutionTrace,
    Message,
    Role,
    Session,
    TaskFixture,
    ToolCallRequest,
    TraceRecorder,
    ai,
    human,
    tool,
)
from tools.host import LocalTransport, ToolHost, ToolResult, Transport, invoke, validate_arguments
from tools.schema import ToolSchema

logger = logging.getLogger(__name__)

URL_PATTERN = re.compile(r"https?://[^\s\"'<>]+")


# ── Configuration ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class AblationFlags:
    adaptive_prompt: bool = True
    tool_retrieval: bool = True
    memory_management: bool = True

    @property
    def label(self) -> str:
        for code, flags in VARIANTS.items():
            if flags == self:
                return VARIANT_LABELS[code]
        marks = ("P" if self.adaptive_prompt else "-") + ("T" if self.tool_retrieval else "-") \
            + ("M" if self.memory_management else "-")
        return f"custom-{marks}"

    @classmethod
    def from_code(cls, code: str) -> "AblationFlags":
        try:
            return VARIANTS[code.strip().lower()]
        except KeyError:
            raise ConfigError(f"unknown variant {code!r}; choose from {', '.join(VARIANTS)}") from None


VARIANTS = {
    "base": AblationFlags(False, False, False),
    "bp": AblationFlags(True, False, False),
    "bpt": AblationFlags(True, True, False),
    "full": AblationFlags(True, True, True),
}
VARIANT_LABELS = {"base": "Base", "bp": "B-P", "bpt": "B-PT", "full": "Full"}

DEFAULT_RETRY_LIMITS = MappingProxyType({
    ErrorClass.TRANSIENT_NETWORK: 2,
    ErrorClass.TIMEOUT: 2,
})


@dataclass(frozen=True)
class EngineConfig:
    profile: AgentProfile
    max_iterations: int = 12
    retry_limits: Mapping[ErrorClass, int] = DEFAULT_RETRY_LIMITS
    ablation: AblationFlags = field(default_factory=AblationFlags)
    tokenizer: Tokenizer = DEFAULT_TOKENIZER
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    backoff_ms: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("engine.max_iterations must be at least 1")
        limits = {ErrorClass(k): int(v) for k, v in self.retry_limits.items()}
        if any(v < 0 for v in limits.values()):
            raise ConfigError("engine.retry limits must be nonnegative")
        object.__setattr__(self, "retry_limits", MappingProxyType(limits))
        if self.backoff_ms < 0:
            raise ConfigError("engine.backoff_ms must be nonnegative")

    def retry_limit(self, error_class: ErrorClass) -> int:
        if error_class not in RETRYABLE_CLASSES:
            return 0
        return self.retry_limits.get(error_class, 0)


# ── Tool execution ───────────────────────────────────────────────────────────

def execute_with_retry(
    call: ToolCallRequest,
    cfg: EngineConfig,
    host: ToolHost,
    transport: Transport | None = None,
    confirmed: bool = True,
) -> tuple[ToolResult, int]:
    """
    Validate and dispatch one call. Transient network failures and timeouts
    are retried up to their configured limit; every other class gets exactly
    one attempt. Returns the last result and the number of attempts.
    """
    schema = host.get(call.tool_name)
    if schema is None:
        return ToolResult.failure(call.call_id, ErrorClass.TOOL_NOT_FOUND, f"unknown tool {call.tool_name!r}"), 1
    verdict = validate_arguments(schema, call.arguments, call.call_id)
    if not verdict.ok:
        return ToolResult.failure(call.call_id, ErrorClass.INVALID_ARGUMENTS, verdict.reason), 1
    transport = transport or LocalTransport(host)
    last: list[ToolResult] = []

    def attempt() -> ToolResult:
        result = invoke(verdict.call, transport, confirmed)
        last.append(result)
        return result

    def should_retry(result: ToolResult) -> bool:
        return not result.ok and result.error_class in RETRYABLE_CLASSES

    def stop(attempt_number: int, delay_ms: int) -> bool:
        return attempt_number > cfg.retry_limit(last[-1].error_class)

    def wait(attempt_number: int, delay_ms: int) -> int:
        return cfg.backoff_ms * 2 ** (attempt_number - 1)

    retryer = Retrying(retry_on_result=should_retry, stop_func=stop, wait_func=wait)
    try:
        result = retryer.call(attempt)
    except RetryError as exc:
        result = exc.last_attempt.value
    if len(last) > 1:
        logger.info("%s: %d attempts, final status %s", call.tool_name, len(last), result.status.value)
    return result, len(last)


def extract_urls(schema: ToolSchema, arguments: dict) -> dict:
    """Reduce url-typed argument values to the first URL they contain."""
    fixed = dict(arguments)
    for name in schema.consumes_urls():
        value = fixed.get(name)
        if isinstance(value, str):
            match = URL_PATTERN.search(value)
            if match:
                fixed[name] = match.group(0).rstrip(".,;:!?)]")
    return fixed


def tool_message_text(result: ToolResult) -> str:
    if result.ok:
        return result.content
    return f"ERROR [{result.error_class.value}] {result.content}"


# ── Loop ─────────────────────────────────────────────────────────────────────

class _TaskRun:
    def __init__(self, fixture: TaskFixture, cfg: EngineConfig, providers: Providers):
        self.fixture = fixture
        self.cfg = cfg
        self.providers = providers
        self.memory = cfg.memory if cfg.memory.summarizer else replace(cfg.memory, summarizer=providers.summarizer)
        self.recorder = TraceRecorder(fixture.task_id, cfg.ablation.label)
        self.session = Session()
        names = providers.candidate_names(fixture)
        missing = [n for n in names if n not in providers.host]
        if missing:
            logger.warning("%s: candidate tools not in registry: %s", fixture.task_id, ", ".join(missing))
        self.candidates = [providers.host.get(n) for n in names if n in providers.host]

    def count(self, text: str) -> int:
        return count_tokens(text, self.cfg.tokenizer)

    def append(self, *messages: Message) -> None:
        self.session = self.session.append(*messages)

    def compress(self) -> None:
        if not (self.cfg.ablation.memory_management and should_summarize(self.session, self.memory)):
            return
        try:
            segment = select_summary_segment(self.session)
            self.session = summarize_and_replace(self.session, segment, self.memory)
        except InsufficientHistoryError:
            return
        except ProviderError as exc:
            logger.warning("%s: summarization failed: %s", self.fixture.task_id, exc)
            self.recorder.add_error(ErrorClass.PROVIDER_ERROR, f"summarizer: {exc}")

    def plan(self, utterance: str) -> tuple[PromptBundle, tuple[ToolSchema, ...]]:
        """System prompt and offered tools for this turn."""
        flags, profile = self.cfg.ablation, self.cfg.profile
        if flags.tool_retrieval and self.candidates:
            selected = self.providers.index.select(
                utterance, self.cfg.retrieval, [t.tool_name for t in self.candidates]
            )
            pool = [self.providers.host.get(name) for name in selected.names]
        else:
            pool = list(self.candidates)
        if not flags.adaptive_prompt:
            return static_prompt(profile, pool, self.session.summary), tuple(pool)
        intent = classify_intent(utterance, pool)
        language = detect_user_language(utterance, profile.default_language)
        offered = tuple(pool) if intent.uses_tools else ()
        logger.debug("%s: intent %s, %d tools offered", self.fixture.task_id, intent, len(offered))
        return compose_prompt(profile, intent, offered, self.session.summary, language, utterance), offered

    def dispatch(self, call: ToolCallRequest, offered: dict[str, ToolSchema], cache: dict) -> tuple[dict, ToolResult]:
        schema = offered.get(call.tool_name)
        if schema is None:
            detail = f"tool {call.tool_name!r} is not available this turn"
            return call.arguments, ToolResult.failure(call.call_id, ErrorClass.TOOL_NOT_FOUND, detail)
        arguments = extract_urls(schema, call.arguments)
        key = (call.tool_name, json.dumps(arguments, sort_keys=True))
        if key in cache:
            logger.debug("%s: reusing result of an identical %s call", self.fixture.task_id, call.tool_name)
            return arguments, replace(cache[key], call_id=call.call_id)
        confirmed = self.providers.confirm(schema) if schema.is_expensive else True
        result, _ = execute_with_retry(
            ToolCallRequest(call.call_id, call.tool_name, arguments),
            self.cfg, self.providers.host, self.providers.transport, confirmed,
        )
        if result.ok:
            cache[key] = result
        return arguments, result

    def halt(self, error_class: ErrorClass, detail: str) -> None:
        self.recorder.add_error(error_class, detail)
        self.append(terminal_ai(f"[placeholder] stopped: {error_class.value}."))

    def run_turn(self, turn_index: int, utterance: str) -> str | None:
        """Final answer of the turn, or None when the turn was halted."""
        bundle, offered = self.plan(utterance)
        offered_by_name = {t.tool_name: t for t in offered}
        cache: dict = {}
        prompt_tokens = self.count(bundle.system_prompt)
        for _ in range(self.cfg.max_iterations):
            visible = tuple(m for m in self.session.messages if m.role is not Role.SYSTEM)
            request = ModelRequest(self.fixture.task_id, turn_index, bundle.system_prompt, visible, offered)
            input_tokens = prompt_tokens + sum(m.token_count for m in visible)
            try:
                reply = self.providers.model.complete(request)
            except Exception as exc:  # provider faults end the task, never the run
                logger.warning("%s: model call failed: %s", self.fixture.task_id, exc)
                self.halt(ErrorClass.PROVIDER_ERROR, str(exc))
                return None
            self.recorder.add_model_call(input_tokens, reply.output_tokens)

            if reply.final_answer is not None:
                answer = reply.final_answer
                verdict = apply_safety_filter(answer, self.cfg.profile)
                if verdict.blocked:
                    logger.warning("%s: answer blocked by safety rule %s", self.fixture.task_id, verdict.rule_id)
                    answer = self.cfg.profile.refusal_text
                self.append(ai(answer, token_count=self.count(answer)))
                return answer

            for call in reply.tool_calls:
                step_text = reply.reasoning
                self.append(ai(step_text, (call,),
                               token_count=self.count(step_text + " " + json.dumps(call.arguments, sort_keys=True))))
                arguments, result = self.dispatch(call, offered_by_name, cache)
                content = tool_message_text(result)
                self.append(tool(call.call_id, content, token_count=self.count(content)))
                self.recorder.add_invocation(call.tool_name, arguments, result.status)
                if not result.ok:
                    self.recorder.add_error(result.error_class, f"{call.tool_name}: {result.content}")

        self.halt(ErrorClass.RECURSION_LIMIT,
                  f"turn {turn_index} reached {self.cfg.max_iterations} model calls without an answer")
        return None

    def run(self) -> tuple[ExecutionTrace, Session]:
        answer = None
        for turn_index, utterance in enumerate(self.fixture.turns):
            self.append(human(utterance, self.count(utterance)))
            self.compress()
            answer = self.run_turn(turn_index, utterance)
            if answer is None:
                break
        trace = self.recorder.freeze(answer, self.session)
        logger.debug("%s [%s]: %d invocations, %d errors, %d/%d tokens",
                     trace.task_id, trace.variant, len(trace.invoked), len(trace.error_events),
                     trace.input_tokens, trace.output_tokens)
        return trace, self.session


def run_task(fixture: TaskFixture, cfg: EngineConfig, providers: Providers) -> tuple[ExecutionTrace, Session]:
    """Run every turn of ``fixture`` and return its trace and final session."""
    providers.prepare([fixture])
    return _TaskRun(fixture, cfg, providers).run()
