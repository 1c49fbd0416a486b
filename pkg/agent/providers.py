# agent/providers.py
"""
Provider boundary: the chat model, the summarizer, and the bundle the engine
receives. Offline runs use deterministic doubles; remote providers speak an
OpenAI-compatible chat endpoint configured through AGENTLOOP_* variables.
"""
from __future__ import annotations

import json
import logging
import math
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import requests

from agent.prompts import matching_tools
from agent.retrieval import Embedder, HashingEmbedder, RemoteEmbedder, ToolIndex
from agent.tokens import RegexTokenizer, Tokenizer, count_tokens
from core.errors import ConfigError, ProviderError, ProviderUnavailableError
from core.trace import Message, Role, TaskFixture, ToolCallRequest
from tools.host import LocalTransport, ToolHost, Transport, load_registry
from tools.schema import ToolSchema
from tools.wire import SocketTransport

logger = logging.getLogger(__name__)

MODEL_URL_ENV = "AGENTLOOP_MODEL_URL"
MODEL_KEY_ENV = "AGENTLOOP_MODEL_KEY"
EMBEDDING_URL_ENV = "AGENTLOOP_EMBEDDING_URL"

GIVE_UP_ANSWER = "I could not complete the request."


# ── Model interface ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ModelRequest:
    task_id: str
    turn_index: int
    system_prompt: str
    messages: tuple[Message, ...]
    tools: tuple[ToolSchema, ...]

    @property
    def utterance(self) -> str:
        for msg in reversed(self.messages):
            if msg.role is Role.HUMAN:
                return msg.content
        return ""

    def turn_messages(self) -> list[Message]:
        """Messages after the latest human message."""
        for i in range(len(self.messages) - 1, -1, -1):
            if self.messages[i].role is Role.HUMAN:
                return list(self.messages[i + 1:])
        return list(self.messages)


@dataclass(frozen=True)
class ModelReply:
    reasoning: str = ""
    tool_calls: tuple[ToolCallRequest, ...] = ()
    final_answer: str | None = None
    output_tokens: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))
        if (self.final_answer is None) == (not self.tool_calls):
            raise ValueError("a reply either calls tools or gives a final answer")
        if self.output_tokens < 0:
            raise ValueError("output_tokens must be nonnegative")


class ChatModel(Protocol):
    def complete(self, request: ModelRequest) -> ModelReply: ...


# ── Scripted double ──────────────────────────────────────────────────────────

_URL = re.compile(r"https?://[^\s\"'<>]+")


class ScriptedModel:
    """
    Replays the per-turn tool plan stored in a fixture's ``metadata.script``
    (a list per turn of ``{"tool", "arguments"}`` steps). Steps naming a tool
    that was not offered this turn are skipped. Once the offered steps are
    done the turn concludes with ``metadata.answers[turn]``, or the reference
    answer on the last turn.

    Tasks without a script fall back to a keyword planner: the first offered
    tool whose keywords occur in the utterance is called once.
    """

    name = "scripted"

    def __init__(self, tokenizer: Tokenizer | None = None):
        self.tokenizer = tokenizer or RegexTokenizer()
        self._fixtures: dict[str, TaskFixture] = {}
        self._lock = threading.Lock()

    def register(self, fixture: TaskFixture) -> None:
        with self._lock:
            self._fixtures[fixture.task_id] = fixture

    def _reply_call(self, request: ModelRequest, step: int, tool_name: str, arguments: dict) -> ModelReply:
        reasoning = f"Thought: I should use {tool_name}."
        call = ToolCallRequest(f"{request.task_id}-t{request.turn_index}-c{step}", tool_name, dict(arguments))
        tokens = count_tokens(reasoning + " " + json.dumps(arguments, sort_keys=True), self.tokenizer)
        return ModelReply(reasoning, (call,), None, tokens)

    def _reply_answer(self, answer: str) -> ModelReply:
        reasoning = "Thought: I can answer now."
        return ModelReply(reasoning, (), answer, count_tokens(reasoning + " " + answer, self.tokenizer))

    def complete(self, request: ModelRequest) -> ModelReply:
        fixture = self._fixtures.get(request.task_id)
        offered = {t.tool_name for t in request.tools}
        done = [m for m in request.turn_messages() if m.calls_tools]
        script = (fixture.metadata.get("script") if fixture else None) or None

        if script is None:
            return self._fallback(request, len(done))

        steps = script[request.turn_index] if request.turn_index < len(script) else []
        pending = [s for s in steps if s["tool"] in offered]
        if len(done) < len(pending):
            step = pending[len(done)]
            return self._reply_call(request, len(done), step["tool"], step.get("arguments") or {})

        answers = fixture.metadata.get("answers") or []
        last_turn = request.turn_index == len(fixture.turns) - 1
        if last_turn:
            answer = fixture.reference_answer if len(pending) == len(steps) else GIVE_UP_ANSWER
        elif request.turn_index < len(answers):
            answer = answers[request.turn_index]
        else:
            answer = "Done."
        return self._reply_answer(answer)

    def _fallback(self, request: ModelRequest, step: int) -> ModelReply:
        if step == 0:
            matched = matching_tools(request.utterance, request.tools)
            if matched:
                schema = matched[0]
                return self._reply_call(request, 0, schema.tool_name, _fill_arguments(schema, request.utterance))
        results = [m.content for m in request.turn_messages() if m.role is Role.TOOL]
        return self._reply_answer(results[-1] if results else "I can answer that directly.")


def _fill_arguments(schema: ToolSchema, utterance: str) -> dict:
    urls = _URL.findall(utterance)
    arguments = {}
    for param in schema.parameters:
        if not param.required:
            continue
        if param.semantic_type == "url":
            if urls:
                arguments[param.name] = urls[0]
        elif param.semantic_type in ("string", "text", "city", "path"):
            arguments[param.name] = utterance
    return arguments


# ── Remote model ─────────────────────────────────────────────────────────────

def _wire_message(msg: Message) -> dict:
    if msg.role is Role.TOOL:
        return {"role": "tool", "tool_call_id": msg.tool_call_id, "content": msg.content}
    if msg.role is Role.AI:
        rec = {"role": "assistant", "content": msg.content}
        if msg.tool_calls:
            rec["tool_calls"] = [
                {"id": c.call_id, "type": "function",
                 "function": {"name": c.tool_name, "arguments": json.dumps(c.arguments, sort_keys=True)}}
                for c in msg.tool_calls
            ]
        return rec
    return {"role": "user" if msg.role is Role.HUMAN else "system", "content": msg.content}


class RemoteChatModel:
    """OpenAI-compatible chat completions endpoint with function calling."""

    name = "remote"

    def __init__(self, url: str, api_key: str | None = None, model: str = "default",
                 timeout: float = 60.0, tokenizer: Tokenizer | None = None):
        self.url = url
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.tokenizer = tokenizer or RegexTokenizer()

    def post(self, payload: dict) -> dict:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise ProviderError(f"model provider at {self.url} failed: {exc}") from exc

    def complete(self, request: ModelRequest) -> ModelReply:
        payload = {
            "model": self.model,
            "messages": [{"role": "system", "content": request.system_prompt}]
                        + [_wire_message(m) for m in request.messages if m.role is not Role.SYSTEM],
        }
        if request.tools:
            payload["tools"] = [
                {"type": "function", "function": {
                    "name": t.tool_name,
                    "description": t.enriched_description or t.description,
                    "parameters": t.input_schema(),
                }}
                for t in request.tools
            ]
        body = self.post(payload)
        try:
            message = body["choices"][0]["message"]
            calls = tuple(
                ToolCallRequest(c["id"], c["function"]["name"], json.loads(c["function"].get("arguments") or "{}"))
                for c in message.get("tool_calls") or ()
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"unexpected model reply: {exc}") from exc
        content = message.get("content") or ""
        usage = body.get("usage") or {}
        tokens = int(usage.get("completion_tokens", count_tokens(content, self.tokenizer)))
        if calls:
            return ModelReply(content, calls, None, tokens)
        return ModelReply("", (), content, tokens)


# ── Summarizers ──────────────────────────────────────────────────────────────

class Summarizer(Protocol):
    def summarize(self, messages: Sequence[Message], previous: str | None = None) -> str: ...


_SENTENCE_END = re.compile(r"(?<=[.!?。！？])\s*")


def first_sentence(text: str) -> str:
    text = " ".join(text.split())
    parts = [p for p in _SENTENCE_END.split(text) if p]
    return parts[0] if parts else text


def tool_outcomes(messages: Iterable[Message]) -> list[tuple[str, str]]:
    """(tool_name, "ok" | "error") for every tool message, resolved through its call."""
    names, outcomes = {}, []
    for msg in messages:
        for call in msg.tool_calls:
            names.setdefault(call.call_id, call.tool_name)
        if msg.role is Role.TOOL:
            failed = msg.content.startswith(("ERROR [", "[placeholder]"))
            outcomes.append((names.get(msg.tool_call_id, "unknown"), "error" if failed else "ok"))
    return outcomes


class ExtractiveSummarizer:
    """
    Each user request's first sentence plus the tools used and their status,
    capped at ``max_ratio`` of the source token count.
    """

    name = "extractive"

    def __init__(self, tokenizer: RegexTokenizer | None = None, max_ratio: float = 0.40):
        self.tokenizer = tokenizer or RegexTokenizer()
        self.max_ratio = max_ratio

    def summarize(self, messages: Sequence[Message], previous: str | None = None) -> str:
        parts = [f"Earlier: {previous}"] if previous else []
        parts += [f"User asked: {first_sentence(m.content)}" for m in messages if m.role is Role.HUMAN]
        outcomes = tool_outcomes(messages)
        if outcomes:
            parts.append("Tools: " + ", ".join(f"{name} ({status})" for name, status in outcomes))
        text = " ".join(parts)
        source = sum(self.tokenizer.count(m.content) for m in messages) + self.tokenizer.count(previous or "")
        budget = max(1, math.floor(self.max_ratio * source))
        return self.tokenizer.truncate(text, budget)


class ModelSummarizer:
    name = "model"

    def __init__(self, model: RemoteChatModel):
        self.model = model

    def summarize(self, messages: Sequence[Message], previous: str | None = None) -> str:
        transcript = "\n".join(f"{m.role.value}: {m.content}" for m in messages)
        if previous:
            transcript = f"previous summary: {previous}\n{transcript}"
        body = self.model.post({
            "model": self.model.model,
            "messages": [
                {"role": "system", "content": "Summarize the conversation in about a third of its length. "
                                              "Keep user goals, tool results and open tasks."},
                {"role": "user", "content": transcript},
            ],
        })
        try:
            text = body["choices"][0]["message"]["content"].strip()
        except (KeyError, IndexError, TypeError, AttributeError) as exc:
            raise ProviderError(f"unexpected summarizer reply: {exc}") from exc
        if not text:
            raise ProviderError("summarizer returned empty text")
        return text


# ── Bundle ───────────────────────────────────────────────────────────────────

def auto_confirm(schema: ToolSchema) -> bool:
    return True


@dataclass
class Providers:
    model: ChatModel
    embedder: Embedder
    summarizer: Summarizer
    host: ToolHost
    transport: Transport
    index: ToolIndex
    confirm: Callable[[ToolSchema], bool] = auto_confirm
    noise_seed: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def candidate_names(self, fixture: TaskFixture) -> list[str]:
        """Fixture candidates plus its injected distractors."""
        n = int(fixture.metadata.get("distractors", 0))
        return list(fixture.candidate_tools) + (self.host.ensure_noise(n, self.noise_seed) if n else [])

    def prepare(self, fixtures: Iterable[TaskFixture]) -> None:
        """Register scripts and distractors and embed any new tools; call before concurrent runs."""
        with self._lock:
            for fixture in fixtures:
                if isinstance(self.model, ScriptedModel):
                    self.model.register(fixture)
                self.candidate_names(fixture)
            self.index.build(self.host.list_tools())


def build_providers(settings) -> Providers:
    """Wire providers from resolved settings; scripted doubles need no environment."""
    tokenizer = RegexTokenizer()
    host = load_registry(settings.get("registry.path"))

    server = settings.get("tools.server")
    if server:
        address, _, port = str(server).rpartition(":")
        if not port.isdigit():
            raise ConfigError(f"tools.server must be host:port, got {server!r}")
        transport = SocketTransport(address or "127.0.0.1", int(port))
    else:
        transport = LocalTransport(host)

    embedding = settings.get("embedding.provider")
    if embedding == "hashing":
        embedder = HashingEmbedder(int(settings.get("embedding.dimension")))
    elif embedding == "remote":
        url = os.getenv(EMBEDDING_URL_ENV)
        if not url:
            raise ProviderUnavailableError(f"embedding.provider is remote but {EMBEDDING_URL_ENV} is not set")
        embedder = RemoteEmbedder(url, os.getenv(MODEL_KEY_ENV), int(settings.get("embedding.dimension")))
    else:
        raise ConfigError(f"unknown embedding.provider {embedding!r}")

    remote = None
    model_provider = settings.get("model.provider")
    if model_provider == "remote" or settings.get("memory.summarizer.provider") == "model":
        url = os.getenv(MODEL_URL_ENV)
        if not url:
            raise ProviderUnavailableError(f"a remote model is configured but {MODEL_URL_ENV} is not set")
        remote = RemoteChatModel(url, os.getenv(MODEL_KEY_ENV), str(settings.get("model.name")), tokenizer=tokenizer)

    if model_provider == "scripted":
        model = ScriptedModel(tokenizer)
    elif model_provider == "remote":
        model = remote
    else:
        raise ConfigError(f"unknown model.provider {model_provider!r}")

    summarizer_provider = settings.get("memory.summarizer.provider")
    if summarizer_provider == "extractive":
        summarizer = ExtractiveSummarizer(tokenizer, max(settings.get("memory.compression_target")))
    elif summarizer_provider == "model":
        summarizer = ModelSummarizer(remote)
    else:
        raise ConfigError(f"unknown memory.summarizer.provider {summarizer_provider!r}")

    index = ToolIndex(embedder).build(host.list_tools())
    logger.info("Providers ready: model=%s embedder=%s summarizer=%s",
                model.name, embedder.name, summarizer.name)
    return Providers(model, embedder, summarizer, host, transport, index)
