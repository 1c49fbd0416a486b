# agent/prompts.py
"""
System prompt assembly: core behavioural constraints, runtime adaptation to
intent and tool availability, and summary injection.

Section wording lives in Jinja templates (one file per section id) under the
profile's template directory, so prompts can be edited without code changes.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Protocol, Sequence

import jinja2
import yaml

from core.errors import ConfigError
from tools.schema import Category, ToolSchema

logger = logging.getLogger(__name__)

SECTION_ORDER = ("role", "intent", "tool_policy", "tools", "format", "safety", "summary")


class Intent(str, Enum):
    SOCIAL_INTERACTION = "social_interaction"
    CREATIVE_GENERATION = "creative_generation"
    FACTUAL_RECALL = "factual_recall"
    TOOL_AUGMENTED = "tool_augmented"


class ToolMode(str, Enum):
    SINGLE_TOOL = "single_tool"
    MULTI_TOOL = "multi_tool"


@dataclass(frozen=True)
class IntentCategory:
    category: Intent
    tool_mode: ToolMode | None = None

    def __post_init__(self):
        object.__setattr__(self, "category", Intent(self.category))
        if self.tool_mode is not None:
            object.__setattr__(self, "tool_mode", ToolMode(self.tool_mode))
        if (self.tool_mode is not None) != (self.category is Intent.TOOL_AUGMENTED):
            raise ValueError("tool_mode is set exactly for tool_augmented intents")

    @property
    def uses_tools(self) -> bool:
        return self.category is Intent.TOOL_AUGMENTED

    def __str__(self) -> str:
        return self.category.value + (f"/{self.tool_mode.value}" if self.tool_mode else "")


# ── Profile ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SafetyRule:
    rule_id: str
    pattern: re.Pattern


@dataclass(frozen=True)
class AgentProfile:
    role_text: str
    response_language_policy: str = "mirror_user"
    formatting_policy: str = "auto"
    safety_rules: tuple[SafetyRule, ...] = ()
    tool_policy_text: str = ""
    template_dir: Path = Path("data/templates")
    default_language: str = "en"
    refusal_text: str = "I can't help with that request."

    def __post_init__(self):
        policy = self.response_language_policy
        if policy != "mirror_user" and not policy.startswith("fixed:"):
            raise ConfigError(f"unknown response_language_policy {policy!r}")
        if self.formatting_policy not in ("structured", "free_text", "auto"):
            raise ConfigError(f"unknown formatting_policy {self.formatting_policy!r}")

    def response_language(self, user_language: str) -> str:
        if self.response_language_policy.startswith("fixed:"):
            return self.response_language_policy.split(":", 1)[1]
        return user_language


def compile_rules(raw_rules: Sequence[dict]) -> tuple[SafetyRule, ...]:
    rules = []
    for raw in raw_rules:
        rule_id = str(raw.get("id", "")).strip()
        if not rule_id:
            raise ConfigError("safety rule without id")
        try:
            rules.append(SafetyRule(rule_id, re.compile(raw["pattern"], re.IGNORECASE)))
        except (KeyError, re.error) as exc:
            raise ConfigError(f"safety rule {rule_id!r} does not compile: {exc}") from exc
    return tuple(rules)


def load_profile(path) -> AgentProfile:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found. Pass --profile or restore data/profile.yaml.")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    template_dir = Path(raw.get("template_dir", "templates"))
    if not template_dir.is_absolute():
        template_dir = path.parent / template_dir
    if not template_dir.is_dir():
        raise ConfigError(f"template directory {template_dir} does not exist")
    profile = AgentProfile(
        role_text=str(raw.get("role_text", "")).strip(),
        response_language_policy=str(raw.get("response_language_policy", "mirror_user")),
        formatting_policy=str(raw.get("formatting_policy", "auto")),
        safety_rules=compile_rules(raw.get("safety_rules") or []),
        tool_policy_text=str(raw.get("tool_policy_text", "")).strip(),
        template_dir=template_dir.resolve(),
        default_language=str(raw.get("default_language", "en")),
        refusal_text=str(raw.get("refusal_text", AgentProfile.refusal_text)),
    )
    logger.debug("Loaded profile %s with %d safety rules", path, len(profile.safety_rules))
    return profile


@lru_cache(maxsize=8)
def _environment(template_dir: Path) -> jinja2.Environment:
    return jinja2.Environment(
        loader=jinja2.FileSystemLoader(str(template_dir)),
        undefined=jinja2.StrictUndefined,
        autoescape=False,
        keep_trailing_newline=False,
    )


def render(profile: AgentProfile, template_name: str, **context) -> str:
    try:
        return _environment(profile.template_dir).get_template(template_name).render(**context).strip()
    except jinja2.TemplateNotFound as exc:
        raise ConfigError(f"missing prompt template {exc.name} in {profile.template_dir}") from exc


# ── Intent classification ────────────────────────────────────────────────────

_WORDS = re.compile(r"[a-z0-9']+")
GENERIC_NAME_TOKENS = frozenset(
    "get set list create make write read run do add update new text file files image".split()
)
SEQUENCE_MARKERS = ("then", "after that", "afterwards", "followed by", "and also", "next,")
CREATIVE_WORDS = frozenset(
    "write story poem compose draft imagine invent lyrics essay joke haiku fiction song tale".split()
)
FACTUAL_WORDS = frozenset("what who when where why how which explain define describe".split())
SOCIAL_WORDS = frozenset("hello hi hey thanks thank bye goodbye morning evening cheers".split())
SOCIAL_PHRASES = ("how are you", "nice to meet you", "good morning", "good evening", "你好", "谢谢")


class IntentProvider(Protocol):
    def classify(self, utterance: str, tools: Sequence[ToolSchema]) -> IntentCategory | None: ...


def _contains_phrase(text: str, phrase: str) -> bool:
    if not phrase.isascii():
        return phrase in text
    return re.search(rf"(?<![a-z0-9]){re.escape(phrase)}(?![a-z0-9])", text) is not None


def matching_tools(utterance: str, tools: Sequence[ToolSchema]) -> list[ToolSchema]:
    """Tools whose keywords or distinctive name tokens occur in the utterance."""
    text = utterance.lower()
    words = set(_WORDS.findall(text))
    matched = []
    for schema in tools:
        name_tokens = set(schema.tool_name.lower().split("_")) - GENERIC_NAME_TOKENS
        if words & name_tokens or any(_contains_phrase(text, kw) for kw in schema.keywords):
            matched.append(schema)
    return matched


def classify_intent(
    utterance: str,
    available_tools: Sequence[ToolSchema],
    provider: IntentProvider | None = None,
) -> IntentCategory:
    """
    Rule-based intent routing. When several rules fire the precedence is
    tool_augmented > creative_generation > factual_recall > social_interaction;
    text matching no rule is treated as factual recall.
    """
    if provider is not None:
        decided = provider.classify(utterance, available_tools)
        if decided is not None:
            return decided
    text = utterance.lower().strip()
    matched = matching_tools(text, available_tools)
    if matched:
        multi = len(matched) >= 2 or any(_contains_phrase(text, m) for m in SEQUENCE_MARKERS)
        return IntentCategory(Intent.TOOL_AUGMENTED, ToolMode.MULTI_TOOL if multi else ToolMode.SINGLE_TOOL)

    social = any(_contains_phrase(text, p) for p in SOCIAL_PHRASES)
    for phrase in SOCIAL_PHRASES:
        text = text.replace(phrase, " ")
    words = set(_WORDS.findall(text))
    if words & CREATIVE_WORDS:
        return IntentCategory(Intent.CREATIVE_GENERATION)
    if words & FACTUAL_WORDS or "?" in text:
        return IntentCategory(Intent.FACTUAL_RECALL)
    if social or words & SOCIAL_WORDS:
        return IntentCategory(Intent.SOCIAL_INTERACTION)
    return IntentCategory(Intent.FACTUAL_RECALL)


# ── Language detection ───────────────────────────────────────────────────────

SCRIPT_RANGES = (
    ("zh", (("一", "鿿"), ("㐀", "䶿"))),
    ("ja", (("぀", "ゟ"), ("゠", "ヿ"))),
    ("ko", (("가", "힯"), ("ᄀ", "ᇿ"))),
    ("ru", (("Ѐ", "ӿ"),)),
    ("ar", (("؀", "ۿ"),)),
    ("el", (("Ͱ", "Ͽ"),)),
    ("hi", (("ऀ", "ॿ"),)),
    ("th", (("฀", "๿"),)),
    ("en", (("A", "Z"), ("a", "z"), ("À", "ɏ"))),
)


def detect_user_language(utterance: str, default: str = "en") -> str:
    """Majority writing system wins; kana presence turns Han counts into Japanese."""
    counts = {tag: 0 for tag, _ in SCRIPT_RANGES}
    for ch in utterance:
        for tag, ranges in SCRIPT_RANGES:
            if any(lo <= ch <= hi for lo, hi in ranges):
                counts[tag] += 1
                break
    if counts["ja"]:
        counts["ja"] += counts["zh"]
        counts["zh"] = 0
    best = max(counts.values())
    if best == 0:
        return default
    # ties resolve by SCRIPT_RANGES order
    return next(tag for tag, _ in SCRIPT_RANGES if counts[tag] == best)


# ── Safety filter ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SafetyVerdict:
    blocked: bool
    rule_id: str | None = None

    @property
    def passed(self) -> bool:
        return not self.blocked


def apply_safety_filter(candidate_output: str, profile: AgentProfile) -> SafetyVerdict:
    for rule in profile.safety_rules:
        if rule.pattern.search(candidate_output):
            return SafetyVerdict(True, rule.rule_id)
    return SafetyVerdict(False)


# ── Composition ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PromptBundle:
    system_prompt: str
    sections: tuple[tuple[str, str], ...]
    injected_summary: str | None = None

    def __post_init__(self):
        ids = [sid for sid, _ in self.sections]
        if len(ids) != len(set(ids)):
            raise ValueError("section ids must be unique")
        if "".join(text for _, text in self.sections) != self.system_prompt:
            raise ValueError("system_prompt must equal the concatenated sections")

    def section(self, section_id: str) -> str | None:
        return dict(self.sections).get(section_id)

    @classmethod
    def from_sections(cls, sections: Sequence[tuple[str, str]], summary: str | None = None) -> "PromptBundle":
        sections = tuple((sid, text + "\n\n") for sid, text in sections)
        return cls("".join(text for _, text in sections), sections, summary)


def describe_tool(schema: ToolSchema, utterance: str = "") -> str:
    line = f"- {schema.signature()}: {schema.enriched_description or schema.description}"
    if schema.output_description:
        line += f" Returns: {schema.output_description}"
    if schema.preconditions:
        line += f" Requires: {schema.preconditions}"
    if schema.is_expensive:
        line += " [expensive: ask for confirmation first]"
    hits = [kw for kw in schema.keywords if utterance and _contains_phrase(utterance.lower(), kw)]
    if hits:
        line += f" [preferred: request mentions '{hits[0]}']"
    return line


def resolve_format(profile: AgentProfile, intent: IntentCategory, tools: Sequence[ToolSchema]) -> str:
    if profile.formatting_policy != "auto":
        return profile.formatting_policy
    if intent.tool_mode is ToolMode.MULTI_TOOL:
        return "structured"
    if intent.uses_tools and any(t.category is Category.DATA_ANALYSIS for t in tools):
        return "structured"
    return "free_text"


def compose_prompt(
    profile: AgentProfile,
    intent: IntentCategory,
    tools: Sequence[ToolSchema],
    summary: str | None,
    user_language: str,
    utterance: str = "",
) -> PromptBundle:
    """Pure function of its inputs; sections always follow SECTION_ORDER."""
    language = profile.response_language(user_language)
    tool_list = "\n".join(describe_tool(t, utterance) for t in tools)
    sections = [
        ("role", render(profile, "role.txt", role_text=profile.role_text, language=language)),
        ("intent", render(profile, f"intent_{intent.category.value}.txt",
                          tool_mode=intent.tool_mode.value if intent.tool_mode else "")),
        ("tool_policy", render(profile, "tool_policy.txt", uses_tools=intent.uses_tools,
                               tool_policy_text=profile.tool_policy_text)),
    ]
    if intent.uses_tools:
        sections.append(("tools", render(profile, "tools.txt", tool_list=tool_list, tool_count=len(tools))))
    sections.append(("format", render(profile, "format.txt", format=resolve_format(profile, intent, tools))))
    sections.append(("safety", render(profile, "safety.txt", rules=[r.rule_id for r in profile.safety_rules])))
    if summary is not None:
        sections.append(("summary", render(profile, "summary.txt", summary=summary)))
    return PromptBundle.from_sections(sections, summary)


def static_prompt(profile: AgentProfile, tools: Sequence[ToolSchema], summary: str | None = None) -> PromptBundle:
    """Fixed ReAct prompt listing every candidate tool, used by the Base variant."""
    tool_list = "\n".join(describe_tool(t) for t in tools)
    sections = [("static", render(profile, "static.txt", role_text=profile.role_text, tool_list=tool_list))]
    if summary is not None:
        sections.append(("summary", render(profile, "summary.txt", summary=summary)))
    return PromptBundle.from_sections(sections, summary)
