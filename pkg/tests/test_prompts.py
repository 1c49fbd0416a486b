import random
from dataclasses import replace

import pytest

from agent.prompts import (
    SECTION_ORDER,
    Intent,
    IntentCategory,
    PromptBundle,
    ToolMode,
    apply_safety_filter,
    classify_intent,
    compose_prompt,
    describe_tool,
    detect_user_language,
    load_profile,
    static_prompt,
)
from core.errors import ConfigError

TOOL_INTENT = IntentCategory(Intent.TOOL_AUGMENTED, ToolMode.SINGLE_TOOL)


@pytest.fixture
def tools(registry):
    return registry.list_tools()


# ── Intent ───────────────────────────────────────────────────────────────────

def test_greeting_is_social(tools):
    assert classify_intent("hello there", tools) == IntentCategory(Intent.SOCIAL_INTERACTION)


def test_story_request_is_creative(tools):
    assert classify_intent("write a short story about a dragon", tools).category is Intent.CREATIVE_GENERATION


def test_booking_chain_is_multi_tool(registry):
    booking = [registry.get("book_flight"), registry.get("reserve_hotel")]
    intent = classify_intent("book a flight to Tokyo then reserve a hotel", booking)
    assert intent == IntentCategory(Intent.TOOL_AUGMENTED, ToolMode.MULTI_TOOL)


def test_single_keyword_is_single_tool(tools):
    intent = classify_intent("What's the weather forecast in Rome?", tools)
    assert intent == TOOL_INTENT


def test_question_without_tools_is_factual(tools):
    assert classify_intent("Who painted the Mona Lisa?", tools).category is Intent.FACTUAL_RECALL


def test_tool_words_need_the_tool_to_be_available(registry):
    intent = classify_intent("What is the weather forecast in Rome?", [registry.get("calculator")])
    assert intent.category is Intent.FACTUAL_RECALL


def test_intent_provider_takes_precedence(tools):
    class Always:
        def classify(self, utterance, available_tools):
            return IntentCategory(Intent.CREATIVE_GENERATION)

    assert classify_intent("weather in Rome", tools, Always()).category is Intent.CREATIVE_GENERATION


def test_tool_mode_only_for_tool_intents():
    with pytest.raises(ValueError):
        IntentCategory(Intent.SOCIAL_INTERACTION, ToolMode.SINGLE_TOOL)
    with pytest.raises(ValueError):
        IntentCategory(Intent.TOOL_AUGMENTED)


# ── Language ─────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("text, expected", [
    ("你好，帮我查天气", "zh"),
    ("hello, what's the weather", "en"),
    ("東京の天気はどうですか", "ja"),
    ("Привет, как дела?", "ru"),
])
def test_detect_user_language(text, expected):
    assert detect_user_language(text) == expected


def test_no_letters_fall_back_to_default():
    assert detect_user_language("12345 !!!", default="de") == "de"


# ── Safety ───────────────────────────────────────────────────────────────────

def test_clean_output_passes(profile):
    assert apply_safety_filter("Paris is sunny today.", profile).passed


def test_matching_rule_blocks(profile):
    verdict = apply_safety_filter("Sure, the password: hunter2", profile)
    assert verdict.blocked and verdict.rule_id == "credentials"


def test_first_matching_rule_wins(profile):
    verdict = apply_safety_filter("password: 1234 5678 9012 3456", profile)
    assert verdict.rule_id == "credentials"
    verdict = apply_safety_filter("card 1234 5678 9012 3456", profile)
    assert verdict.rule_id == "card_number"


# ── Composition ──────────────────────────────────────────────────────────────

def test_compose_is_deterministic(profile, tools):
    a = compose_prompt(profile, TOOL_INTENT, tools[:3], None, "en")
    b = compose_prompt(profile, TOOL_INTENT, tools[:3], None, "en")
    assert a.system_prompt == b.system_prompt


def test_sections_follow_the_fixed_order(profile, tools):
    bundle = compose_prompt(profile, TOOL_INTENT, tools[:3], "earlier stuff", "en")
    ids = [sid for sid, _ in bundle.sections]
    assert ids == list(SECTION_ORDER)
    assert bundle.system_prompt == "".join(text for _, text in bundle.sections)


def test_no_summary_means_no_summary_section(profile, tools):
    bundle = compose_prompt(profile, TOOL_INTENT, tools[:3], None, "en")
    assert bundle.injected_summary is None
    assert bundle.section("summary") is None


def test_summary_is_injected(profile, tools):
    bundle = compose_prompt(profile, TOOL_INTENT, tools[:3], "User asked about Oslo.", "en")
    assert bundle.injected_summary == "User asked about Oslo."
    assert "User asked about Oslo." in bundle.section("summary")


def test_social_intent_gets_no_tool_section(profile, tools):
    bundle = compose_prompt(profile, IntentCategory(Intent.SOCIAL_INTERACTION), tools, None, "en")
    assert bundle.section("tools") is None
    assert "without calling tools" in bundle.section("tool_policy")
    assert "get_weather" not in bundle.system_prompt


def test_tool_section_lists_every_offered_tool(profile, tools):
    bundle = compose_prompt(profile, TOOL_INTENT, tools[:4], None, "en")
    for schema in tools[:4]:
        assert schema.tool_name in bundle.section("tools")


def test_tool_order_only_touches_the_tool_section(profile, tools):
    rng = random.Random(7)
    offered = list(tools[:8])
    reference = compose_prompt(profile, TOOL_INTENT, offered, "User asked about Oslo.", "en")
    for _ in range(20):
        rng.shuffle(offered)
        bundle = compose_prompt(profile, TOOL_INTENT, offered, "User asked about Oslo.", "en")
        assert [sid for sid, _ in bundle.sections] == [sid for sid, _ in reference.sections]
        for sid, text in bundle.sections:
            if sid != "tools":
                assert text == reference.section(sid)
        assert sorted(bundle.section("tools").splitlines()) == sorted(reference.section("tools").splitlines())


def test_language_is_mirrored_or_fixed(profile):
    intent = IntentCategory(Intent.FACTUAL_RECALL)
    assert "(zh)" in compose_prompt(profile, intent, [], None, "zh").section("role")
    fixed = replace(profile, response_language_policy="fixed:fr")
    assert "(fr)" in compose_prompt(fixed, intent, [], None, "zh").section("role")


def test_multi_tool_asks_for_structured_output(profile, registry):
    tools = [registry.get("book_flight"), registry.get("reserve_hotel")]
    multi = compose_prompt(profile, IntentCategory(Intent.TOOL_AUGMENTED, ToolMode.MULTI_TOOL), tools, None, "en")
    social = compose_prompt(profile, IntentCategory(Intent.SOCIAL_INTERACTION), [], None, "en")
    assert multi.section("format") != social.section("format")


def test_expensive_tools_are_flagged(registry):
    assert "expensive" in describe_tool(registry.get("make_slides"))
    assert "expensive" not in describe_tool(registry.get("get_weather"))


def test_static_prompt_lists_all_tools(profile, tools):
    bundle = static_prompt(profile, tools)
    assert [sid for sid, _ in bundle.sections] == ["static"]
    assert all(t.tool_name in bundle.system_prompt for t in tools)


def test_bundle_rejects_mismatched_prompt():
    with pytest.raises(ValueError):
        PromptBundle("abc", (("role", "ab"),))


# ── Profile ──────────────────────────────────────────────────────────────────

def test_missing_profile(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_profile(tmp_path / "profile.yaml")


def test_profile_needs_its_templates(tmp_path):
    path = tmp_path / "profile.yaml"
    path.write_text("role_text: hi\ntemplate_dir: nowhere\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_profile(path)


def test_bad_safety_pattern(tmp_path):
    (tmp_path / "templates").mkdir()
    path = tmp_path / "profile.yaml"
    path.write_text("role_text: hi\nsafety_rules:\n  - id: broken\n    pattern: '(['\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_profile(path)
