import pytest

from agent.providers import build_providers
from core.store import DEFAULT_REGISTRY
from core.trace import TaskFixture, ToolCallRequest, ai, human, tool
from settings import load_settings
from tools.host import load_registry


@pytest.fixture
def settings():
    # ignore AGENTLOOP_* variables of the machine running the tests
    return load_settings(environ={})


@pytest.fixture
def profile(settings):
    return settings.profile()


@pytest.fixture
def engine_cfg(settings):
    return settings.engine_config()


@pytest.fixture
def providers(settings):
    return build_providers(settings)


@pytest.fixture
def registry():
    return load_registry(DEFAULT_REGISTRY)


@pytest.fixture
def weather_fixture():
    return TaskFixture(
        task_id="weather-oslo",
        turns=("What is the weather forecast in Oslo?",),
        candidate_tools=("get_weather", "web_search"),
        reference_sequence=("get_weather",),
        reference_answer="Oslo is cold and windy today.",
        metadata={"script": [[{"tool": "get_weather", "arguments": {"city": "Oslo"}}]]},
    )


def make_turn(n: int, k: int = 0, prefix: str = "t") -> list:
    """One canonical turn: Human, k x (AI call, Tool), closing AI."""
    msgs = [human(f"question {n}", 2)]
    for j in range(k):
        call = ToolCallRequest(f"{prefix}{n}-{j}", "get_weather", {"city": "Oslo"})
        msgs.append(ai("Thought: use the weather tool.", (call,), 6))
        msgs.append(tool(call.call_id, "Weather in Oslo: 3°C, windy.", 8))
    msgs.append(ai(f"answer {n}", token_count=2))
    return msgs


@pytest.fixture
def turn():
    return make_turn
