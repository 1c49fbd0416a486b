import pytest

from core.errors import ConfigError
from core.store import DEFAULT_CONFIG
from core.trace import ErrorClass
from settings import DEFAULTS, env_name, load_settings, parse_assignment


def test_defaults(settings):
    assert settings.values == DEFAULTS
    assert settings.get("memory.summarize_threshold") == 30
    assert settings.get("retrieval.top_m") == 50


def test_env_name():
    assert env_name("retrieval.top_m") == "AGENTLOOP_RETRIEVAL_TOP_M"


def test_environment_values_are_typed():
    settings = load_settings(environ={
        "AGENTLOOP_RETRIEVAL_TOP_M": "30",
        "AGENTLOOP_RETRIEVAL_JUMP_MIN_GAP": "0.1",
        "AGENTLOOP_ENGINE_ABLATION_MEMORY": "false",
    })
    assert settings.get("retrieval.top_m") == 30
    assert settings.get("retrieval.jump_min_gap") == 0.1
    assert settings.ablation().label == "B-PT"


def test_unrelated_environment_is_ignored():
    settings = load_settings(environ={"AGENTLOOP_NOT_A_KEY": "1", "HOME": "/root"})
    assert settings.values == DEFAULTS


def test_bundled_config_file():
    settings = load_settings(DEFAULT_CONFIG, environ={})
    assert settings.get("memory.summarize_threshold") == 10
    assert settings.get("engine.max_iterations") == 12


def test_precedence(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("retrieval:\n  top_m: 40\n  min_retained: 5\n", encoding="utf-8")
    settings = load_settings(path, environ={"AGENTLOOP_RETRIEVAL_TOP_M": "35"},
                             overrides={"retrieval.top_m": 20})
    assert settings.get("retrieval.top_m") == 20
    assert settings.get("retrieval.min_retained") == 5


@pytest.mark.parametrize("text", ["retrieval:\n  top_k: 3\n", "- just\n- a list\n", "a: [unclosed\n"])
def test_bad_config_files(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_settings(path, environ={})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "absent.yaml", environ={})


def test_unknown_override(settings):
    with pytest.raises(ConfigError):
        settings.with_overrides({"engine.turbo": True})
    with pytest.raises(ConfigError):
        settings.with_overrides({"engine.retry": 3})


def test_none_overrides_are_skipped(settings):
    assert settings.with_overrides({"eval.jobs": None}).get("eval.jobs") == 1


def test_parse_assignment():
    assert parse_assignment("retrieval.top_m=30") == ("retrieval.top_m", 30)
    assert parse_assignment("prompt.default_language=zh") == ("prompt.default_language", "zh")
    with pytest.raises(ConfigError):
        parse_assignment("retrieval.top_m")


def test_engine_config(settings):
    cfg = settings.engine_config()
    assert cfg.max_iterations == 12
    assert cfg.ablation.label == "Full"
    assert cfg.retry_limit(ErrorClass.TIMEOUT) == 2
    assert cfg.retry_limit(ErrorClass.INVALID_ARGUMENTS) == 0
    assert cfg.memory.summarize_threshold == 30
    assert cfg.profile.default_language == "en"


def test_invalid_engine_values(settings):
    with pytest.raises(ConfigError):
        settings.with_overrides({"retrieval.min_retained": 80}).engine_config()
    with pytest.raises(ConfigError):
        settings.with_overrides({"engine.max_iterations": "many"}).engine_config()
    with pytest.raises(ConfigError):
        settings.with_overrides({"tokenizer.provider": "bpe"}).engine_config()


def test_missing_profile(settings, tmp_path):
    with pytest.raises(ConfigError):
        settings.with_overrides({"prompt.profile": str(tmp_path / "none.yaml")}).profile()


def test_round_trip_through_yaml(settings, tmp_path):
    path = tmp_path / "resolved.yaml"
    path.write_text(settings.with_overrides({"retrieval.top_m": 25}).to_yaml(), encoding="utf-8")
    assert load_settings(path, environ={}).get("retrieval.top_m") == 25
