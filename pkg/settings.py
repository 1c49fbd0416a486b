# settings.py
"""
Layered configuration: built-in defaults < YAML config file < AGENTLOOP_*
environment variables < command-line flags.

Every leaf key has an environment variable named after its dotted path, e.g.
``retrieval.top_m`` -> ``AGENTLOOP_RETRIEVAL_TOP_M``. Environment values are
parsed as YAML scalars, so ``0.05`` stays a float and ``false`` a boolean.
"""
import copy
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from agent.engine import AblationFlags, EngineConfig
from agent.memory import MemoryConfig
from agent.prompts import AgentProfile, load_profile
from agent.retrieval import RetrievalConfig
from agent.tokens import get_tokenizer
from core.errors import ConfigError
from core.store import DEFAULT_PROFILE, DEFAULT_REGISTRY, REPORT_DIR
from core.trace import ErrorClass

ENV_PREFIX = "AGENTLOOP_"

DEFAULTS = {
    "registry": {"path": str(DEFAULT_REGISTRY)},
    "tools": {"server": None},
    "prompt": {"profile": str(DEFAULT_PROFILE), "default_language": "en"},
    "retrieval": {"top_m": 50, "min_retained": 10, "jump_min_gap": 0.05},
    "embedding": {"provider": "hashing", "dimension": 1024},
    "memory": {
        "summarize_threshold": 30,
        "compression_target": [0.35, 0.40],
        "summarizer": {"provider": "extractive"},
    },
    "engine": {
        "max_iterations": 12,
        "backoff_ms": 0,
        "retry": {
            "transient_network": 2,
            "timeout": 2,
            "invalid_arguments": 0,
            "tool_not_found": 0,
            "tool_crash": 0,
            "provider_error": 0,
            "recursion_limit": 0,
        },
        "ablation": {"prompt": True, "retrieval": True, "memory": True},
    },
    "tokenizer": {"provider": "regex"},
    "model": {"provider": "scripted", "name": "default"},
    "eval": {"lambda_w": 1.0, "lambda_m": 1.0, "judge": "stub", "jobs": 1, "report_dir": str(REPORT_DIR)},
}


def flatten(tree: Mapping, prefix: str = "") -> dict[str, Any]:
    flat = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def env_name(dotted: str) -> str:
    return ENV_PREFIX + dotted.upper().replace(".", "_")


def set_key(tree: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[key]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise ConfigError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


def merge_file(tree: dict, path) -> None:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError(f"config file {path} must hold a mapping")
    for dotted, value in flatten(raw).items():
        set_key(tree, dotted, value)


@dataclass(frozen=True)
class Settings:
    values: dict

    def get(self, dotted: str) -> Any:
        node = self.values
        for key in dotted.split("."):
            if not isinstance(node, Mapping) or key not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[key]
        return node

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Settings":
        values = copy.deepcopy(self.values)
        for dotted, value in overrides.items():
            if value is not None:
                set_key(values, dotted, value)
        return replace(self, values=values)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.values, sort_keys=True, default_flow_style=False, allow_unicode=True)

    def profile(self) -> AgentProfile:
        try:
            profile = load_profile(self.get("prompt.profile"))
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from exc
        return replace(profile, default_language=str(self.get("prompt.default_language")))

    def ablation(self) -> AblationFlags:
        return AblationFlags(
            adaptive_prompt=bool(self.get("engine.ablation.prompt")),
            tool_retrieval=bool(self.get("engine.ablation.retrieval")),
            memory_management=bool(self.get("engine.ablation.memory")),
        )

    def engine_config(self) -> EngineConfig:
        try:
            retry = {ErrorClass(k): int(v) for k, v in self.get("engine.retry").items()}
            return EngineConfig(
                profile=self.profile(),
                max_iterations=int(self.get("engine.max_iterations")),
                retry_limits=retry,
                ablation=self.ablation(),
                tokenizer=get_tokenizer(str(self.get("tokenizer.provider"))),
                retrieval=RetrievalConfig(
                    top_m=int(self.get("retrieval.top_m")),
                    min_retained=int(self.get("retrieval.min_retained")),
                    jump_min_gap=float(self.get("retrieval.jump_min_gap")),
                ),
                memory=MemoryConfig(
                    summarize_threshold=int(self.get("memory.summarize_threshold")),
                    compression_target=tuple(float(x) for x in self.get("memory.compression_target")),
                ),
                backoff_ms=int(self.get("engine.backoff_ms")),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration value: {exc}") from exc


def load_settings(
    config_path=None,
    environ: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> Settings:
    values = copy.deepcopy(DEFAULTS)
    if config_path is not None:
        merge_file(values, config_path)
    environ = os.environ if environ is None else environ
    for dotted in flatten(DEFAULTS):
        raw = environ.get(env_name(dotted))
        if raw is not None:
            try:
                set_key(values, dotted, yaml.safe_load(raw))
            except yaml.YAMLError as exc:
                raise ConfigError(f"{env_name(dotted)} is not a valid value: {exc}") from exc
    return Settings(values).with_overrides(overrides or {})


def parse_assignment(text: str) -> tuple[str, Any]:
    """``key=value`` from the command line; the value is read as YAML."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), yaml.safe_load(raw)
