"""Run configuration: validated loading with defaults, overrides, and ablations."""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field, fields
from typing import Any

import yaml

from icrl.instructions import SCHEDULES
from icrl.prompting import SEGMENTS, TASK_KINDS

METHODS = ("icrl", "cot", "long_cot", "best_of_n", "self_refine", "reflexion")

ABLATIONS = ("zero_rewards", "short_context", "exploration_only", "exploitation_only", "no_ee")


class ConfigError(ValueError):
    """Named configuration problem: unknown key, bad type, or invalid enum."""


@dataclass
class PolicySettings:
    backend: str = "http"  # http | scripted
    model: str = "gpt-4.1"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "ICRL_API_KEY"
    temperature: float = 1.0
    max_output_tokens: int = 2048
    requests_per_minute: int = 60
    timeout_s: float = 120.0
    max_retries: int = 5
    context_char_limit: int | None = None
    script_path: str | None = None


@dataclass
class JudgeSettings:
    backend: str = "oracle"  # oracle | http | scripted
    model: str = "gpt-4.1"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "ICRL_API_KEY"
    temperature: float = 0.0
    max_output_tokens: int = 512
    requests_per_minute: int = 60
    timeout_s: float = 120.0
    max_retries: int = 5
    script_path: str | None = None


@dataclass
class RunConfig:
    task: str
    episodes: int = 50
    schedule: str = "preset"
    method: str = "icrl"
    buffer_capacity: int | None = None
    zero_rewards: bool = False
    prompt_layout: list[str] | None = None
    seed: int = 0
    best_of_n: int = 50
    world: str | None = None
    problems: str | None = None
    env_command: list[str] | None = None
    policy: PolicySettings = field(default_factory=PolicySettings)
    judge: JudgeSettings = field(default_factory=JudgeSettings)

    def to_dict(self) -> dict:
        def encode(value: Any) -> Any:
            if hasattr(value, "__dataclass_fields__"):
                return {f.name: encode(getattr(value, f.name)) for f in fields(value)}
            return value

        return encode(self)


def _suggest(key: str, known: list[str]) -> str:
    close = difflib.get_close_matches(key, known, n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _check_keys(data: dict, known: list[str], context: str) -> None:
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown {context} key {key!r}{_suggest(key, known)}")


def _coerce_section(cls, data: dict, context: str):
    known = [f.name for f in fields(cls)]
    _check_keys(data, known, context)
    return cls(**data)


def validate_config(config: RunConfig) -> RunConfig:
    if config.task not in TASK_KINDS:
        raise ConfigError(f"task must be one of {TASK_KINDS}, got {config.task!r}")
    if config.schedule not in SCHEDULES:
        raise ConfigError(f"schedule must be one of {SCHEDULES}, got {config.schedule!r}")
    if config.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {config.method!r}")
    if config.episodes < 1:
        raise ConfigError(f"episodes must be >= 1, got {config.episodes}")
    if config.buffer_capacity is not None and config.buffer_capacity < 1:
        raise ConfigError(f"buffer_capacity must be >= 1 or null, got {config.buffer_capacity}")
    if config.best_of_n < 1:
        raise ConfigError(f"best_of_n must be >= 1, got {config.best_of_n}")
    if config.prompt_layout is not None and sorted(config.prompt_layout) != sorted(SEGMENTS):
        raise ConfigError(
            f"prompt_layout must be a permutation of {SEGMENTS}, got {config.prompt_layout}"
        )
    if config.task == "textworld" and not (config.world or config.problems or config.env_command):
        raise ConfigError("textworld runs need a world (or a problems file of world names)")
    return config


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    known = [f.name for f in fields(RunConfig)]
    _check_keys(data, known, "config")
    if "task" not in data:
        raise ConfigError("config must set a task (game24, writing, or textworld)")
    policy = _coerce_section(PolicySettings, data.pop("policy", {}) or {}, "policy")
    judge = _coerce_section(JudgeSettings, data.pop("judge", {}) or {}, "judge")
    try:
        config = RunConfig(policy=policy, judge=judge, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate_config(config)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` / ``section.key=value`` overrides onto a config dict."""
    result = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"override must look like key=value, got {override!r}")
        path, raw_value = override.split("=", 1)
        value = yaml.safe_load(raw_value)
        parts = path.split(".")
        if len(parts) == 1:
            result[parts[0]] = value
        elif len(parts) == 2:
            section = result.setdefault(parts[0], {})
            if not isinstance(section, dict):
                raise ConfigError(f"override {path!r} does not address a section")
            section[parts[1]] = value
        else:
            raise ConfigError(f"override path too deep: {path!r}")
    return result


def parse_config(path: str, overrides: list[str] | None = None) -> RunConfig:
    """Load a YAML (or JSON) config file, apply overrides, and validate."""
    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file must hold a mapping, got {type(data).__name__}")
    data = apply_overrides(data, overrides or [])
    return config_from_dict(data)


def ablation_variant(base: RunConfig, name: str) -> RunConfig:
    """Derive one of the five standard ablations from a base config."""
    data = base.to_dict()
    data["method"] = "icrl"
    if name == "zero_rewards":
        data["zero_rewards"] = True
    elif name == "short_context":
        data["buffer_capacity"] = 3
    elif name in ("exploration_only", "exploitation_only", "no_ee"):
        data["schedule"] = name
    else:
        raise ConfigError(f"unknown ablation {name!r}, expected one of {ABLATIONS}")
    return config_from_dict(data)
