"""YAML run configuration and provider construction.

A config file declares named model providers plus defaults for the
extraction and judging pipelines. Scripted providers replay canned
responses from a JSON file, which is how every offline run works; the
openai_chat kind talks to a real chat-completions endpoint. Any provider
can additionally record the requests it sees to a JSONL file for later
inspection.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .extraction import ExtractionConfig
from .gateway import (
    AuthError,
    ChatRequest,
    ChatResponse,
    MalformedResponse,
    OpenAIChatProvider,
    Provider,
    RateLimited,
    ScriptedProvider,
    ToolCall,
    TransportError,
)
from .judge import JudgeConfig
from .store import SkillBudget


class ConfigError(Exception):
    pass


PROVIDER_KINDS = ("scripted", "openai_chat")


@dataclass(frozen=True)
class ProviderSpec:
    kind: str
    script: str | None = None
    record_to: str | None = None
    endpoint: str = ""
    api_key_env: str = "OPENAI_API_KEY"
    model: str = ""
    timeout: float = 120.0

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise ConfigError(
                f"unknown provider kind {self.kind!r}; expected one of "
                f"{', '.join(PROVIDER_KINDS)}")
        if self.kind == "scripted" and not self.script:
            raise ConfigError("scripted providers need a 'script' path")
        if self.kind == "openai_chat" and not self.endpoint:
            raise ConfigError("openai_chat providers need an 'endpoint'")


@dataclass(frozen=True)
class AppConfig:
    providers: Mapping[str, ProviderSpec] = field(default_factory=dict)
    extraction: Mapping[str, object] = field(default_factory=dict)
    judge: Mapping[str, object] = field(default_factory=dict)
    seed: int = 0
    base_dir: Path = Path(".")


_PROVIDER_KEYS = {
    "kind", "script", "record_to", "endpoint", "api_key_env", "model", "timeout",
}


def _provider_spec(provider_id: str, raw: object) -> ProviderSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"provider {provider_id!r} must be a mapping")
    unknown = set(raw) - _PROVIDER_KEYS
    if unknown:
        raise ConfigError(
            f"provider {provider_id!r} has unknown keys: {sorted(unknown)}")
    if "kind" not in raw:
        raise ConfigError(f"provider {provider_id!r} is missing 'kind'")
    return ProviderSpec(
        kind=raw["kind"],
        script=raw.get("script"),
        record_to=raw.get("record_to"),
        endpoint=raw.get("endpoint", ""),
        api_key_env=raw.get("api_key_env", "OPENAI_API_KEY"),
        model=raw.get("model", ""),
        timeout=float(raw.get("timeout", 120.0)),
    )


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    known = {"providers", "extraction", "judge", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys: {sorted(unknown)}")
    providers_raw = raw.get("providers", {})
    if not isinstance(providers_raw, dict):
        raise ConfigError(f"{path}: 'providers' must be a mapping")
    providers = {
        provider_id: _provider_spec(provider_id, spec)
        for provider_id, spec in providers_raw.items()
    }
    for section in ("extraction", "judge"):
        if section in raw and not isinstance(raw[section], dict):
            raise ConfigError(f"{path}: {section!r} must be a mapping")
    return AppConfig(
        providers=providers,
        extraction=raw.get("extraction", {}),
        judge=raw.get("judge", {}),
        seed=int(raw.get("seed", 0)),
        base_dir=path.parent,
    )


_SCRIPT_ERRORS = {
    "rate_limited": RateLimited,
    "transport": TransportError,
    "auth": AuthError,
    "malformed": MalformedResponse,
}


def load_script(path: str | Path) -> list[ChatResponse | Exception]:
    """Parse a scripted-provider response file.

    The file is a JSON array; each entry is an object with exactly one of
      text        -> plain text reply
      tool_calls  -> [{"name": ..., "arguments": {...}, "id": ...?}]
      error       -> one of rate_limited, transport, auth, malformed
    """
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"script file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in script {path}: {exc}")
    if not isinstance(entries, list):
        raise ConfigError(f"script {path}: top level must be an array")
    script: list[ChatResponse | Exception] = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"script {path}: entry {i} must be an object")
        keys = set(entry) & {"text", "tool_calls", "error"}
        if len(keys) != 1:
            raise ConfigError(
                f"script {path}: entry {i} needs exactly one of "
                "'text', 'tool_calls', 'error'")
        if "text" in entry:
            script.append(ChatResponse(text=str(entry["text"])))
        elif "tool_calls" in entry:
            calls = [
                ToolCall(
                    name=c["name"],
                    arguments=c.get("arguments", {}),
                    id=c.get("id", f"call-{i}-{j}"),
                )
                for j, c in enumerate(entry["tool_calls"])
            ]
            script.append(ChatResponse(tool_calls=tuple(calls)))
        else:
            kind = entry["error"]
            if kind not in _SCRIPT_ERRORS:
                raise ConfigError(
                    f"script {path}: entry {i} has unknown error kind {kind!r}")
            message = entry.get("message", f"scripted {kind} error")
            script.append(_SCRIPT_ERRORS[kind](message))
    return script


def request_to_dict(request: ChatRequest) -> dict:
    return {
        "model": request.model,
        "system": request.system,
        "messages": [
            {
                "role": m.role,
                "content": m.content,
                "tool_calls": [
                    {"id": c.id, "name": c.name, "arguments": dict(c.arguments)}
                    for c in m.tool_calls
                ],
                "tool_call_id": m.tool_call_id,
            }
            for m in request.messages
        ],
        "tools": [t.name for t in request.tools],
        "temperature": request.temperature,
        "reasoning_effort": request.reasoning_effort,
    }


class RecordingProvider:
    """Wraps a provider and appends every request to a JSONL file."""

    def __init__(self, inner: Provider, path: str | Path):
        self._inner = inner
        self._path = Path(path)
        self._lock = threading.Lock()

    @property
    def serial_only(self) -> bool:
        return bool(getattr(self._inner, "serial_only", False))

    @property
    def inner(self) -> Provider:
        return self._inner

    def send(self, request: ChatRequest) -> ChatResponse:
        line = json.dumps(request_to_dict(request), ensure_ascii=False)
        with self._lock, self._path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return self._inner.send(request)


def build_provider(config: AppConfig, provider_id: str) -> Provider:
    spec = config.providers.get(provider_id)
    if spec is None:
        declared = ", ".join(sorted(config.providers)) or "(none)"
        raise ConfigError(
            f"undeclared model provider {provider_id!r}; "
            f"declared providers: {declared}")
    if spec.kind == "scripted":
        script_path = config.base_dir / spec.script
        provider: Provider = ScriptedProvider(load_script(script_path))
    else:
        provider = OpenAIChatProvider(
            model=spec.model or provider_id,
            endpoint=spec.endpoint,
            api_key_env=spec.api_key_env,
            timeout=spec.timeout,
        )
    if spec.record_to:
        provider = RecordingProvider(provider, config.base_dir / spec.record_to)
    return provider


def extraction_config(
    config: AppConfig, model: str, guidance: str | None = None
) -> ExtractionConfig:
    """Materialise extraction defaults from the config's extraction section."""
    section = config.extraction
    max_total = section.get("max_total_chars")
    try:
        budget = SkillBudget(
            max_skills=int(section.get("max_skills", 1)),
            max_skill_chars=int(section.get("max_skill_chars", 3000)),
            max_total_chars=None if max_total is None else int(max_total),
        )
        return ExtractionConfig(
            max_patterns=int(section.get("max_patterns", 3)),
            group_size=int(section.get("group_size", 10)),
            budget=budget,
            guidance=guidance,
            extractor_model=model,
            temperature=float(section.get("temperature", 1.0)),
            reasoning_effort=str(section.get("reasoning_effort", "medium")),
            concurrency=int(section.get("concurrency", 8)),
            synthesis_turn_cap=int(section.get("turn_cap", 20)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad extraction settings: {exc}") from exc


def judge_config(config: AppConfig, model: str) -> JudgeConfig:
    section = config.judge
    descriptions = section.get("domain_descriptions")
    if descriptions is not None and not isinstance(descriptions, dict):
        raise ConfigError("judge.domain_descriptions must be a mapping")
    try:
        return JudgeConfig(
            model=model,
            votes=int(section.get("votes", 9)),
            seed=int(section.get("seed", config.seed)),
            temperature=float(section.get("temperature", 1.0)),
            reasoning_effort=str(section.get("reasoning_effort", "medium")),
            concurrency=int(section.get("concurrency", 8)),
            domain_descriptions=descriptions,
        )
    except ValueError as exc:
        raise ConfigError(f"bad judge settings: {exc}") from exc
