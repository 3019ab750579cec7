"""Provider-neutral chat gateway.

Every model interaction in the package goes through ChatRequest/ChatResponse
and a provider object with a single send() method. Two providers ship here:
a scripted one for offline runs and tests, and an HTTP one speaking the
OpenAI-style chat-completions wire format. Retry behaviour, tool-argument
validation, and bounded fan-out live at this layer so the engines above
never care which provider is in play.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Protocol, Sequence, TypeVar

import httpx
import jsonschema

REASONING_EFFORTS = ("low", "medium", "high")

T = TypeVar("T")


class GatewayError(Exception):
    pass


class AuthError(GatewayError):
    """Bad or missing credentials. Never retried."""


class RateLimited(GatewayError):
    """Provider asked us to back off. Retried per policy."""


class TransportError(GatewayError):
    """Network or server-side failure. Retried per policy."""


class MalformedResponse(GatewayError):
    """The provider payload could not be mapped onto ChatResponse."""


class Exhausted(GatewayError):
    """All retry attempts failed."""


class ScriptExhausted(GatewayError):
    """A scripted provider ran past the end of its script."""


class MalformedModelOutput(GatewayError):
    """Model content could not be parsed by the caller, even after a re-ask."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str = ""
    parameters: Mapping[str, Any] | None = None


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: Mapping[str, Any] = field(default_factory=dict)
    id: str = ""
    schema_errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class Message:
    """One conversation turn. role is one of user, assistant, tool."""

    role: str
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system: str = ""
    messages: tuple[Message, ...] = ()
    tools: tuple[ToolSpec, ...] = ()
    temperature: float = 1.0
    reasoning_effort: str = "medium"

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        object.__setattr__(self, "tools", tuple(self.tools))
        if not self.system and not self.messages:
            raise ValueError("request needs a system prompt or at least one message")
        if self.reasoning_effort not in REASONING_EFFORTS:
            raise ValueError(
                f"reasoning_effort must be one of {REASONING_EFFORTS}, "
                f"got {self.reasoning_effort!r}")


@dataclass(frozen=True)
class ChatResponse:
    text: str | None = None
    tool_calls: tuple[ToolCall, ...] = ()
    finish_reason: str = "stop"

    def __post_init__(self):
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))
        if self.text is None and not self.tool_calls:
            raise ValueError("response must carry text or tool calls")


@dataclass(frozen=True)
class RetryPolicy:
    """max_attempts counts the first try; backoff[i] sleeps before retry i."""

    max_attempts: int = 3
    backoff: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")

    def delay(self, retry_index: int) -> float:
        if not self.backoff:
            return 0.0
        return self.backoff[min(retry_index, len(self.backoff) - 1)]


class Provider(Protocol):
    def send(self, request: ChatRequest) -> ChatResponse: ...


def validate_tool_calls(request: ChatRequest, response: ChatResponse) -> ChatResponse:
    """Annotate each tool call with schema errors against the declared tools.

    Validation failures are recorded on the call rather than raised, so a
    tool loop can hand the problem back to the model in-band.
    """
    if not response.tool_calls:
        return response
    specs = {t.name: t for t in request.tools}
    checked = []
    for call in response.tool_calls:
        errors: list[str] = []
        spec = specs.get(call.name)
        if spec is None:
            known = ", ".join(specs) or "(no tools declared)"
            errors.append(f"unknown tool {call.name!r}; declared tools: {known}")
        elif spec.parameters is not None:
            validator = jsonschema.Draft202012Validator(spec.parameters)
            for err in validator.iter_errors(dict(call.arguments)):
                errors.append(err.message)
        checked.append(replace(call, schema_errors=tuple(sorted(errors))))
    return replace(response, tool_calls=tuple(checked))


def complete(
    provider: Provider,
    request: ChatRequest,
    policy: RetryPolicy | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatResponse:
    """Send a request with retries on transient failures.

    RateLimited and TransportError are retried up to policy.max_attempts
    total attempts, then wrapped in Exhausted. Auth and parse failures
    propagate immediately. Tool calls in the response are validated against
    the request's declared tool schemas.
    """
    policy = policy if policy is not None else RetryPolicy()
    last: GatewayError | None = None
    for attempt in range(policy.max_attempts):
        try:
            response = provider.send(request)
        except (RateLimited, TransportError) as exc:
            last = exc
            if attempt + 1 < policy.max_attempts:
                sleep(policy.delay(attempt))
            continue
        return validate_tool_calls(request, response)
    raise Exhausted(
        f"gave up after {policy.max_attempts} attempts: {last}") from last


def fan_out(
    provider: Provider,
    calls: Sequence[Callable[[], T]],
    max_workers: int,
) -> list[T]:
    """Run independent provider-bound callables, results in input order.

    Providers that consume an ordered script declare serial_only, and for
    those the calls run sequentially so reply order stays deterministic.
    Everything else runs on a bounded thread pool.
    """
    if max_workers < 1:
        raise ValueError("max_workers must be positive")
    if max_workers == 1 or getattr(provider, "serial_only", False) or len(calls) <= 1:
        return [call() for call in calls]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(call) for call in calls]
        return [f.result() for f in futures]


class ScriptedProvider:
    """Replays a fixed script of responses (or raises scripted exceptions).

    Records every request, including the one that runs off the end of the
    script. Thread-safe; send order is serialized internally, and the
    serial_only flag tells orchestration to keep call order deterministic.
    """

    serial_only = True

    def __init__(self, script: Sequence[ChatResponse | Exception]):
        if not script:
            raise ValueError("script must not be empty")
        self._script = list(script)
        self._cursor = 0
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    @property
    def consumed(self) -> int:
        return self._cursor

    @property
    def remaining(self) -> int:
        return len(self._script) - self._cursor

    def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            if self._cursor >= len(self._script):
                raise ScriptExhausted(
                    f"script of {len(self._script)} responses exhausted at request "
                    f"{len(self.requests)}")
            entry = self._script[self._cursor]
            self._cursor += 1
        if isinstance(entry, Exception):
            raise entry
        return entry


_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def extract_json(text: str) -> Any:
    """Parse JSON from model text, tolerating a surrounding markdown fence.

    Raises ValueError with the parse error message when nothing parses.
    """
    candidates = [text.strip()]
    fence = _FENCE_RE.search(text)
    if fence:
        candidates.insert(0, fence.group(1).strip())
    last_error = "empty text"
    for candidate in candidates:
        if not candidate:
            continue
        try:
            return json.loads(candidate)
        except json.JSONDecodeError as exc:
            last_error = str(exc)
    raise ValueError(f"not valid JSON: {last_error}")


class OpenAIChatProvider:
    """HTTP provider speaking the OpenAI-style chat-completions format.

    The credential is read from the environment variable named in the
    config entry at send time, never stored in the object.
    """

    serial_only = False

    def __init__(
        self,
        model: str,
        endpoint: str,
        api_key_env: str,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.model = model
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def send(self, request: ChatRequest) -> ChatResponse:
        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise AuthError(
                f"environment variable {self.api_key_env!r} is unset or empty")
        payload = self._payload(request)
        try:
            http_response = self._client.post(
                self.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if http_response.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials ({http_response.status_code})")
        if http_response.status_code == 429:
            raise RateLimited("provider returned 429")
        if http_response.status_code >= 500:
            raise TransportError(f"provider returned {http_response.status_code}")
        if http_response.status_code != 200:
            raise GatewayError(
                f"provider returned {http_response.status_code}: {http_response.text[:200]}")
        return self._parse(http_response)

    def _payload(self, request: ChatRequest) -> dict:
        messages: list[dict] = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        for msg in request.messages:
            entry: dict[str, Any] = {"role": msg.role, "content": msg.content}
            if msg.tool_calls:
                entry["tool_calls"] = [
                    {
                        "id": call.id or f"call_{i}",
                        "type": "function",
                        "function": {
                            "name": call.name,
                            "arguments": json.dumps(dict(call.arguments)),
                        },
                    }
                    for i, call in enumerate(msg.tool_calls)
                ]
            if msg.tool_call_id:
                entry["tool_call_id"] = msg.tool_call_id
            messages.append(entry)
        payload: dict[str, Any] = {
            "model": request.model or self.model,
            "messages": messages,
            "temperature": request.temperature,
            "reasoning_effort": request.reasoning_effort,
        }
        if request.tools:
            payload["tools"] = [
                {
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters or {"type": "object"},
                    },
                }
                for t in request.tools
            ]
        return payload

    def _parse(self, http_response: httpx.Response) -> ChatResponse:
        try:
            doc = http_response.json()
            choice = doc["choices"][0]
            message = choice["message"]
            calls = []
            for raw in message.get("tool_calls") or []:
                fn = raw["function"]
                calls.append(ToolCall(
                    name=fn["name"],
                    arguments=json.loads(fn.get("arguments") or "{}"),
                    id=raw.get("id", ""),
                ))
            return ChatResponse(
                text=message.get("content"),
                tool_calls=tuple(calls),
                finish_reason=choice.get("finish_reason", "stop"),
            )
        except (KeyError, IndexError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise MalformedResponse(f"could not parse provider payload: {exc}") from exc
