from __future__ import annotations

import pytest

from skillkit.gateway import (
    AuthError,
    ChatRequest,
    ChatResponse,
    Exhausted,
    MalformedResponse,
    Message,
    RateLimited,
    RetryPolicy,
    ScriptExhausted,
    ScriptedProvider,
    ToolCall,
    ToolSpec,
    TransportError,
    complete,
    extract_json,
    fan_out,
    validate_tool_calls,
)

REQ = ChatRequest(model="m", system="sys")


def text_response(text: str) -> ChatResponse:
    return ChatResponse(text=text)


# --- request/response invariants ----------------------------------------------

def test_request_needs_system_or_messages():
    with pytest.raises(ValueError):
        ChatRequest(model="m")
    ChatRequest(model="m", messages=(Message(role="user", content="hi"),))


def test_response_needs_text_or_tool_calls():
    with pytest.raises(ValueError):
        ChatResponse()
    ChatResponse(tool_calls=(ToolCall(name="f", arguments={}),))


# --- retry behavior ------------------------------------------------------------

def test_complete_retries_transient_then_succeeds():
    provider = ScriptedProvider([RateLimited("slow down"), TransportError("blip"),
                                 text_response("ok")])
    delays: list[float] = []
    response = complete(provider, REQ, RetryPolicy(max_attempts=3, backoff=(0.1, 0.2)),
                        sleep=delays.append)
    assert response.text == "ok"
    assert delays == [0.1, 0.2]
    assert provider.consumed == 3


def test_complete_exhausts_after_max_attempts():
    provider = ScriptedProvider([RateLimited("1"), RateLimited("2"), RateLimited("3")])
    with pytest.raises(Exhausted):
        complete(provider, REQ, RetryPolicy(max_attempts=3), sleep=lambda _: None)


def test_auth_error_is_not_retried():
    provider = ScriptedProvider([AuthError("bad key"), text_response("never reached")])
    with pytest.raises(AuthError):
        complete(provider, REQ, sleep=lambda _: None)
    assert provider.consumed == 1


def test_malformed_response_is_not_retried():
    provider = ScriptedProvider([MalformedResponse("bad json"), text_response("x")])
    with pytest.raises(MalformedResponse):
        complete(provider, REQ, sleep=lambda _: None)


def test_backoff_schedule_clamps_to_last_entry():
    policy = RetryPolicy(max_attempts=5, backoff=(0.5, 1.0))
    assert [policy.delay(i) for i in range(4)] == [0.5, 1.0, 1.0, 1.0]


# --- scripted provider ----------------------------------------------------------

def test_scripted_provider_plays_entries_in_order():
    provider = ScriptedProvider([text_response("a"), text_response("b")])
    assert provider.send(REQ).text == "a"
    assert provider.send(REQ).text == "b"
    assert provider.remaining == 0


def test_scripted_provider_exhaustion_still_records_request():
    provider = ScriptedProvider([text_response("a")])
    provider.send(REQ)
    with pytest.raises(ScriptExhausted):
        provider.send(REQ)
    assert provider.consumed == 1
    assert len(provider.requests) == 2


def test_scripted_provider_is_serial_only():
    assert ScriptedProvider([text_response("x")]).serial_only is True


# --- tool-call validation --------------------------------------------------------

NUMBER_TOOL = ToolSpec(
    name="set_count",
    description="Set a count.",
    parameters={
        "type": "object",
        "properties": {"count": {"type": "integer"}},
        "required": ["count"],
        "additionalProperties": False,
    },
)


def test_valid_tool_call_has_no_schema_errors():
    request = ChatRequest(model="m", system="s", tools=(NUMBER_TOOL,))
    response = ChatResponse(tool_calls=(ToolCall(name="set_count", arguments={"count": 3}),))
    checked = validate_tool_calls(request, response)
    assert checked.tool_calls[0].schema_errors == ()


def test_schema_violations_are_annotated_and_sorted():
    request = ChatRequest(model="m", system="s", tools=(NUMBER_TOOL,))
    response = ChatResponse(tool_calls=(
        ToolCall(name="set_count", arguments={"count": "three", "extra": 1}),))
    checked = validate_tool_calls(request, response)
    errors = checked.tool_calls[0].schema_errors
    assert len(errors) == 2
    assert list(errors) == sorted(errors)


def test_unknown_tool_name_is_a_schema_error():
    request = ChatRequest(model="m", system="s", tools=(NUMBER_TOOL,))
    response = ChatResponse(tool_calls=(ToolCall(name="mystery", arguments={}),))
    checked = validate_tool_calls(request, response)
    assert checked.tool_calls[0].schema_errors


# --- extract_json ------------------------------------------------------------------

def test_extract_json_plain():
    assert extract_json('{"a": 1}') == {"a": 1}


def test_extract_json_fenced():
    assert extract_json('prose\n```json\n{"a": [1, 2]}\n```\nmore prose') == {"a": [1, 2]}


def test_extract_json_bare_fence():
    assert extract_json('```\n[1, 2, 3]\n```') == [1, 2, 3]


def test_extract_json_garbage_raises():
    with pytest.raises(Exception):
        extract_json("not json at all")


# --- fan_out -------------------------------------------------------------------------

def test_fan_out_preserves_call_order():
    results = fan_out(ScriptedProvider([text_response("x")]), [lambda i=i: i * i for i in range(8)],
                      max_workers=4)
    assert results == [i * i for i in range(8)]


def test_fan_out_parallel_provider_keeps_order():
    class Loose:
        serial_only = False
    results = fan_out(Loose(), [lambda i=i: i for i in range(16)], max_workers=8)
    assert results == list(range(16))
