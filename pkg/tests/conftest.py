from __future__ import annotations

from typing import Callable

from hypothesis import settings

from skillkit.gateway import ChatRequest, ChatResponse

settings.register_profile("repo", deadline=None, max_examples=100)
settings.load_profile("repo")


class FunctionProvider:
    """Provider whose replies come from a plain function of the request.

    Declares serial_only so fan_out keeps call order deterministic, and
    keeps every request it saw for later assertions.
    """

    serial_only = True

    def __init__(self, fn: Callable[[ChatRequest], ChatResponse]):
        self.fn = fn
        self.requests: list[ChatRequest] = []

    def send(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        return self.fn(request)
