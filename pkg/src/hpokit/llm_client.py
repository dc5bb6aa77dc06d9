"""Chat-completion transport for OpenAI-compatible endpoints.

Also provides a scripted offline double (canned responses, recorded
requests) so every prompting code path runs in CI without a key, and a
thread-safe cost ledger fed by provider-reported token usage.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import httpx

from hpokit.proposers import ScriptExhausted

__all__ = [
    "Message",
    "CompletionRequest",
    "ToolCallData",
    "CompletionResponse",
    "CostLedger",
    "UnknownModel",
    "LLMError",
    "AuthError",
    "RateLimited",
    "ServerError",
    "HTTPClient",
    "ScriptedClient",
    "scripted_client",
    "client_from_env",
    "estimate_tokens",
    "DEFAULT_PRICES",
]


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad role {self.role!r}")
        if self.content is None:
            raise ValueError("content must not be null")


@dataclass(frozen=True)
class ToolCallData:
    name: str
    arguments: Mapping[str, object]

    def __post_init__(self):
        object.__setattr__(self, "arguments", dict(self.arguments))


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    tools: tuple[Mapping, ...] | None = None
    max_tokens: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if self.tools is not None:
            object.__setattr__(self, "tools", tuple(dict(t) for t in self.tools))
        if not self.messages or self.messages[-1].role != "user":
            raise ValueError("messages must end with a user message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def payload(self) -> dict:
        body: dict = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
        }
        if self.tools is not None:
            body["tools"] = [dict(t) for t in self.tools]
            body["tool_choice"] = "auto"
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    tool_call: ToolCallData | None = None
    tokens_in: int = 0
    tokens_out: int = 0
    finish_reason: str = "stop"
    usage_estimated: bool = False


def estimate_tokens(text: str) -> int:
    """Fallback when the provider reports no usage: ceil(chars / 4)."""
    return math.ceil(len(text) / 4)


class UnknownModel(KeyError):
    pass


# USD per 1K tokens (input, output); override per deployment.
DEFAULT_PRICES: dict[str, tuple[float, float]] = {
    "gpt-4-1106-preview": (0.01, 0.03),
    "gpt-4": (0.03, 0.06),
    "gpt-3.5-turbo": (0.0015, 0.002),
}


class CostLedger:
    """Running token and currency totals; additions are atomic."""

    def __init__(self, prices: Mapping[str, tuple[float, float]] | None = None):
        self.prices = dict(prices if prices is not None else DEFAULT_PRICES)
        self.tokens_in = 0
        self.tokens_out = 0
        self.total = 0.0
        self._lock = threading.Lock()

    def record(self, model: str, tokens_in: int, tokens_out: int) -> float:
        try:
            p_in, p_out = self.prices[model]
        except KeyError:
            raise UnknownModel(model) from None
        cost = tokens_in / 1000.0 * p_in + tokens_out / 1000.0 * p_out
        with self._lock:
            self.tokens_in += tokens_in
            self.tokens_out += tokens_out
            self.total += cost
        return cost


class LLMError(Exception):
    """Transport failure; carries the provider payload verbatim."""

    def __init__(self, message: str, payload: object = None, status: int | None = None):
        self.payload = payload
        self.status = status
        super().__init__(message)


class AuthError(LLMError):
    pass


class RateLimited(LLMError):
    pass


class ServerError(LLMError):
    pass


RETRY_BASE_DELAY = 1.0
RETRY_FACTOR = 2.0
MAX_ATTEMPTS = 5


class HTTPClient:
    """Blocking client for /chat/completions on an OpenAI-compatible server.

    Rate limits and 5xx responses are retried with exponential backoff
    (1s, 2s, 4s, 8s; five attempts total). Auth failures are not retried.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._sleep = sleep

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        url = f"{self.base_url}/chat/completions"
        body = req.payload()
        delay = RETRY_BASE_DELAY
        last_exc: LLMError | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt > 0:
                self._sleep(delay)
                delay *= RETRY_FACTOR
            try:
                resp = self._http.post(url, json=body)
            except httpx.HTTPError as exc:
                last_exc = ServerError(f"transport error: {exc}", payload=str(exc))
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"auth failed ({resp.status_code})", payload=resp.text, status=resp.status_code)
            if resp.status_code == 429:
                last_exc = RateLimited("rate limited", payload=resp.text, status=429)
                continue
            if resp.status_code >= 500:
                last_exc = ServerError(f"server error {resp.status_code}", payload=resp.text, status=resp.status_code)
                continue
            if resp.status_code >= 400:
                raise LLMError(f"request rejected ({resp.status_code})", payload=resp.text, status=resp.status_code)
            return self._parse(resp.json(), req)
        assert last_exc is not None
        raise last_exc

    @staticmethod
    def _parse(data: Mapping, req: CompletionRequest) -> CompletionResponse:
        choice = data["choices"][0]
        msg = choice.get("message", {})
        text = msg.get("content") or ""
        tool_call = None
        calls = msg.get("tool_calls")
        if calls:
            fn = calls[0].get("function", {})
            args = fn.get("arguments", "{}")
            if isinstance(args, str):
                args = json.loads(args)
            tool_call = ToolCallData(name=fn.get("name", ""), arguments=args)
        usage = data.get("usage") or {}
        estimated = False
        tokens_in = usage.get("prompt_tokens")
        tokens_out = usage.get("completion_tokens")
        if tokens_in is None or tokens_out is None:
            tokens_in = sum(estimate_tokens(m.content) for m in req.messages)
            tokens_out = estimate_tokens(text)
            estimated = True
        return CompletionResponse(
            text=text,
            tool_call=tool_call,
            tokens_in=int(tokens_in),
            tokens_out=int(tokens_out),
            finish_reason=choice.get("finish_reason", "stop"),
            usage_estimated=estimated,
        )


class ScriptedClient:
    """Offline double: canned response n for call n; every request recorded."""

    def __init__(self, responses: Sequence[CompletionResponse | str]):
        self.responses: list[CompletionResponse] = []
        for r in responses:
            if isinstance(r, str):
                r = CompletionResponse(text=r, tokens_out=estimate_tokens(r), usage_estimated=True)
            self.responses.append(r)
        self.requests: list[CompletionRequest] = []

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        self.requests.append(req)
        n = len(self.requests)
        if n > len(self.responses):
            raise ScriptExhausted(f"call {n} beyond {len(self.responses)} canned responses")
        resp = self.responses[n - 1]
        if resp.tokens_in == 0 and resp.usage_estimated:
            est_in = sum(estimate_tokens(m.content) for m in req.messages)
            resp = CompletionResponse(
                text=resp.text,
                tool_call=resp.tool_call,
                tokens_in=est_in,
                tokens_out=resp.tokens_out,
                finish_reason=resp.finish_reason,
                usage_estimated=True,
            )
        return resp


def scripted_client(responses: Sequence[CompletionResponse | str]) -> ScriptedClient:
    return ScriptedClient(responses)


def client_from_env(env: Mapping[str, str] = os.environ) -> tuple[HTTPClient, str]:
    """Build a client from LLM_API_KEY / LLM_BASE_URL / LLM_MODEL."""
    try:
        key = env["LLM_API_KEY"]
    except KeyError:
        raise AuthError("LLM_API_KEY is not set") from None
    base = env.get("LLM_BASE_URL", "https://api.openai.com/v1")
    model = env.get("LLM_MODEL", "gpt-4-1106-preview")
    return HTTPClient(base_url=base, api_key=key), model
