"""Chat-completion backends: a live HTTP client and a deterministic
scripted stand-in.

Both expose the same ``complete(request) -> ChatResponse`` surface and the
same error base class, so the orchestrator cannot tell them apart. The
scripted backend consumes exactly one step per call, in order, and is fully
deterministic: identical scripts and request sequences yield identical
response sequences.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import requests

from casrun.types import Message, ToolCall, UsageRecord, json_compact
from casrun.wire import ChatRequest, ChatResponse, decode_response, encode_request

SCRIPT_SUFFIX = ".script.json"


class BackendError(Exception):
    """Base class for backend failures. No partial state is left behind."""


class TransportError(BackendError):
    """HTTP transport failed after exhausting retries."""


class ScriptExhaustedError(BackendError):
    """The scripted backend received more calls than it has steps."""


class ScriptExpectationError(BackendError):
    """A step's expected user text did not match the last user message."""

    def __init__(self, step_index: int, expected: str, actual: str | None):
        super().__init__(
            f"step {step_index}: expected last user message to contain "
            f"{expected!r}, got {actual!r}"
        )
        self.step_index = step_index
        self.expected = expected
        self.actual = actual


@dataclass(frozen=True)
class ScriptStep:
    """One pre-authored backend response, with an optional guard on the
    last user message (substring containment)."""

    response: ChatResponse
    expect_user_contains: str | None = None


class ScriptedBackend:
    """Deterministic backend replaying a fixed list of steps.

    One script instance serves one session; step consumption is serialized
    so concurrent calls cannot skip or double-consume a step.
    """

    def __init__(self, steps: list[ScriptStep] | tuple[ScriptStep, ...]):
        self._steps = tuple(steps)
        self._position = 0
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            if self._position >= len(self._steps):
                raise ScriptExhaustedError(
                    f"script exhausted after {len(self._steps)} steps"
                )
            step = self._steps[self._position]
            if step.expect_user_contains is not None:
                last_user = _last_user_text(request)
                if last_user is None or step.expect_user_contains not in last_user:
                    raise ScriptExpectationError(
                        self._position, step.expect_user_contains, last_user
                    )
            self._position += 1
            return step.response

    def remaining(self) -> int:
        with self._lock:
            return len(self._steps) - self._position


class LiveBackend:
    """HTTP client for an OpenAI-compatible ``/chat/completions`` endpoint.

    Transient transport errors are retried up to ``max_retries`` times with a
    fixed backoff. Non-2xx statuses and decode failures raise TransportError
    / wire errors; the caller sees no partial state.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str,
        *,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff_seconds: float = 1.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self._api_key = api_key
        self._timeout = timeout
        self._max_retries = max_retries
        self._backoff_seconds = backoff_seconds
        self._session = session or requests.Session()

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = encode_request(request)
        headers = {
            "Authorization": f"Bearer {self._api_key}",
            "Content-Type": "application/json",
        }
        url = f"{self.base_url}/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self._max_retries + 1):
            try:
                http_response = self._session.post(
                    url, data=body, headers=headers, timeout=self._timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                if attempt < self._max_retries:
                    time.sleep(self._backoff_seconds)
                continue
            if http_response.status_code >= 500 and attempt < self._max_retries:
                last_error = TransportError(
                    f"server error {http_response.status_code}"
                )
                time.sleep(self._backoff_seconds)
                continue
            if http_response.status_code != 200:
                raise TransportError(
                    f"chat completion failed with status "
                    f"{http_response.status_code}: {http_response.text[:200]}"
                )
            return decode_response(http_response.content)
        raise TransportError(f"transport failed after retries: {last_error}")


def _last_user_text(request: ChatRequest) -> str | None:
    for message in reversed(request.messages):
        if message.role == "user":
            return message.content
    return None


def script_step_from_dict(data: dict[str, Any], index: int) -> ScriptStep:
    """Build one step from its JSON form.

    ``response.message`` follows the wire message shape except that tool
    call ``arguments`` may be given as a JSON object for readability; it is
    re-encoded to compact argument text on load. ``synthetic_usage`` supplies
    the step's token accounting.
    """
    try:
        response_data = data["response"]
        message_data = dict(response_data["message"])
        usage_data = data["synthetic_usage"]
    except KeyError as exc:
        raise ValueError(f"script step {index}: missing field {exc}") from exc

    calls = []
    for entry in message_data.get("tool_calls") or []:
        arguments = entry.get("arguments", "{}")
        if isinstance(arguments, (dict, list)):
            arguments = json_compact(arguments)
        calls.append(
            ToolCall(id=entry["id"], name=entry["name"], arguments=arguments)
        )
    message = Message(
        role=message_data.get("role", "assistant"),
        content=message_data.get("content", ""),
        tool_calls=tuple(calls),
    )
    usage = UsageRecord.of(
        int(usage_data["prompt_tokens"]), int(usage_data["completion_tokens"])
    )
    response = ChatResponse(
        message=message,
        finish_reason=response_data.get(
            "finish_reason", "tool_calls" if calls else "stop"
        ),
        usage=usage,
    )
    return ScriptStep(
        response=response,
        expect_user_contains=data.get("expect_user_contains"),
    )


def load_script(path: str | Path) -> list[ScriptStep]:
    """Load a ``.script.json`` file: a JSON list of step objects."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError(f"{path}: script file must contain a JSON list")
    return [script_step_from_dict(step, i) for i, step in enumerate(raw)]
