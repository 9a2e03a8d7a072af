"""Chat-completions wire protocol: request/response types and codecs.

The encoding is pinned byte-for-byte: compact separators, UTF-8 with
non-ASCII preserved, and a fixed key order (``model``, ``messages``,
``tools``, ``tool_choice``, ``temperature``; message keys ``role``,
``content``, ``tool_calls``, ``tool_call_id``, ``name``). Golden fixtures
in the test suite freeze this contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from casrun.types import (
    Message,
    ParamSpec,
    ToolCall,
    ToolSpec,
    UsageRecord,
    json_compact,
)

FINISH_REASONS = ("stop", "tool_calls")
TOOL_CHOICES = ("auto", "none")


class WireError(Exception):
    """Base class for wire protocol failures."""


class MalformedPayloadError(WireError):
    """Payload is not valid JSON or violates the expected structure."""


class MissingChoicesError(WireError):
    """Response carries no choices entry."""


class UnknownRoleError(WireError):
    """Message carries a role outside system/user/assistant/tool."""


class UsageInvariantError(WireError):
    """Usage block violates total = prompt + completion."""


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request."""

    model: str
    messages: tuple[Message, ...]
    tools: tuple[ToolSpec, ...] = ()
    tool_choice: str = "auto"
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.messages, tuple):
            object.__setattr__(self, "messages", tuple(self.messages))
        if not isinstance(self.tools, tuple):
            object.__setattr__(self, "tools", tuple(self.tools))
        if not self.messages:
            raise ValueError("request messages must be non-empty")
        if self.tool_choice not in TOOL_CHOICES:
            raise ValueError(f"unknown tool_choice: {self.tool_choice!r}")
        for index, message in enumerate(self.messages):
            if message.role == "system" and index != 0:
                raise ValueError("system message allowed only at position 0")


@dataclass(frozen=True)
class ChatResponse:
    """One chat-completion response (a single assistant message)."""

    message: Message
    finish_reason: str
    usage: UsageRecord

    def __post_init__(self) -> None:
        if self.message.role != "assistant":
            raise ValueError("response message must have role assistant")
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"unknown finish_reason: {self.finish_reason!r}")
        if (self.finish_reason == "tool_calls") != bool(self.message.tool_calls):
            raise ValueError(
                "finish_reason tool_calls must match presence of tool calls"
            )


def message_to_dict(message: Message) -> dict[str, Any]:
    """Wire shape of a message, keys in contract order."""
    data: dict[str, Any] = {"role": message.role, "content": message.content}
    if message.tool_calls:
        data["tool_calls"] = [
            {
                "id": call.id,
                "type": "function",
                "function": {"name": call.name, "arguments": call.arguments},
            }
            for call in message.tool_calls
        ]
    if message.tool_call_id is not None:
        data["tool_call_id"] = message.tool_call_id
    if message.name is not None:
        data["name"] = message.name
    return data


def message_from_dict(data: Any) -> Message:
    if not isinstance(data, dict):
        raise MalformedPayloadError("message must be a JSON object")
    role = data.get("role")
    if role not in ("system", "user", "assistant", "tool"):
        raise UnknownRoleError(f"unknown message role: {role!r}")
    calls: list[ToolCall] = []
    for entry in data.get("tool_calls") or []:
        function = entry.get("function") if isinstance(entry, dict) else None
        if not isinstance(function, dict):
            raise MalformedPayloadError("tool call entry missing function object")
        try:
            calls.append(
                ToolCall(
                    id=str(entry.get("id", "")),
                    name=str(function.get("name", "")),
                    arguments=str(function.get("arguments", "{}")),
                )
            )
        except ValueError as exc:
            raise MalformedPayloadError(str(exc)) from exc
    try:
        return Message(
            role=role,
            content=data.get("content") or "",
            tool_calls=tuple(calls),
            tool_call_id=data.get("tool_call_id"),
            name=data.get("name"),
        )
    except ValueError as exc:
        raise MalformedPayloadError(str(exc)) from exc


def tool_spec_to_dict(spec: ToolSpec) -> dict[str, Any]:
    """JSON-Schema flavoured wire shape of a tool declaration."""
    properties: dict[str, Any] = {}
    for param in spec.parameters:
        prop: dict[str, Any] = {"type": param.kind, "description": param.description}
        if param.enum is not None:
            prop["enum"] = list(param.enum)
        properties[param.name] = prop
    return {
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": list(spec.required_names),
            },
        },
    }


def tool_spec_from_dict(data: Any) -> ToolSpec:
    if not isinstance(data, dict) or not isinstance(data.get("function"), dict):
        raise MalformedPayloadError("tool entry missing function object")
    function = data["function"]
    schema = function.get("parameters") or {}
    required = set(schema.get("required") or [])
    params: list[ParamSpec] = []
    for name, prop in (schema.get("properties") or {}).items():
        if not isinstance(prop, dict):
            raise MalformedPayloadError(f"parameter schema for {name!r} must be an object")
        enum = prop.get("enum")
        params.append(
            ParamSpec(
                name=name,
                kind=prop.get("type", "string"),
                description=prop.get("description", ""),
                required=name in required,
                enum=tuple(enum) if enum is not None else None,
            )
        )
    try:
        return ToolSpec(
            name=function.get("name", ""),
            description=function.get("description", ""),
            parameters=tuple(params),
        )
    except ValueError as exc:
        raise MalformedPayloadError(str(exc)) from exc


def encode_request(request: ChatRequest) -> bytes:
    """Encode a request to wire bytes with pinned key order and separators."""
    payload = {
        "model": request.model,
        "messages": [message_to_dict(m) for m in request.messages],
        "tools": [tool_spec_to_dict(t) for t in request.tools],
        "tool_choice": request.tool_choice,
        "temperature": request.temperature,
    }
    return json_compact(payload).encode("utf-8")


def decode_request(data: bytes | str) -> ChatRequest:
    """Decode request wire bytes back into a typed request."""
    payload = _load_json(data)
    messages = payload.get("messages")
    if not isinstance(messages, list) or not messages:
        raise MalformedPayloadError("request must carry a non-empty messages list")
    try:
        return ChatRequest(
            model=str(payload.get("model", "")),
            messages=tuple(message_from_dict(m) for m in messages),
            tools=tuple(tool_spec_from_dict(t) for t in payload.get("tools") or []),
            tool_choice=payload.get("tool_choice", "auto"),
            temperature=float(payload.get("temperature", 0.0)),
        )
    except ValueError as exc:
        raise MalformedPayloadError(str(exc)) from exc


def encode_response(response: ChatResponse) -> bytes:
    """Encode a response in the minimal shape ``decode_response`` reads."""
    payload = {
        "choices": [
            {
                "index": 0,
                "message": message_to_dict(response.message),
                "finish_reason": response.finish_reason,
            }
        ],
        "usage": {
            "prompt_tokens": response.usage.prompt_tokens,
            "completion_tokens": response.usage.completion_tokens,
            "total_tokens": response.usage.total_tokens,
        },
    }
    return json_compact(payload).encode("utf-8")


def decode_response(data: bytes | str) -> ChatResponse:
    """Decode response wire bytes; raises a distinct error kind per defect.

    Reads ``choices[0].message``, ``choices[0].finish_reason`` and ``usage``.
    Extra fields are ignored. A usage block whose total does not equal
    prompt + completion raises UsageInvariantError.
    """
    payload = _load_json(data)
    choices = payload.get("choices")
    if not isinstance(choices, list) or not choices:
        raise MissingChoicesError("response carries no choices")
    first = choices[0]
    if not isinstance(first, dict):
        raise MalformedPayloadError("choices[0] must be an object")
    message = message_from_dict(first.get("message"))
    usage_data = payload.get("usage")
    if not isinstance(usage_data, dict):
        raise MalformedPayloadError("response missing usage block")
    try:
        usage = UsageRecord(
            prompt_tokens=int(usage_data.get("prompt_tokens", 0)),
            completion_tokens=int(usage_data.get("completion_tokens", 0)),
            total_tokens=int(usage_data.get("total_tokens", 0)),
        )
    except ValueError as exc:
        raise UsageInvariantError(str(exc)) from exc
    try:
        return ChatResponse(
            message=message,
            finish_reason=first.get("finish_reason", ""),
            usage=usage,
        )
    except ValueError as exc:
        raise MalformedPayloadError(str(exc)) from exc


def _load_json(data: bytes | str) -> dict[str, Any]:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayloadError(f"payload is not UTF-8: {exc}") from exc
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedPayloadError(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedPayloadError("payload must be a JSON object")
    return payload
