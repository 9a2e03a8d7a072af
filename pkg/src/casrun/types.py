"""Core domain types shared across the runtime.

Messages, tool declarations, tool calls/results, agent definitions and
context variables are immutable value objects. Mutation happens only by
producing new values (e.g. ``ConversationHistory.append`` returns a new
history); instances are safe to share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping

if TYPE_CHECKING:  # pragma: no cover
    from casrun.routines import RoutineDoc

ROLES = ("system", "user", "assistant", "tool")
PARAM_KINDS = ("string", "integer", "number", "boolean")

_TOOL_NAME_RE = re.compile(r"^[A-Za-z0-9_]+$")

# Python types accepted for each declared parameter kind. bool is checked
# first at validation time because bool is a subclass of int.
_KIND_TYPES: dict[str, tuple[type, ...]] = {
    "string": (str,),
    "integer": (int,),
    "number": (int, float),
    "boolean": (bool,),
}


def json_compact(value: Any) -> str:
    """Serialize a value as compact JSON (no spaces, UTF-8 text preserved)."""
    return json.dumps(value, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class ToolCall:
    """One function invocation requested by the model.

    ``arguments`` is the JSON-encoded argument object exactly as carried on
    the wire; it is parsed into a typed mapping at dispatch time so that a
    malformed payload surfaces as a tool error the model can recover from,
    not as a decode crash.
    """

    id: str
    name: str
    arguments: str = "{}"

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("tool call id must be non-empty")
        if not _TOOL_NAME_RE.match(self.name):
            raise ValueError(f"invalid tool name: {self.name!r}")

    @classmethod
    def from_values(cls, call_id: str, name: str, **values: Any) -> "ToolCall":
        """Build a call from keyword argument values (encoded compactly)."""
        return cls(id=call_id, name=name, arguments=json_compact(values))

    def parse_arguments(self) -> dict[str, Any]:
        """Decode the argument text. Raises ValueError if it is not a JSON object."""
        try:
            parsed = json.loads(self.arguments)
        except json.JSONDecodeError as exc:
            raise ValueError(f"arguments are not valid JSON: {exc}") from exc
        if not isinstance(parsed, dict):
            raise ValueError("arguments must be a JSON object")
        return parsed

    def canonical_arguments(self) -> str:
        """Key-sorted compact rendering used to compare calls for equality."""
        try:
            parsed = self.parse_arguments()
        except ValueError:
            return self.arguments
        return json.dumps(parsed, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class Message:
    """A single dialog turn: system, user, assistant or tool message."""

    role: str
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown message role: {self.role!r}")
        if not isinstance(self.tool_calls, tuple):
            object.__setattr__(self, "tool_calls", tuple(self.tool_calls))
        if self.tool_calls and self.role != "assistant":
            raise ValueError("tool_calls are only allowed on assistant messages")
        if (self.tool_call_id is not None) != (self.role == "tool"):
            raise ValueError("tool_call_id must be present exactly on tool messages")
        if self.name is not None and self.role != "tool":
            raise ValueError("name is only allowed on tool messages")
        ids = [call.id for call in self.tool_calls]
        if len(ids) != len(set(ids)):
            raise ValueError("tool call ids must be unique within a message")


@dataclass(frozen=True)
class ConversationHistory:
    """Append-only ordered message log; the model's short-term memory.

    A system message may only ever sit at position 0. Session histories
    managed by the orchestrator contain no system message at all (the active
    agent's rendered routine is injected per request instead).
    """

    session_id: str
    messages: tuple[Message, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.messages, tuple):
            object.__setattr__(self, "messages", tuple(self.messages))
        self._validate(self.messages)

    @staticmethod
    def _validate(messages: tuple[Message, ...]) -> None:
        known_call_ids: dict[str, int] = {}
        for index, message in enumerate(messages):
            if message.role == "system" and index != 0:
                raise ValueError("system message allowed only at position 0")
            for call in message.tool_calls:
                if call.id in known_call_ids:
                    raise ValueError(f"duplicate tool call id in history: {call.id}")
                known_call_ids[call.id] = 0
            if message.role == "tool":
                if message.tool_call_id not in known_call_ids:
                    raise ValueError(
                        f"tool message references unknown call id: {message.tool_call_id}"
                    )
                if known_call_ids[message.tool_call_id]:
                    raise ValueError(
                        f"tool call already answered: {message.tool_call_id}"
                    )
                known_call_ids[message.tool_call_id] = 1

    def append(self, message: Message) -> "ConversationHistory":
        """Return a new history extended with ``message``; never mutates."""
        return ConversationHistory(self.session_id, self.messages + (message,))

    def last_user_text(self) -> str | None:
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        return None

    def __len__(self) -> int:
        return len(self.messages)


@dataclass(frozen=True)
class ParamSpec:
    """Schema of one declared tool parameter."""

    name: str
    kind: str
    description: str = ""
    required: bool = False
    enum: tuple[Any, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in PARAM_KINDS:
            raise ValueError(f"unknown parameter kind: {self.kind!r}")
        if self.enum is not None:
            if not isinstance(self.enum, tuple):
                object.__setattr__(self, "enum", tuple(self.enum))
            for literal in self.enum:
                if not self._matches_kind(literal):
                    raise ValueError(
                        f"enum literal {literal!r} does not match kind {self.kind}"
                    )

    def _matches_kind(self, value: Any) -> bool:
        if isinstance(value, bool):
            return self.kind == "boolean"
        return isinstance(value, _KIND_TYPES[self.kind])


@dataclass(frozen=True)
class ToolSpec:
    """Machine-readable declaration of a callable tool."""

    name: str
    description: str
    parameters: tuple[ParamSpec, ...] = ()
    returns_description: str = ""

    def __post_init__(self) -> None:
        if not _TOOL_NAME_RE.match(self.name):
            raise ValueError(f"invalid tool name: {self.name!r}")
        if not isinstance(self.parameters, tuple):
            object.__setattr__(self, "parameters", tuple(self.parameters))
        names = [p.name for p in self.parameters]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate parameter names in tool {self.name}")

    @property
    def required_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters if p.required)

    def param(self, name: str) -> ParamSpec | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class ToolResult:
    """Outcome of one dispatched tool call.

    ``handoff_target`` names the agent that should take over the session.
    ``ends_session`` is a runtime signal: a successful result with the flag
    set marks the session completed once the current turn finishes.
    """

    tool_call_id: str
    content: str
    is_error: bool = False
    handoff_target: str | None = None
    ends_session: bool = False


@dataclass(frozen=True)
class AgentDefinition:
    """A named agent: routine document, tool set and model configuration."""

    name: str
    routine: "RoutineDoc"
    tool_names: tuple[str, ...] = ()
    model: str = "gpt-4o-mini"
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("agent name must be non-empty")
        if not isinstance(self.tool_names, tuple):
            object.__setattr__(self, "tool_names", tuple(self.tool_names))
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ContextVariables:
    """Flat text key/value pairs shared across agents in a session."""

    entries: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        snapshot = dict(self.entries)
        for key, value in snapshot.items():
            if not isinstance(key, str) or not isinstance(value, str):
                raise ValueError("context variables must map text keys to text values")
        object.__setattr__(self, "entries", snapshot)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.entries.get(key, default)

    def with_entry(self, key: str, value: str) -> "ContextVariables":
        merged = dict(self.entries)
        merged[key] = value
        return ContextVariables(merged)


@dataclass(frozen=True)
class UsageRecord:
    """Token accounting for one backend call."""

    prompt_tokens: int
    completion_tokens: int
    total_tokens: int

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")
        if self.total_tokens != self.prompt_tokens + self.completion_tokens:
            raise ValueError(
                "total_tokens must equal prompt_tokens + completion_tokens "
                f"({self.total_tokens} != {self.prompt_tokens} + {self.completion_tokens})"
            )

    @classmethod
    def of(cls, prompt_tokens: int, completion_tokens: int) -> "UsageRecord":
        return cls(prompt_tokens, completion_tokens, prompt_tokens + completion_tokens)
