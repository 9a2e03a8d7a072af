"""The agentic run loop.

``run_turn`` drives one user turn: append the user message, render the
active agent's routine as the per-request system message, call the backend,
dispatch any tool calls in order, apply handoffs, and repeat until the model
stops or the iteration limit trips. The session history stores only
user/assistant/tool messages; the system message is injected per request so
a mid-session handoff swaps the prompt while the history stays shared.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from casrun.backends import BackendError
from casrun.routines import render_system_prompt
from casrun.toolkit import ToolRegistry, dispatch_tool_call
from casrun.types import (
    AgentDefinition,
    ContextVariables,
    ConversationHistory,
    Message,
    UsageRecord,
)
from casrun.wire import ChatRequest, message_to_dict

DEFAULT_MAX_TOOL_ITERATIONS = 8

# Telemetry hook: receives (kind, payload) for each session event.
EventSink = Callable[[str, dict], None]


class OrchestratorError(Exception):
    """Base class for turn-loop failures."""


class TurnFailedError(OrchestratorError):
    """The turn could not be completed."""


class ToolIterationLimitError(TurnFailedError):
    """The model kept requesting tools past the per-turn iteration limit."""


class UnknownAgentError(OrchestratorError):
    """A handoff targeted an agent that is not registered."""


@dataclass
class Session:
    """Mutable session aggregate over immutable value types."""

    session_id: str
    active_agent: str
    history: ConversationHistory
    context: ContextVariables = field(default_factory=ContextVariables)
    usage_log: list[UsageRecord] = field(default_factory=list)
    status: str = "open"  # open | completed | failed

    @property
    def total_tokens(self) -> int:
        return sum(usage.total_tokens for usage in self.usage_log)


@dataclass(frozen=True)
class TurnResult:
    """What one user turn produced."""

    messages_added: tuple[Message, ...]
    handoffs: tuple[str, ...]
    tool_calls_executed: int
    final_text: str


def new_session(
    session_id: str,
    active_agent: str,
    context: ContextVariables | None = None,
) -> Session:
    return Session(
        session_id=session_id,
        active_agent=active_agent,
        history=ConversationHistory(session_id),
        context=context or ContextVariables(),
    )


def build_chat_request(
    session: Session,
    agents: Mapping[str, AgentDefinition],
    registry: ToolRegistry,
) -> ChatRequest:
    """Compose the request for the active agent: rendered routine as the
    system message, followed by the shared history."""
    agent = agents.get(session.active_agent)
    if agent is None:
        raise UnknownAgentError(f"active agent not registered: {session.active_agent}")
    system = Message(role="system", content=render_system_prompt(agent.routine, session.context))
    return ChatRequest(
        model=agent.model,
        messages=(system,) + session.history.messages,
        tools=registry.specs_for(agent.tool_names),
        tool_choice="auto",
        temperature=agent.temperature,
    )


def apply_handoff(
    session: Session, target: str, agents: Mapping[str, AgentDefinition]
) -> Session:
    """Switch the active agent; history and context stay untouched.

    An unknown target fails the session and raises UnknownAgentError. A
    handoff to the already-active agent is a recorded no-op switch.
    """
    if target not in agents:
        session.status = "failed"
        raise UnknownAgentError(f"handoff to unknown agent: {target}")
    session.active_agent = target
    return session


def run_turn(
    session: Session,
    user_text: str,
    *,
    backend,
    registry: ToolRegistry,
    agents: Mapping[str, AgentDefinition],
    max_tool_iterations: int = DEFAULT_MAX_TOOL_ITERATIONS,
    event_sink: EventSink | None = None,
) -> TurnResult:
    """Run one user turn to completion.

    Tool dispatch errors are fed back to the model as error tool messages
    and the loop continues. A backend error rolls the history back to the
    pre-turn state and re-raises. Exceeding the tool iteration limit fails
    the session.
    """
    if session.status != "open":
        raise TurnFailedError(f"session is {session.status}, not open")
    if not user_text:
        raise ValueError("user_text must be non-empty")

    def emit(kind: str, payload: dict) -> None:
        if event_sink is not None:
            event_sink(kind, payload)

    saved_history = session.history
    added: list[Message] = []
    handoffs: list[str] = []
    executed = 0
    completes_session = False

    user_message = Message(role="user", content=user_text)
    session.history = session.history.append(user_message)
    added.append(user_message)
    emit("user_msg", {"message": message_to_dict(user_message)})

    rounds = 0
    while True:
        request = build_chat_request(session, agents, registry)
        try:
            response = backend.complete(request)
        except BackendError:
            session.history = saved_history
            raise

        session.usage_log.append(response.usage)
        assistant = response.message
        session.history = session.history.append(assistant)
        added.append(assistant)
        emit("assistant_msg", {"message": message_to_dict(assistant)})
        emit(
            "usage",
            {
                "prompt_tokens": response.usage.prompt_tokens,
                "completion_tokens": response.usage.completion_tokens,
                "total_tokens": response.usage.total_tokens,
            },
        )

        if response.finish_reason == "stop":
            final_text = assistant.content
            break

        rounds += 1
        if rounds > max_tool_iterations:
            session.status = "failed"
            emit("session_end", {"status": "failed", "total_tokens": session.total_tokens})
            raise ToolIterationLimitError(
                f"exceeded {max_tool_iterations} tool iterations in one turn"
            )

        for call in assistant.tool_calls:
            emit(
                "tool_call",
                {"id": call.id, "name": call.name, "arguments": call.arguments},
            )
            result = dispatch_tool_call(registry, call, session.context)
            executed += 1
            tool_message = Message(
                role="tool",
                content=result.content,
                tool_call_id=call.id,
                name=call.name,
            )
            session.history = session.history.append(tool_message)
            added.append(tool_message)
            emit(
                "tool_result",
                {
                    "tool_call_id": result.tool_call_id,
                    "name": call.name,
                    "content": result.content,
                    "is_error": result.is_error,
                    "handoff_target": result.handoff_target,
                },
            )
            if result.handoff_target:
                previous = session.active_agent
                apply_handoff(session, result.handoff_target, agents)
                handoffs.append(result.handoff_target)
                emit("handoff", {"from": previous, "to": result.handoff_target})
            if result.ends_session and not result.is_error:
                completes_session = True

    if completes_session:
        session.status = "completed"
        emit("session_end", {"status": "completed", "total_tokens": session.total_tokens})

    return TurnResult(
        messages_added=tuple(added),
        handoffs=tuple(handoffs),
        tool_calls_executed=executed,
        final_text=final_text,
    )
