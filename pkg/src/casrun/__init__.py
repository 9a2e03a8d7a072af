"""casrun: a runtime for conversation-routine agents.

Agents are defined by natural-language routine documents plus typed tool
declarations; the orchestrator drives the chat-completion loop, dispatches
tool calls, and executes multi-agent handoffs. A deterministic scripted
backend, a procedure state-machine oracle and per-session telemetry make
full dialogs verifiable offline.
"""

from casrun.types import (
    AgentDefinition,
    ContextVariables,
    ConversationHistory,
    Message,
    ParamSpec,
    ToolCall,
    ToolResult,
    ToolSpec,
    UsageRecord,
)

__all__ = [
    "AgentDefinition",
    "ContextVariables",
    "ConversationHistory",
    "Message",
    "ParamSpec",
    "ToolCall",
    "ToolResult",
    "ToolSpec",
    "UsageRecord",
]

__version__ = "0.1.0"
