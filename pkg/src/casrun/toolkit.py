"""Tool registry and typed dispatch.

Dispatch never raises: unknown tools, unparseable arguments, schema
violations and handler crashes all come back as error results so the model
can read the reason and self-correct.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Callable

from casrun.types import ContextVariables, ToolCall, ToolResult, ToolSpec

ToolHandler = Callable[[dict[str, Any], ContextVariables], "ToolResult | str"]


@dataclass(frozen=True)
class RegisteredTool:
    spec: ToolSpec
    handler: ToolHandler


class ToolRegistry:
    """Name-unique collection of tool declarations with their handlers."""

    def __init__(self) -> None:
        self._tools: dict[str, RegisteredTool] = {}

    def register(self, spec: ToolSpec, handler: ToolHandler) -> None:
        if spec.name in self._tools:
            raise ValueError(f"tool already registered: {spec.name}")
        self._tools[spec.name] = RegisteredTool(spec, handler)

    def get(self, name: str) -> RegisteredTool | None:
        return self._tools.get(name)

    def names(self) -> tuple[str, ...]:
        return tuple(self._tools)

    def specs_for(self, names) -> tuple[ToolSpec, ...]:
        specs = []
        for name in names:
            tool = self._tools.get(name)
            if tool is None:
                raise KeyError(f"tool not registered: {name}")
            specs.append(tool.spec)
        return tuple(specs)

    def __contains__(self, name: str) -> bool:
        return name in self._tools


def validate_arguments(spec: ToolSpec, values: dict[str, Any]) -> list[str]:
    """Check argument values against the declared schema.

    Returns a list of human-readable problems: missing required fields,
    unexpected fields, type mismatches and enum violations.
    """
    problems: list[str] = []
    for required in spec.required_names:
        if required not in values:
            problems.append(f"missing required parameter '{required}'")
    for name, value in values.items():
        param = spec.param(name)
        if param is None:
            problems.append(f"unexpected parameter '{name}'")
            continue
        if not _kind_matches(param.kind, value):
            problems.append(
                f"parameter '{name}' must be of type {param.kind}, "
                f"got {type(value).__name__}"
            )
            continue
        if param.enum is not None and value not in param.enum:
            allowed = ", ".join(repr(v) for v in param.enum)
            problems.append(
                f"parameter '{name}' must be one of [{allowed}], got {value!r}"
            )
    return problems


def _kind_matches(kind: str, value: Any) -> bool:
    if isinstance(value, bool):
        return kind == "boolean"
    if kind == "string":
        return isinstance(value, str)
    if kind == "integer":
        return isinstance(value, int)
    if kind == "number":
        return isinstance(value, (int, float))
    if kind == "boolean":
        return False
    return False


def dispatch_tool_call(
    registry: ToolRegistry, call: ToolCall, ctx: ContextVariables
) -> ToolResult:
    """Resolve, validate and execute one tool call.

    Always returns a ToolResult; failures carry ``is_error=True`` and a
    reason the model can act on.
    """
    def error(reason: str) -> ToolResult:
        return ToolResult(tool_call_id=call.id, content=reason, is_error=True)

    tool = registry.get(call.name)
    if tool is None:
        return error(f"unknown tool '{call.name}'")
    try:
        values = call.parse_arguments()
    except ValueError as exc:
        return error(f"invalid arguments for '{call.name}': {exc}")
    problems = validate_arguments(tool.spec, values)
    if problems:
        return error(f"invalid arguments for '{call.name}': " + "; ".join(problems))
    try:
        outcome = tool.handler(values, ctx)
    except Exception as exc:  # tool bugs must not crash the turn loop
        return error(f"tool '{call.name}' failed: {exc}")
    if isinstance(outcome, ToolResult):
        return replace(outcome, tool_call_id=call.id)
    return ToolResult(tool_call_id=call.id, content=str(outcome))
