"""Core type invariants."""

import pytest

from casrun.types import (
    ContextVariables,
    ConversationHistory,
    Message,
    ParamSpec,
    ToolCall,
    ToolSpec,
    UsageRecord,
)


class TestMessage:
    def test_tool_calls_only_on_assistant(self):
        call = ToolCall.from_values("c1", "get_date_time")
        Message(role="assistant", tool_calls=(call,))
        with pytest.raises(ValueError):
            Message(role="user", tool_calls=(call,))

    def test_tool_call_id_exactly_on_tool_role(self):
        Message(role="tool", content="ok", tool_call_id="c1")
        with pytest.raises(ValueError):
            Message(role="tool", content="ok")
        with pytest.raises(ValueError):
            Message(role="user", content="hi", tool_call_id="c1")

    def test_name_only_on_tool_role(self):
        with pytest.raises(ValueError):
            Message(role="assistant", content="x", name="fn")

    def test_duplicate_call_ids_rejected(self):
        calls = (
            ToolCall.from_values("c1", "a"),
            ToolCall.from_values("c1", "b"),
        )
        with pytest.raises(ValueError):
            Message(role="assistant", tool_calls=calls)

    def test_unknown_role_rejected(self):
        with pytest.raises(ValueError):
            Message(role="owner", content="x")


class TestToolCall:
    def test_parse_arguments_roundtrip(self):
        call = ToolCall.from_values("c1", "search_railway_station", query="Genova", page=2)
        assert call.parse_arguments() == {"query": "Genova", "page": 2}

    def test_parse_arguments_rejects_non_object(self):
        call = ToolCall(id="c1", name="x", arguments="[1,2]")
        with pytest.raises(ValueError):
            call.parse_arguments()

    def test_parse_arguments_rejects_bad_json(self):
        call = ToolCall(id="c1", name="x", arguments="{broken")
        with pytest.raises(ValueError):
            call.parse_arguments()

    def test_canonical_arguments_sorts_keys(self):
        a = ToolCall(id="c1", name="x", arguments='{"b":1,"a":2}')
        b = ToolCall(id="c2", name="x", arguments='{"a":2,"b":1}')
        assert a.canonical_arguments() == b.canonical_arguments()


class TestConversationHistory:
    def test_append_returns_new_value(self):
        history = ConversationHistory("s1")
        extended = history.append(Message(role="user", content="ciao"))
        assert len(history) == 0
        assert len(extended) == 1

    def test_system_only_first(self):
        history = ConversationHistory("s1").append(Message(role="user", content="a"))
        with pytest.raises(ValueError):
            history.append(Message(role="system", content="late"))
        ConversationHistory(
            "s2", (Message(role="system", content="s"), Message(role="user", content="u"))
        )

    def test_tool_message_must_answer_prior_call(self):
        history = ConversationHistory("s1").append(Message(role="user", content="a"))
        with pytest.raises(ValueError):
            history.append(
                Message(role="tool", content="x", tool_call_id="nope", name="f")
            )
        call = ToolCall.from_values("c9", "get_date_time")
        history = history.append(Message(role="assistant", tool_calls=(call,)))
        history = history.append(
            Message(role="tool", content="x", tool_call_id="c9", name="get_date_time")
        )
        # answering the same call twice is rejected
        with pytest.raises(ValueError):
            history.append(
                Message(role="tool", content="y", tool_call_id="c9", name="get_date_time")
            )

    def test_history_prefix_preserved_across_appends(self):
        history = ConversationHistory("s1")
        first = history.append(Message(role="user", content="a"))
        second = first.append(Message(role="assistant", content="b"))
        assert second.messages[: len(first.messages)] == first.messages


class TestToolSpec:
    def test_duplicate_parameters_rejected(self):
        with pytest.raises(ValueError):
            ToolSpec(
                name="x",
                description="",
                parameters=(
                    ParamSpec("a", "string"),
                    ParamSpec("a", "integer"),
                ),
            )

    def test_enum_literals_must_match_kind(self):
        with pytest.raises(ValueError):
            ParamSpec("cls", "string", enum=(1, 2))
        ParamSpec("cls", "string", enum=("1st", "2nd"))

    def test_required_names(self):
        spec = ToolSpec(
            name="x",
            description="",
            parameters=(
                ParamSpec("a", "string", required=True),
                ParamSpec("b", "integer"),
            ),
        )
        assert spec.required_names == ("a",)


class TestContextVariables:
    def test_values_must_be_text(self):
        with pytest.raises(ValueError):
            ContextVariables({"k": 1})

    def test_with_entry_is_persistent(self):
        ctx = ContextVariables({"a": "1"})
        updated = ctx.with_entry("b", "2")
        assert ctx.get("b") is None
        assert updated.get("b") == "2"


class TestUsageRecord:
    def test_total_must_add_up(self):
        with pytest.raises(ValueError):
            UsageRecord(10, 5, 16)
        assert UsageRecord.of(10, 5).total_tokens == 15

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            UsageRecord(-1, 0, -1)
