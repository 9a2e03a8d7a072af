"""Event store, usage accounting, redundancy detection, export/import."""

import json
import random

import pytest

from casrun.telemetry import (
    EventStore,
    SequenceError,
    SessionEvent,
    SessionNotFoundError,
    TelemetryRecorder,
    detect_redundant_calls,
    export_session,
    import_session,
    usage_series,
    usage_series_csv,
)


def _event(seq, kind="user_msg", payload=None, ts="2024-12-18T14:00:00+00:00"):
    return SessionEvent(seq=seq, timestamp=ts, kind=kind, payload=payload or {})


def _usage_event(seq, prompt, completion):
    return _event(
        seq,
        kind="usage",
        payload={
            "prompt_tokens": prompt,
            "completion_tokens": completion,
            "total_tokens": prompt + completion,
        },
    )


def _tool_call_event(seq, name, arguments):
    return _event(
        seq,
        kind="tool_call",
        payload={"id": f"c{seq}", "name": name, "arguments": json.dumps(arguments)},
    )


class TestEventStore:
    def test_first_user_msg_creates_session(self, tmp_path):
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        assert store.exists("s1")
        header = store.path_for("s1").read_text().splitlines()[0]
        assert json.loads(header) == {"schema_version": 1, "session_id": "s1"}

    def test_non_user_msg_cannot_create_session(self, tmp_path):
        store = EventStore(tmp_path)
        with pytest.raises(SessionNotFoundError):
            store.append("s1", _usage_event(1, 10, 5))

    def test_out_of_order_seq_rejected(self, tmp_path):
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        store.append("s1", _usage_event(2, 10, 5))
        with pytest.raises(SequenceError):
            store.append("s1", _usage_event(2, 10, 5))
        with pytest.raises(SequenceError):
            store.append("s1", _usage_event(1, 10, 5))

    def test_monotonicity_survives_reopen(self, tmp_path):
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        reopened = EventStore(tmp_path)
        with pytest.raises(SequenceError):
            reopened.append("s1", _event(1))
        reopened.append("s1", _event(2, kind="assistant_msg"))

    def test_monotonic_property_random_sequences(self, tmp_path):
        rng = random.Random(5)
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        last = 1
        for _ in range(100):
            candidate = rng.randrange(1, 40)
            if candidate <= last:
                with pytest.raises(SequenceError):
                    store.append("s1", _event(candidate, kind="assistant_msg"))
            else:
                store.append("s1", _event(candidate, kind="assistant_msg"))
                last = candidate
        seqs = [e.seq for e in store.events("s1")]
        assert seqs == sorted(seqs)

    def test_unknown_session_events_raise(self, tmp_path):
        with pytest.raises(SessionNotFoundError):
            EventStore(tmp_path).events("missing")

    def test_unsafe_session_ids_rejected(self, tmp_path):
        store = EventStore(tmp_path)
        with pytest.raises(ValueError):
            store.path_for("../escape")


class TestRecorder:
    def test_assigns_sequence_and_persists(self, tmp_path):
        store = EventStore(tmp_path)
        recorder = TelemetryRecorder(store, "s1", now=lambda: "T0")
        recorder("user_msg", {"message": {"role": "user", "content": "ciao"}})
        recorder("assistant_msg", {"message": {"role": "assistant", "content": "salve"}})
        events = store.events("s1")
        assert [e.seq for e in events] == [1, 2]
        assert events[0].timestamp == "T0"

    def test_resumes_sequence_from_disk(self, tmp_path):
        store = EventStore(tmp_path)
        TelemetryRecorder(store, "s1")("user_msg", {})
        recorder = TelemetryRecorder(store, "s1")
        recorder("assistant_msg", {})
        assert [e.seq for e in store.events("s1")] == [1, 2]

    def test_subscribers_receive_events(self, tmp_path):
        store = EventStore(tmp_path)
        seen = []
        recorder = TelemetryRecorder(store, "s1", subscribers=[seen.append])
        recorder("user_msg", {})
        assert [e.seq for e in seen] == [1]


class TestUsageSeries:
    def test_series_orders_usage_events(self, tmp_path):
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        store.append("s1", _usage_event(2, 2013, 50))
        store.append("s1", _event(3, kind="assistant_msg"))
        store.append("s1", _usage_event(4, 2166, 20))
        assert usage_series(store, "s1") == [(1, 2013, 2063), (2, 2166, 2186)]

    def test_empty_session_yields_empty_series(self, tmp_path):
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        assert usage_series(store, "s1") == []

    def test_csv_export(self, tmp_path):
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        store.append("s1", _usage_event(2, 100, 10))
        assert usage_series_csv(store, "s1") == (
            "call_index,prompt_tokens,total_tokens\n1,100,110\n"
        )


class TestRedundancy:
    def test_unique_calls_not_flagged(self):
        events = [
            _event(1),
            _tool_call_event(2, "search_railway_station", {"query": "Genova"}),
            _tool_call_event(3, "search_railway_station", {"query": "Genova", "page": 2}),
        ]
        assert detect_redundant_calls(events) == []

    def test_exact_repeat_without_user_input_flagged(self):
        events = [
            _event(1),
            _tool_call_event(2, "get_date_time", {}),
            _tool_call_event(3, "get_date_time", {}),
        ]
        flags = detect_redundant_calls(events)
        assert len(flags) == 1
        assert flags[0][0] == 3

    def test_repeat_after_user_input_not_flagged(self):
        events = [
            _event(1),
            _tool_call_event(2, "get_date_time", {}),
            _event(3),
            _tool_call_event(4, "get_date_time", {}),
        ]
        assert detect_redundant_calls(events) == []

    def test_argument_order_is_canonicalized(self):
        events = [
            _event(1),
            _tool_call_event(2, "f", {"a": 1, "b": 2}),
            _event(
                3,
                kind="tool_call",
                payload={"id": "c3", "name": "f", "arguments": '{"b":2,"a":1}'},
            ),
        ]
        assert len(detect_redundant_calls(events)) == 1

    def test_part_lookup_repeat_flagged_across_user_turns(self):
        events = [
            _event(1),
            _tool_call_event(2, "retrieve_part_details", {"device_code": "CNV-NT2024-A"}),
            _event(3),
            _tool_call_event(4, "retrieve_part_details", {"device_code": "cnv-nt2024-a"}),
        ]
        flags = detect_redundant_calls(events)
        assert len(flags) == 1
        assert flags[0][0] == 4
        assert "CNV-NT2024-A" in flags[0][1]

    def test_at_most_one_flag_per_call(self):
        events = [
            _event(1),
            _tool_call_event(2, "retrieve_part_details", {"device_code": "X"}),
            _tool_call_event(3, "retrieve_part_details", {"device_code": "X"}),
        ]
        flags = detect_redundant_calls(events)
        assert [seq for seq, _ in flags] == [3]


class TestExportImport:
    def test_three_events_export_three_lines_plus_header(self, tmp_path):
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        store.append("s1", _usage_event(2, 10, 5))
        store.append("s1", _event(3, kind="assistant_msg"))
        data = export_session(store, "s1")
        lines = data.decode("utf-8").strip().split("\n")
        assert len(lines) == 4
        assert json.loads(lines[0])["schema_version"] == 1

    def test_round_trip_identity(self, tmp_path):
        store = EventStore(tmp_path)
        store.append("s1", _event(1))
        store.append("s1", _usage_event(2, 10, 5))
        session_id, events = import_session(export_session(store, "s1"))
        assert session_id == "s1"
        assert events == store.events("s1")

    def test_export_unknown_session(self, tmp_path):
        with pytest.raises(SessionNotFoundError):
            export_session(EventStore(tmp_path), "missing")
