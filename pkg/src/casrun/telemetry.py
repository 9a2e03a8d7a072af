"""Append-only per-session event log, token accounting and redundant-call
detection.

Storage is one JSONL file per session under a sessions directory. The first
line is a schema header; every following line is one event with a strictly
increasing sequence number. Events are flushed to disk before the append
returns, so a crash mid-turn loses at most the event being written.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable

from casrun.types import json_compact

SCHEMA_VERSION = 1

EVENT_KINDS = (
    "user_msg",
    "assistant_msg",
    "tool_call",
    "tool_result",
    "handoff",
    "usage",
    "session_end",
)


class TelemetryError(Exception):
    """Base class for event-log failures."""


class SessionNotFoundError(TelemetryError):
    """No event log exists for the requested session."""


class SequenceError(TelemetryError):
    """An appended event would break strict sequence monotonicity."""


@dataclass(frozen=True)
class SessionEvent:
    """One logged event."""

    seq: int
    timestamp: str
    kind: str
    payload: dict[str, Any]

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {self.kind!r}")
        if self.seq < 1:
            raise ValueError("seq must be >= 1")

    def to_json(self) -> str:
        return json_compact(
            {
                "seq": self.seq,
                "timestamp": self.timestamp,
                "kind": self.kind,
                "payload": self.payload,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "SessionEvent":
        data = json.loads(line)
        return cls(
            seq=int(data["seq"]),
            timestamp=str(data["timestamp"]),
            kind=str(data["kind"]),
            payload=dict(data["payload"]),
        )


class EventStore:
    """Per-session JSONL files under one root directory.

    One writer per session (the orchestrator turn loop); concurrent readers
    are safe because files only ever grow by whole lines.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._last_seq: dict[str, int] = {}
        self._lock = threading.Lock()

    def path_for(self, session_id: str) -> Path:
        if not session_id or "/" in session_id or session_id.startswith("."):
            raise ValueError(f"unusable session id: {session_id!r}")
        return self.root / f"{session_id}.events.jsonl"

    def exists(self, session_id: str) -> bool:
        return self.path_for(session_id).exists()

    def append(self, session_id: str, event: SessionEvent) -> None:
        """Append one event; durable before return.

        The first event of a session must be a ``user_msg`` (it creates the
        log). Events must arrive with strictly increasing sequence numbers.
        """
        with self._lock:
            path = self.path_for(session_id)
            creating = not path.exists()
            if creating and event.kind != "user_msg":
                raise SessionNotFoundError(
                    f"no session {session_id!r}; only a user_msg event may create one"
                )
            last = self._scan_last_seq(session_id, path)
            if event.seq <= last:
                raise SequenceError(
                    f"event seq {event.seq} is not greater than last seq {last}"
                )
            with open(path, "a", encoding="utf-8") as handle:
                if creating:
                    handle.write(
                        json_compact(
                            {"schema_version": SCHEMA_VERSION, "session_id": session_id}
                        )
                        + "\n"
                    )
                handle.write(event.to_json() + "\n")
                handle.flush()
                os.fsync(handle.fileno())
            self._last_seq[session_id] = event.seq

    def _scan_last_seq(self, session_id: str, path: Path) -> int:
        if session_id in self._last_seq:
            return self._last_seq[session_id]
        if not path.exists():
            return 0
        last = 0
        for event in self._read_events(path):
            last = event.seq
        self._last_seq[session_id] = last
        return last

    def events(self, session_id: str) -> list[SessionEvent]:
        path = self.path_for(session_id)
        if not path.exists():
            raise SessionNotFoundError(f"no session {session_id!r}")
        return list(self._read_events(path))

    @staticmethod
    def _read_events(path: Path) -> Iterable[SessionEvent]:
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline()
            if header:
                head = json.loads(header)
                if head.get("schema_version") != SCHEMA_VERSION:
                    raise TelemetryError(
                        f"unsupported schema version in {path.name}: "
                        f"{head.get('schema_version')!r}"
                    )
            for line in handle:
                if line.strip():
                    yield SessionEvent.from_json(line)

    def session_ids(self) -> list[str]:
        return sorted(
            p.name[: -len(".events.jsonl")]
            for p in self.root.glob("*.events.jsonl")
        )


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class TelemetryRecorder:
    """Orchestrator event sink bound to one session: assigns sequence
    numbers and timestamps, persists through an EventStore, and forwards
    each stored event to optional live subscribers."""

    def __init__(
        self,
        store: EventStore,
        session_id: str,
        *,
        now: Callable[[], str] = _utc_now_iso,
        subscribers: list[Callable[[SessionEvent], None]] | None = None,
    ):
        self._store = store
        self._session_id = session_id
        self._now = now
        self._seq = 0
        if store.exists(session_id):
            events = store.events(session_id)
            self._seq = events[-1].seq if events else 0
        self.subscribers: list[Callable[[SessionEvent], None]] = subscribers or []

    def __call__(self, kind: str, payload: dict[str, Any]) -> SessionEvent:
        self._seq += 1
        event = SessionEvent(
            seq=self._seq, timestamp=self._now(), kind=kind, payload=payload
        )
        self._store.append(self._session_id, event)
        for subscriber in list(self.subscribers):
            subscriber(event)
        return event


def usage_series(
    store: EventStore, session_id: str
) -> list[tuple[int, int, int]]:
    """Ordered ``(backend_call_index, prompt_tokens, total_tokens)`` rows,
    one per usage event."""
    rows = []
    for event in store.events(session_id):
        if event.kind == "usage":
            rows.append(
                (
                    len(rows) + 1,
                    int(event.payload["prompt_tokens"]),
                    int(event.payload["total_tokens"]),
                )
            )
    return rows


def usage_series_csv(store: EventStore, session_id: str) -> str:
    lines = ["call_index,prompt_tokens,total_tokens"]
    for index, prompt, total in usage_series(store, session_id):
        lines.append(f"{index},{prompt},{total}")
    return "\n".join(lines) + "\n"


def _canonical_arguments(raw: str) -> str:
    try:
        parsed = json.loads(raw)
    except (TypeError, json.JSONDecodeError):
        return str(raw)
    return json.dumps(parsed, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def detect_redundant_calls(
    events: Iterable[SessionEvent],
) -> list[tuple[int, str]]:
    """Flag wasteful tool calls.

    Two rules, both conservative to avoid false positives:
    - an exact repeat: same tool name and canonicalized arguments as an
      earlier call with no user message in between;
    - a part-details lookup for a device code already retrieved earlier in
      the session, regardless of intervening user input.
    At most one flag is raised per call.
    """
    flags: list[tuple[int, str]] = []
    seen_since_user: dict[tuple[str, str], int] = {}
    retrieved_codes: set[str] = set()
    for event in events:
        if event.kind == "user_msg":
            seen_since_user.clear()
            continue
        if event.kind != "tool_call":
            continue
        name = str(event.payload.get("name", ""))
        arguments = str(event.payload.get("arguments", ""))
        key = (name, _canonical_arguments(arguments))
        flagged = False
        if key in seen_since_user:
            flags.append(
                (
                    event.seq,
                    f"repeated call to {name} with identical arguments and no "
                    "new user input",
                )
            )
            flagged = True
        else:
            seen_since_user[key] = event.seq
        if name == "retrieve_part_details":
            try:
                code = str(json.loads(arguments).get("device_code", "")).strip().upper()
            except (json.JSONDecodeError, AttributeError):
                code = ""
            if code and code in retrieved_codes and not flagged:
                flags.append(
                    (event.seq, f"part details for {code} already retrieved")
                )
            retrieved_codes.add(code)
    return flags


def export_session(store: EventStore, session_id: str) -> bytes:
    """The session log as JSONL bytes: schema header line plus one JSON
    object per event in sequence order."""
    path = store.path_for(session_id)
    if not path.exists():
        raise SessionNotFoundError(f"no session {session_id!r}")
    return path.read_bytes()


def import_session(data: bytes) -> tuple[str, list[SessionEvent]]:
    """Inverse of export_session; returns (session_id, events)."""
    lines = data.decode("utf-8").split("\n")
    if not lines or not lines[0].strip():
        raise TelemetryError("export is empty")
    header = json.loads(lines[0])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise TelemetryError(
            f"unsupported schema version: {header.get('schema_version')!r}"
        )
    events = [SessionEvent.from_json(line) for line in lines[1:] if line.strip()]
    return str(header.get("session_id", "")), events
