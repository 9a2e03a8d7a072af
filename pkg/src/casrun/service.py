"""HTTP/WebSocket gateway for the web console and API clients.

Endpoints:
    POST /sessions                  create a session (201)
    POST /sessions/{id}/messages    run one user turn (409 while busy)
    GET  /sessions/{id}/events      SSE backfill of the event log (?after_seq,
                                    ?follow=true to keep streaming live)
    GET  /sessions/{id}/usage       token usage series
    GET  /agents                    bundled agent definitions
    WS   /sessions/{id}/ws          live event stream (backfill + follow)

Sessions are server-side state keyed by session_id; one turn at a time per
session (a second concurrent message gets 409). Event logs persist under
the sessions directory, so past traces stay readable across restarts.
"""

from __future__ import annotations

import asyncio
import os
import queue
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from casrun.backends import BackendError, LiveBackend, ScriptedBackend, load_script
from casrun.config import Config
from casrun.orchestrator import OrchestratorError, run_turn
from casrun.scenarios import (
    SessionRuntime,
    create_runtime,
    default_script_path,
    load_agent_manifest,
)
from casrun.telemetry import (
    EventStore,
    SessionEvent,
    SessionNotFoundError,
    TelemetryRecorder,
    usage_series,
)
from casrun.train_booking import fixed_clock, system_clock
from casrun.types import ContextVariables
from casrun.wire import message_to_dict


class CreateSessionBody(BaseModel):
    scenario: str | None = None
    backend: str = "scripted"
    script: str | None = None
    seed: int = 0
    clock: str | None = None
    context: dict[str, str] | None = None


class MessageBody(BaseModel):
    text: str


@dataclass
class ManagedSession:
    runtime: SessionRuntime
    backend: Any
    recorder: TelemetryRecorder
    busy: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list[queue.Queue] = field(default_factory=list)


class SessionManager:
    """In-memory registry of live sessions plus the persistent event store."""

    def __init__(self, config: Config):
        self.config = config
        self.store = EventStore(config.sessions_dir)
        self._sessions: dict[str, ManagedSession] = {}
        self._lock = threading.Lock()

    def create(self, body: CreateSessionBody) -> ManagedSession:
        scenario = body.scenario or self.config.scenario
        session_id = uuid.uuid4().hex
        clock = system_clock
        if body.clock:
            clock = fixed_clock(datetime.fromisoformat(body.clock))
        try:
            runtime = create_runtime(
                scenario,
                session_id,
                data_dir=self.config.data_dir,
                sessions_dir=self.config.sessions_dir,
                clock=clock,
                seed=body.seed,
                page_size=self.config.page_size,
                context=ContextVariables(body.context) if body.context else None,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        backend = self._build_backend(body, scenario)
        managed = ManagedSession(
            runtime=runtime,
            backend=backend,
            recorder=TelemetryRecorder(self.store, session_id),
        )
        managed.recorder.subscribers.append(
            lambda event: self._fanout(managed, event)
        )
        with self._lock:
            self._sessions[session_id] = managed
        return managed

    def _build_backend(self, body: CreateSessionBody, scenario: str):
        if body.backend == "live":
            api_key = os.environ.get(self.config.api_key_env_name, "")
            if not api_key:
                raise HTTPException(
                    status_code=400,
                    detail=(
                        f"live backend requires the {self.config.api_key_env_name} "
                        "environment variable"
                    ),
                )
            return LiveBackend(self.config.base_url, api_key)
        if body.backend != "scripted":
            raise HTTPException(
                status_code=400, detail=f"unknown backend {body.backend!r}"
            )
        script = body.script or default_script_path(scenario, self.config.data_dir)
        if script is None:
            raise HTTPException(
                status_code=400,
                detail=f"scenario {scenario!r} has no bundled script; pass one",
            )
        try:
            return ScriptedBackend(load_script(script))
        except (OSError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"bad script: {exc}")

    @staticmethod
    def _fanout(managed: ManagedSession, event: SessionEvent) -> None:
        for subscriber in list(managed.subscribers):
            subscriber.put(event)

    def get(self, session_id: str) -> ManagedSession:
        managed = self._sessions.get(session_id)
        if managed is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return managed

    def get_live_or_none(self, session_id: str) -> ManagedSession | None:
        """Live session if present; None when only a persisted trace exists
        (read endpoints keep working across restarts)."""
        managed = self._sessions.get(session_id)
        if managed is None and not self.store.exists(session_id):
            raise HTTPException(status_code=404, detail="unknown session")
        return managed


def _event_json(event: SessionEvent) -> str:
    return event.to_json()


def create_app(config: Config | None = None) -> FastAPI:
    config = config or Config()
    manager = SessionManager(config)
    app = FastAPI(title="casrun", version="0.1.0")
    app.state.manager = manager

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        managed = manager.create(body)
        return {
            "session_id": managed.runtime.session.session_id,
            "active_agent": managed.runtime.session.active_agent,
            "status": managed.runtime.session.status,
        }

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody) -> dict:
        managed = manager.get(session_id)
        if not body.text.strip():
            raise HTTPException(status_code=422, detail="text must be non-empty")
        if not managed.busy.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="session busy")
        try:
            session = managed.runtime.session
            if session.status != "open":
                raise HTTPException(
                    status_code=409, detail=f"session is {session.status}"
                )
            try:
                result = run_turn(
                    session,
                    body.text,
                    backend=managed.backend,
                    registry=managed.runtime.registry,
                    agents=managed.runtime.agents,
                    event_sink=managed.recorder,
                )
            except BackendError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            except OrchestratorError as exc:
                raise HTTPException(status_code=500, detail=str(exc))
            return {
                "session_id": session_id,
                "active_agent": session.active_agent,
                "status": session.status,
                "messages_added": [
                    message_to_dict(m) for m in result.messages_added
                ],
                "handoffs": list(result.handoffs),
                "tool_calls_executed": result.tool_calls_executed,
                "final_text": result.final_text,
            }
        finally:
            managed.busy.release()

    @app.get("/sessions/{session_id}/events")
    def get_events(
        session_id: str, after_seq: int = 0, follow: bool = False
    ) -> StreamingResponse:
        managed = manager.get(session_id)

        def stream():
            try:
                events = manager.store.events(session_id)
            except SessionNotFoundError:
                events = []
            last_seq = after_seq
            for event in events:
                if event.seq > after_seq:
                    last_seq = event.seq
                    yield f"data: {_event_json(event)}\n\n"
            if not follow:
                return
            live: queue.Queue = queue.Queue()
            managed.subscribers.append(live)
            try:
                while True:
                    try:
                        event = live.get(timeout=0.25)
                    except queue.Empty:
                        if managed.runtime.session.status != "open":
                            return
                        continue
                    if event.seq > last_seq:
                        last_seq = event.seq
                        yield f"data: {_event_json(event)}\n\n"
            finally:
                managed.subscribers.remove(live)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/usage")
    def get_usage(session_id: str) -> dict:
        manager.get(session_id)
        try:
            series = usage_series(manager.store, session_id)
        except SessionNotFoundError:
            series = []
        return {
            "session_id": session_id,
            "series": [
                {
                    "call_index": index,
                    "prompt_tokens": prompt,
                    "total_tokens": total,
                }
                for index, prompt, total in series
            ],
        }

    @app.get("/agents")
    def get_agents() -> list[dict]:
        agents_dir = Path(config.data_dir) / "agents"
        result = []
        for manifest in sorted(agents_dir.glob("*.agent.json")):
            agent = load_agent_manifest(manifest)
            result.append(
                {
                    "name": agent.name,
                    "model": agent.model,
                    "tools": list(agent.tool_names),
                }
            )
        return result

    @app.websocket("/sessions/{session_id}/ws")
    async def session_ws(websocket: WebSocket, session_id: str) -> None:
        try:
            managed = manager.get(session_id)
        except HTTPException:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        after_seq = int(websocket.query_params.get("after_seq", 0))
        live: queue.Queue = queue.Queue()
        managed.subscribers.append(live)
        loop = asyncio.get_running_loop()
        try:
            try:
                events = manager.store.events(session_id)
            except SessionNotFoundError:
                events = []
            last_seq = after_seq
            for event in events:
                if event.seq > after_seq:
                    last_seq = event.seq
                    await websocket.send_text(_event_json(event))
            while True:
                try:
                    event = await loop.run_in_executor(
                        None, lambda: live.get(timeout=0.25)
                    )
                except queue.Empty:
                    if managed.runtime.session.status != "open":
                        break
                    continue
                if event.seq > last_seq:
                    last_seq = event.seq
                    await websocket.send_text(_event_json(event))
            await websocket.close()
        except WebSocketDisconnect:
            pass
        finally:
            managed.subscribers.remove(live)

    return app
