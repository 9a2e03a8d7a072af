"""Non-interactive scripted dialog replay.

Drives a full session from a script file and an inputs file, recording
telemetry along the way. Succeeds (exit code 0) only when every script
expectation matched, the script was fully consumed and the session reached
completed status; any mismatch reports the first point of divergence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from casrun.backends import BackendError, ScriptedBackend, load_script
from casrun.orchestrator import OrchestratorError, TurnResult, run_turn
from casrun.scenarios import SessionRuntime, create_runtime
from casrun.telemetry import EventStore, TelemetryRecorder
from casrun.train_booking import fixed_clock, system_clock


@dataclass
class ReplayOutcome:
    """Result of one replay run."""

    exit_code: int
    transcript: str
    runtime: SessionRuntime
    turn_results: list[TurnResult] = field(default_factory=list)
    error: str | None = None


def load_inputs(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "inputs" not in data or not isinstance(data["inputs"], list):
        raise ValueError(f"{path}: inputs file must carry an 'inputs' list")
    return data


def run_replay(
    script_path: str | Path,
    inputs_path: str | Path,
    *,
    sessions_dir: str | Path = "sessions",
    data_dir: str | Path | None = None,
    page_size: int | None = None,
) -> ReplayOutcome:
    """Replay a scripted dialog end to end."""
    steps = load_script(script_path)
    spec = load_inputs(inputs_path)

    clock = system_clock
    if spec.get("clock"):
        clock = fixed_clock(datetime.fromisoformat(spec["clock"]))

    runtime = create_runtime(
        spec.get("scenario", "booking"),
        spec.get("session_id", Path(inputs_path).stem),
        data_dir=data_dir,
        sessions_dir=sessions_dir,
        clock=clock,
        seed=int(spec.get("seed", 0)),
        **({"page_size": page_size} if page_size is not None else {}),
    )
    backend = ScriptedBackend(steps)
    store = EventStore(sessions_dir)
    recorder = TelemetryRecorder(store, runtime.session.session_id)

    lines: list[str] = []
    results: list[TurnResult] = []

    def fail(message: str) -> ReplayOutcome:
        lines.append(f"REPLAY FAILED: {message}")
        return ReplayOutcome(
            exit_code=1,
            transcript="\n".join(lines) + "\n",
            runtime=runtime,
            turn_results=results,
            error=message,
        )

    for user_text in spec["inputs"]:
        lines.append(f"USER: {user_text}")
        try:
            result = run_turn(
                runtime.session,
                user_text,
                backend=backend,
                registry=runtime.registry,
                agents=runtime.agents,
                event_sink=recorder,
            )
        except (BackendError, OrchestratorError) as exc:
            return fail(str(exc))
        results.append(result)
        for message in result.messages_added:
            if message.role == "assistant" and message.tool_calls:
                for call in message.tool_calls:
                    lines.append(f"AGENT: {call.name}({call.arguments})")
            elif message.role == "assistant" and message.content:
                lines.append(f"AGENT: {message.content}")
        for target in result.handoffs:
            lines.append(f"HANDOFF -> {target}")

    if backend.remaining() > 0:
        return fail(f"script not fully consumed: {backend.remaining()} steps left")
    if runtime.session.status != "completed":
        return fail(f"session ended with status {runtime.session.status!r}")

    return ReplayOutcome(
        exit_code=0,
        transcript="\n".join(lines) + "\n",
        runtime=runtime,
        turn_results=results,
    )
