"""Command line interface.

    agent serve           run the HTTP/WebSocket gateway
    agent repl            interactive terminal session
    agent replay          non-interactive scripted dialog replay
    agent validate-trace  check a report's step sequence against a manual
    agent emit-flowchart  render a manual as a Mermaid flowchart
    agent export-usage    dump a session's token usage series as CSV
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime
from pathlib import Path

from casrun.backends import (
    BackendError,
    LiveBackend,
    ScriptedBackend,
    load_script,
)
from casrun.config import Config, load_config
from casrun.orchestrator import OrchestratorError, run_turn
from casrun.procedure import (
    ProcedureParseError,
    emit_flowchart,
    extract_report_steps,
    parse_procedure,
    validate_trace,
)
from casrun.replay import run_replay
from casrun.scenarios import create_runtime, default_script_path
from casrun.telemetry import (
    EventStore,
    SessionNotFoundError,
    TelemetryRecorder,
    usage_series_csv,
)
from casrun.train_booking import fixed_clock, system_clock

DIM = "\033[2m"
RESET = "\033[0m"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agent", description="Conversation-routine agent runtime"
    )
    parser.add_argument("--config", help="path to a JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP/WebSocket gateway")
    serve.add_argument("--scenario", help="default scenario for new sessions")

    repl = sub.add_parser("repl", help="interactive terminal session")
    repl.add_argument("--scenario", help="scenario name or manifest path")
    repl.add_argument(
        "--backend", choices=("live", "scripted"), default="scripted"
    )
    repl.add_argument("--script", help="script file for the scripted backend")
    repl.add_argument("--seed", type=int, default=0)
    repl.add_argument("--clock", help="ISO datetime to freeze the clock at")

    replay = sub.add_parser("replay", help="replay a scripted dialog")
    replay.add_argument("--script", required=True)
    replay.add_argument("--inputs", required=True)

    validate = sub.add_parser(
        "validate-trace", help="validate a report against a procedure manual"
    )
    validate.add_argument("--procedure", required=True)
    validate.add_argument("--report", required=True)

    flowchart = sub.add_parser(
        "emit-flowchart", help="render a procedure manual as Mermaid"
    )
    flowchart.add_argument("--procedure", required=True)
    flowchart.add_argument("--out", help="output .mmd path (default: stdout)")

    usage = sub.add_parser("export-usage", help="export a usage series as CSV")
    usage.add_argument("--session-id", required=True)
    usage.add_argument("--out", help="output .csv path (default: stdout)")

    return parser


def _load_config(args: argparse.Namespace) -> Config:
    config = load_config(args.config)
    scenario = getattr(args, "scenario", None)
    if scenario:
        config.scenario = scenario
    return config


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from casrun.service import create_app

    config = _load_config(args)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def cmd_repl(args: argparse.Namespace) -> int:
    config = _load_config(args)
    clock = system_clock
    if args.clock:
        clock = fixed_clock(datetime.fromisoformat(args.clock))
    session_id = f"repl-{os.getpid()}"
    runtime = create_runtime(
        config.scenario,
        session_id,
        data_dir=config.data_dir,
        sessions_dir=config.sessions_dir,
        clock=clock,
        seed=args.seed,
        page_size=config.page_size,
    )
    if args.backend == "live":
        api_key = os.environ.get(config.api_key_env_name, "")
        if not api_key:
            print(f"error: set {config.api_key_env_name} for the live backend")
            return 2
        backend = LiveBackend(config.base_url, api_key)
    else:
        script = args.script or default_script_path(config.scenario, config.data_dir)
        if script is None:
            print("error: no script available; pass --script")
            return 2
        backend = ScriptedBackend(load_script(script))
    store = EventStore(config.sessions_dir)
    recorder = TelemetryRecorder(store, session_id)

    print(f"session {session_id} | agent: {runtime.session.active_agent} | /quit to exit")
    while True:
        try:
            line = input("> ")
        except EOFError:
            line = "/quit"
        if line.strip() == "/quit":
            break
        if not line.strip():
            continue
        try:
            result = run_turn(
                runtime.session,
                line,
                backend=backend,
                registry=runtime.registry,
                agents=runtime.agents,
                event_sink=recorder,
            )
        except (BackendError, OrchestratorError) as exc:
            print(f"error: {exc}")
            if runtime.session.status != "open":
                break
            continue
        for message in result.messages_added:
            if message.role == "assistant" and message.tool_calls:
                for call in message.tool_calls:
                    print(f"{DIM}[tool] {call.name}({call.arguments}){RESET}")
        for target in result.handoffs:
            print(f"{DIM}[handoff] -> {target}{RESET}")
        print(result.final_text)
        if runtime.session.status != "open":
            print(f"{DIM}[session {runtime.session.status}]{RESET}")
            break

    calls = len(runtime.session.usage_log)
    print(f"backend calls: {calls}, total tokens: {runtime.session.total_tokens}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    config = _load_config(args)
    outcome = run_replay(
        args.script,
        args.inputs,
        sessions_dir=config.sessions_dir,
        data_dir=config.data_dir,
        page_size=config.page_size,
    )
    print(outcome.transcript, end="")
    return outcome.exit_code


def cmd_validate_trace(args: argparse.Namespace) -> int:
    try:
        manual_text = Path(args.procedure).read_text(encoding="utf-8")
        report_text = Path(args.report).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}")
        return 2
    try:
        graph = parse_procedure(manual_text)
    except ProcedureParseError as exc:
        print(f"parse error: {exc}")
        return 2
    steps = extract_report_steps(report_text)
    if not steps:
        print("error: report contains no [step_id] markers")
        return 2
    result = validate_trace(graph, steps)
    if result.valid:
        print(
            f"valid trace {steps} "
            f"(terminal reached: {str(result.reached_terminal).lower()})"
        )
        return 0
    violation = result.first_violation
    print(
        f"invalid trace at index {violation.index}: "
        f"{violation.from_id} -> {violation.to_id} ({violation.reason})"
    )
    return 1


def cmd_emit_flowchart(args: argparse.Namespace) -> int:
    try:
        manual_text = Path(args.procedure).read_text(encoding="utf-8")
        chart = emit_flowchart(parse_procedure(manual_text))
    except (OSError, ProcedureParseError) as exc:
        print(f"error: {exc}")
        return 2
    if args.out:
        Path(args.out).write_text(chart, encoding="utf-8")
    else:
        print(chart, end="")
    return 0


def cmd_export_usage(args: argparse.Namespace) -> int:
    config = _load_config(args)
    store = EventStore(config.sessions_dir)
    try:
        csv_text = usage_series_csv(store, args.session_id)
    except SessionNotFoundError as exc:
        print(f"error: {exc}")
        return 2
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        print(csv_text, end="")
    return 0


_COMMANDS = {
    "serve": cmd_serve,
    "repl": cmd_repl,
    "replay": cmd_replay,
    "validate-trace": cmd_validate_trace,
    "emit-flowchart": cmd_emit_flowchart,
    "export-usage": cmd_export_usage,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
