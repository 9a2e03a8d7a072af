"""Bundled scenario wiring: agent manifests, data files and per-session
tool registries.

A scenario is a set of agents plus the registry factory that binds their
tools to data fixtures. Registries are built per session so that seeded
RNGs, clocks and report sinks never leak across sessions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from casrun.orchestrator import Session, new_session
from casrun.routines import load_routine
from casrun.toolkit import ToolRegistry
from casrun.train_booking import (
    Clock,
    DEFAULT_PAGE_SIZE,
    FareTable,
    StationDataset,
    build_booking_registry,
    system_clock,
)
from casrun.troubleshooting import (
    build_troubleshooting_registry,
    file_report_sink,
    load_catalog,
    load_corpus,
    load_stopwords,
)
from casrun.types import AgentDefinition, ContextVariables

SCENARIOS = ("booking", "troubleshooting")

BOOKING_AGENT_NAME = "Train Booking Agent"
TS_ASSISTANT_AGENT_NAME = "Troubleshooting Assistant Agent"


def default_data_dir() -> Path:
    """Path of the packaged data directory."""
    return Path(str(resources.files("casrun") / "data"))


def load_agent_manifest(path: str | Path) -> AgentDefinition:
    """Load one ``.agent.json`` manifest; the routine path resolves relative
    to the manifest file."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    routine = load_routine((path.parent / data["routine_path"]).resolve())
    return AgentDefinition(
        name=data["name"],
        routine=routine,
        tool_names=tuple(data.get("tools", [])),
        model=data.get("model", "gpt-4o-mini"),
        temperature=float(data.get("temperature", 0.0)),
    )


@dataclass
class SessionRuntime:
    """Everything one live session needs: the session record, its agents
    and its tool registry. The backend and event sink are attached by the
    caller (service, replay or REPL)."""

    session: Session
    agents: dict[str, AgentDefinition]
    registry: ToolRegistry
    script_path: Path | None = None
    report_path: Path | None = None
    extra: dict = field(default_factory=dict)


def _booking_context() -> ContextVariables:
    return ContextVariables({"language": "Italian"})


def create_runtime(
    scenario: str,
    session_id: str,
    *,
    data_dir: str | Path | None = None,
    sessions_dir: str | Path = "sessions",
    clock: Clock = system_clock,
    seed: int = 0,
    page_size: int = DEFAULT_PAGE_SIZE,
    context: ContextVariables | None = None,
) -> SessionRuntime:
    """Build a fresh session runtime for a bundled scenario name or a custom
    agent manifest path."""
    data = Path(data_dir) if data_dir is not None else default_data_dir()
    agents_dir = data / "agents"

    if scenario == "booking":
        dataset = StationDataset.load(data / "stations.txt")
        fares = FareTable.load(data / "fares.json")
        registry = build_booking_registry(
            dataset, fares, clock=clock, seed=seed, page_size=page_size
        )
        agent = load_agent_manifest(agents_dir / "train_booking.agent.json")
        agents = {agent.name: agent}
        session = new_session(session_id, agent.name, context or _booking_context())
        return SessionRuntime(session=session, agents=agents, registry=registry)

    if scenario == "troubleshooting":
        corpus = load_corpus(data / "procedures")
        catalog = load_catalog(data / "parts_catalog.json")
        stopwords = load_stopwords(data / "stopwords_it.txt")
        report_path = Path(sessions_dir) / f"report-{session_id}.txt"
        registry = build_troubleshooting_registry(
            corpus,
            catalog,
            stopwords=stopwords,
            report_sink=file_report_sink(report_path),
        )
        assistant = load_agent_manifest(
            agents_dir / "troubleshooting_assistant.agent.json"
        )
        report = load_agent_manifest(agents_dir / "troubleshooting_report.agent.json")
        agents = {assistant.name: assistant, report.name: report}
        session = new_session(session_id, assistant.name, context)
        return SessionRuntime(
            session=session,
            agents=agents,
            registry=registry,
            report_path=report_path,
        )

    # Anything else is a path to a custom manifest: a single agent manifest
    # or a JSON list of manifest paths. Tools resolve against the union of
    # the bundled toolsets.
    manifest_path = Path(scenario)
    if not manifest_path.exists():
        raise ValueError(f"unknown scenario: {scenario!r}")
    dataset = StationDataset.load(data / "stations.txt")
    fares = FareTable.load(data / "fares.json")
    registry = build_booking_registry(
        dataset, fares, clock=clock, seed=seed, page_size=page_size
    )
    ts_registry = build_troubleshooting_registry(
        load_corpus(data / "procedures"),
        load_catalog(data / "parts_catalog.json"),
        stopwords=load_stopwords(data / "stopwords_it.txt"),
        report_sink=file_report_sink(Path(sessions_dir) / f"report-{session_id}.txt"),
    )
    for name in ts_registry.names():
        tool = ts_registry.get(name)
        registry.register(tool.spec, tool.handler)

    raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    if isinstance(raw, list):
        agent_list = [
            load_agent_manifest((manifest_path.parent / entry).resolve())
            for entry in raw
        ]
    else:
        agent_list = [load_agent_manifest(manifest_path)]
    agents = {agent.name: agent for agent in agent_list}
    for agent in agent_list:
        for tool_name in agent.tool_names:
            if tool_name not in registry:
                raise ValueError(
                    f"agent {agent.name!r} declares unknown tool {tool_name!r}"
                )
    session = new_session(session_id, agent_list[0].name, context)
    return SessionRuntime(session=session, agents=agents, registry=registry)


def default_script_path(scenario: str, data_dir: str | Path | None = None) -> Path | None:
    """The bundled demo script for a scenario, if one exists."""
    data = Path(data_dir) if data_dir is not None else default_data_dir()
    candidates = {
        "booking": data / "scripts" / "booking_demo.script.json",
        "troubleshooting": data / "scripts" / "troubleshooting_demo.script.json",
    }
    path = candidates.get(scenario)
    return path if path is not None and path.exists() else None
