"""Procedure graph oracle: parse step-numbered manuals into a branching
state machine, validate visited-step traces, and emit Mermaid flowcharts.

The grammar is the ``Passo {n}:`` convention of Italian maintenance
manuals: numbered step blocks whose sentences may direct the operator to
another step ("procedere al Passo 3", "tornare al Passo 2"). Condition text
is kept opaque; no language understanding is attempted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

STEP_HEADER_RE = re.compile(r"^Passo\s+(\d+)\s*:\s*(.*)$")

# Both infinitive and imperative verb forms appear in real manuals.
TRANSITION_RE = re.compile(
    r"\b(?:procedere|passare|procedi|passa|tornare|torna)\s+al\s+Passo\s+(\d+)",
    re.IGNORECASE,
)

TERMINAL_MARKER = "Fine procedura"

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")

# Words dropped from flowchart edge labels: articles, light verbs and
# connectives that carry no condition content.
_LABEL_SKIP_WORDS = frozenset(
    {
        "se", "si", "ci", "il", "lo", "la", "le", "i", "gli", "un", "una",
        "è", "e", "o", "ed", "sono", "poi", "notano", "nota", "appare",
        "risulta", "risultano", "verificano", "viene", "vengono",
    }
)
_LABEL_MAX_WORDS = 6


class ProcedureParseError(ValueError):
    """Raised when manual text cannot be parsed into a step graph."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Transition:
    """One directed edge; ``conditional`` marks sentences opening with
    'Se' (if), which leave the complementary case to fall through."""

    condition_text: str
    target_id: int
    conditional: bool


@dataclass(frozen=True)
class Step:
    """One manual step. ``fallthrough`` is the implicit next-step edge taken
    when no explicit transition applies; it is recorded separately so strict
    validation can ignore it."""

    id: int
    text: str
    transitions: tuple[Transition, ...] = ()
    fallthrough: int | None = None
    is_terminal: bool = False

    def successor_ids(self, include_fallthrough: bool = True) -> frozenset[int]:
        targets = {t.target_id for t in self.transitions}
        if include_fallthrough and self.fallthrough is not None:
            targets.add(self.fallthrough)
        return frozenset(targets)


@dataclass(frozen=True)
class ProcedureGraph:
    """Parsed step graph; may contain cycles."""

    doc_ref: str
    steps: Mapping[int, Step]
    start_id: int
    terminal_ids: frozenset[int]

    def successors(self, step_id: int, include_fallthrough: bool = True) -> frozenset[int]:
        step = self.steps.get(step_id)
        if step is None:
            raise KeyError(f"no such step: {step_id}")
        return step.successor_ids(include_fallthrough)


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def _sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT_RE.split(_normalize(text)) if s]


def parse_procedure(text: str, *, with_fallthrough: bool = True) -> ProcedureGraph:
    """Parse manual text into a ProcedureGraph.

    One step per ``Passo {n}:`` block. Every transition directive inside a
    block yields an edge whose condition text is the containing sentence.
    A block containing "Fine procedura" and no directives is terminal. A
    non-terminal step whose directives are all 'Se'-conditional (or absent)
    additionally falls through to the next numeric step, mirroring how an
    operator reads the manual; ``with_fallthrough=False`` disables that.
    """
    doc_ref_match = re.search(r"^DOC-REF:\s*(\S+)", text, re.MULTILINE)
    doc_ref = doc_ref_match.group(1) if doc_ref_match else ""

    blocks: list[tuple[int, int, list[str]]] = []  # (step_id, line_no, lines)
    current: tuple[int, int, list[str]] | None = None
    in_steps = False
    for line_no, line in enumerate(text.split("\n"), start=1):
        header = STEP_HEADER_RE.match(line.strip())
        if header:
            in_steps = True
            if current is not None:
                blocks.append(current)
            current = (int(header.group(1)), line_no, [header.group(2)])
        elif in_steps and current is not None:
            current[2].append(line)
    if current is not None:
        blocks.append(current)

    if not blocks:
        raise ProcedureParseError("no 'Passo {n}:' blocks found")

    seen_ids: dict[int, int] = {}
    steps: dict[int, Step] = {}
    for step_id, line_no, lines in blocks:
        if step_id in seen_ids:
            raise ProcedureParseError(
                f"duplicate step id {step_id} (first at line {seen_ids[step_id]})",
                line_no,
            )
        seen_ids[step_id] = line_no
        body = "\n".join(lines).strip()
        transitions = []
        for sentence in _sentences(body):
            for match in TRANSITION_RE.finditer(sentence):
                transitions.append(
                    Transition(
                        condition_text=sentence,
                        target_id=int(match.group(1)),
                        conditional=sentence.lower().startswith("se "),
                    )
                )
        is_terminal = TERMINAL_MARKER.lower() in body.lower() and not transitions
        steps[step_id] = Step(
            id=step_id,
            text=body,
            transitions=tuple(transitions),
            is_terminal=is_terminal,
        )

    ordered_ids = sorted(steps)
    for step_id, line_no, _ in blocks:
        for transition in steps[step_id].transitions:
            if transition.target_id not in steps:
                raise ProcedureParseError(
                    f"step {step_id} points at missing step {transition.target_id}",
                    line_no,
                )

    if with_fallthrough:
        finished: dict[int, Step] = {}
        for index, step_id in enumerate(ordered_ids):
            step = steps[step_id]
            fallthrough = None
            if (
                not step.is_terminal
                and index + 1 < len(ordered_ids)
                and all(t.conditional for t in step.transitions)
            ):
                fallthrough = ordered_ids[index + 1]
            finished[step_id] = Step(
                id=step.id,
                text=step.text,
                transitions=step.transitions,
                fallthrough=fallthrough,
                is_terminal=step.is_terminal,
            )
        steps = finished

    # A dangling last step with no marker and no outgoing edges is treated
    # as terminal so the graph invariant (terminal <=> no successors) holds.
    patched: dict[int, Step] = {}
    for step_id, step in steps.items():
        if not step.is_terminal and not step.transitions and step.fallthrough is None:
            step = Step(
                id=step.id, text=step.text, transitions=(), fallthrough=None,
                is_terminal=True,
            )
        patched[step_id] = step

    terminal_ids = frozenset(s.id for s in patched.values() if s.is_terminal)
    return ProcedureGraph(
        doc_ref=doc_ref,
        steps=patched,
        start_id=ordered_ids[0],
        terminal_ids=terminal_ids,
    )


@dataclass(frozen=True)
class TraceViolation:
    """First offending hop of an invalid trace; ``from_id`` is None when the
    trace starts on the wrong step."""

    index: int
    from_id: int | None
    to_id: int
    reason: str


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    first_violation: TraceViolation | None
    reached_terminal: bool


def validate_trace(
    graph: ProcedureGraph,
    trace: Sequence[int],
    *,
    allow_fallthrough: bool = True,
) -> ValidationResult:
    """Check that a visited-step sequence is a walk of the graph.

    A valid trace starts at the graph's start step and every consecutive
    pair follows an explicit transition or (unless disabled) the recorded
    fallthrough. Reaching a terminal step is reported, not required.
    """
    if not trace:
        raise ValueError("trace must be non-empty")
    reached_terminal = trace[-1] in graph.terminal_ids

    def invalid(index: int, from_id: int | None, to_id: int, reason: str) -> ValidationResult:
        return ValidationResult(
            valid=False,
            first_violation=TraceViolation(index, from_id, to_id, reason),
            reached_terminal=reached_terminal,
        )

    if trace[0] not in graph.steps:
        return invalid(0, None, trace[0], f"unknown step {trace[0]}")
    if trace[0] != graph.start_id:
        return invalid(
            0, None, trace[0], f"trace must start at step {graph.start_id}"
        )
    for index in range(1, len(trace)):
        previous, current = trace[index - 1], trace[index]
        if current not in graph.steps:
            return invalid(index, previous, current, f"unknown step {current}")
        if current not in graph.successors(previous, allow_fallthrough):
            allowed = sorted(graph.successors(previous, allow_fallthrough))
            return invalid(
                index,
                previous,
                current,
                f"step {current} is not a successor of {previous} "
                f"(allowed: {allowed})",
            )
    return ValidationResult(True, None, reached_terminal)


_STEP_MARKER_RE = re.compile(r"\[(\d+)\]")


def extract_report_steps(report_text: str) -> list[int]:
    """All ``[n]`` step markers in document order; duplicates preserved."""
    return [int(m.group(1)) for m in _STEP_MARKER_RE.finditer(report_text)]


def _first_sentence(text: str) -> str:
    sentences = _sentences(text)
    sentence = sentences[0] if sentences else ""
    return sentence.rstrip(".")


def _edge_label(transition: Transition) -> str:
    """Condition excerpt for an edge label: the condition sentence without
    the directive clause, leading 'Se' and label-skip words, capped at six
    words."""
    clause = transition.condition_text
    match = TRANSITION_RE.search(clause)
    if match:
        clause = clause[: match.start()]
    clause = clause.strip().strip(",;:")
    words = [
        word
        for word in re.findall(r"[\w'à-ÿ-]+", clause)
        if word.lower() not in _LABEL_SKIP_WORDS
    ]
    return " ".join(words[:_LABEL_MAX_WORDS])


def emit_flowchart(graph: ProcedureGraph) -> str:
    """Render the graph as a Mermaid ``flowchart TD`` document.

    One node per step (labelled with its first sentence), one edge per
    transition with a short condition excerpt, unlabelled fallthrough
    edges, ascending-id order throughout. The edge set matches exactly the
    successor sets used by trace validation.
    """
    lines = ["flowchart TD"]
    ordered = sorted(graph.steps)
    for step_id in ordered:
        label = _first_sentence(graph.steps[step_id].text).replace('"', "'")
        lines.append(f'  S{step_id}["{label}"]')
    for step_id in ordered:
        step = graph.steps[step_id]
        explicit_targets = set()
        for transition in step.transitions:
            label = _edge_label(transition)
            explicit_targets.add(transition.target_id)
            if label:
                lines.append(f"  S{step_id} -->|{label}| S{transition.target_id}")
            else:
                lines.append(f"  S{step_id} --> S{transition.target_id}")
        if step.fallthrough is not None and step.fallthrough not in explicit_targets:
            lines.append(f"  S{step_id} --> S{step.fallthrough}")
    return "\n".join(lines) + "\n"
