"""Troubleshooting copilot tools: procedure retrieval, part catalog lookup,
report handoff and report building.

Retrieval is deterministic keyword scoring over a small document corpus
(no embeddings): query terms are lowercased, filtered by length and a
minimal Italian stopword list, lightly stemmed, and counted against the
document's words. Ties break on document reference order.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from casrun.toolkit import ToolRegistry
from casrun.types import ContextVariables, ParamSpec, ToolResult, ToolSpec

REPORT_AGENT_NAME = "Troubleshooting Report Agent"

NO_MATCH_TEXT = (
    "Nessuna procedura pertinente trovata. "
    "Riformulare la descrizione del problema con altri termini."
)

# Minimal Italian stopword set; just enough to keep content words in charge
# of retrieval scoring.
DEFAULT_STOPWORDS = frozenset(
    {"che", "cosa", "sotto", "una", "il", "la", "si", "è", "e", "di", "non"}
)

MIN_TERM_LENGTH = 3

PART_CODE_RE = re.compile(r"^[A-Z]{3}-[A-Z0-9]+(-[A-Z0-9]+)?$")

_WORD_RE = re.compile(r"[a-zà-ÿ0-9]+", re.IGNORECASE)
_DOC_REF_RE = re.compile(r"^DOC-REF:\s*(\S+)", re.MULTILINE)
_COMPONENT_LINE_RE = re.compile(r"^-\s*(.+?):\s*([A-Z]{3}-[A-Z0-9-]+)\s*$")
_STEP_START_RE = re.compile(r"^Passo\s+\d+\s*:", re.MULTILINE)


def load_stopwords(path: str | Path) -> frozenset[str]:
    words = Path(path).read_text(encoding="utf-8").split()
    return frozenset(w.strip().lower() for w in words if w.strip())


def stem(word: str) -> str:
    """Tiny Italian-oriented stem: drop one trailing vowel from words of
    four letters or more, so singular/plural forms compare equal."""
    if len(word) >= 4 and word[-1] in "aeiouàèéìòù":
        return word[:-1]
    return word


def content_terms(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> list[str]:
    """Lowercased, stopword-filtered, stemmed terms of length >= 3."""
    terms = []
    for raw in _WORD_RE.findall(text.lower()):
        if len(raw) < MIN_TERM_LENGTH or raw in stopwords:
            continue
        terms.append(stem(raw))
    return terms


@dataclass(frozen=True)
class ProcedureDocument:
    """One parsed troubleshooting manual."""

    doc_ref: str
    title: str
    intro: str
    component_codes: Mapping[str, str]  # code -> component name
    steps_text: str
    full_text: str


def parse_procedure_document(text: str) -> ProcedureDocument:
    """Extract document metadata from manual text in the standard layout:
    title line, DOC-REF line, INTRODUZIONE block, component code list and
    the step-by-step section."""
    ref_match = _DOC_REF_RE.search(text)
    if not ref_match:
        raise ValueError("procedure document missing DOC-REF line")
    doc_ref = ref_match.group(1)

    title = ""
    for line in text.split("\n"):
        if line.strip():
            title = line.strip()
            break

    intro = ""
    intro_match = re.search(
        r"^INTRODUZIONE\s*\n(.*?)(?=\n[A-Z][A-Z ]+\n|\Z)", text, re.DOTALL | re.MULTILINE
    )
    if intro_match:
        intro = intro_match.group(1).strip()

    codes: dict[str, str] = {}
    for line in text.split("\n"):
        component = _COMPONENT_LINE_RE.match(line.strip())
        if component:
            codes[component.group(2)] = component.group(1)

    steps_match = _STEP_START_RE.search(text)
    steps_text = text[steps_match.start():] if steps_match else ""

    return ProcedureDocument(
        doc_ref=doc_ref,
        title=title,
        intro=intro,
        component_codes=codes,
        steps_text=steps_text,
        full_text=text,
    )


def load_corpus(directory: str | Path) -> list[ProcedureDocument]:
    """Load every ``.proc.txt`` manual in a directory; doc refs must be
    unique across the corpus."""
    docs = []
    for path in sorted(Path(directory).glob("*.proc.txt")):
        docs.append(parse_procedure_document(path.read_text(encoding="utf-8")))
    refs = [doc.doc_ref for doc in docs]
    if len(set(refs)) != len(refs):
        raise ValueError(f"duplicate DOC-REF in corpus: {directory}")
    return docs


def score_document(
    doc: ProcedureDocument, query_terms: list[str], stopwords: frozenset[str]
) -> int:
    """Number of occurrences of the query terms among the document's words."""
    doc_terms = content_terms(doc.full_text, stopwords)
    counts: dict[str, int] = {}
    for term in doc_terms:
        counts[term] = counts.get(term, 0) + 1
    return sum(counts.get(term, 0) for term in query_terms)


def retrieve_troubleshooting_instructions(
    query: str,
    corpus: list[ProcedureDocument],
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
) -> str:
    """Return the full text of the best-matching manual, or an in-band
    no-match sentinel so the model can ask the user to rephrase."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    terms = content_terms(query, stopwords)
    best_doc = None
    best_score = 0
    for doc in sorted(corpus, key=lambda d: d.doc_ref):
        score = score_document(doc, terms, stopwords)
        if score > best_score:
            best_doc = doc
            best_score = score
    if best_doc is None:
        return NO_MATCH_TEXT
    return best_doc.full_text


@dataclass(frozen=True)
class Part:
    """One catalog entry."""

    code: str
    name: str
    manufacturer: str
    specs: str

    def __post_init__(self) -> None:
        if not PART_CODE_RE.match(self.code):
            raise ValueError(f"invalid part code: {self.code!r}")


def load_catalog(path: str | Path) -> dict[str, Part]:
    """Load the parts catalog (JSON list); codes must be unique."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    catalog: dict[str, Part] = {}
    for row in raw:
        part = Part(
            code=row["code"],
            name=row["name"],
            manufacturer=row["manufacturer"],
            specs=row["specs"],
        )
        if part.code in catalog:
            raise ValueError(f"duplicate part code: {part.code}")
        catalog[part.code] = part
    return catalog


def retrieve_part_details(device_code: str, catalog: Mapping[str, Part]) -> str:
    """Exact, case-insensitive code lookup; unknown codes get an in-band
    message instead of an error."""
    wanted = device_code.strip().upper()
    part = catalog.get(wanted)
    if part is None:
        return f"Nessun componente trovato per il codice {device_code.strip()}."
    return (
        f"Codice: {part.code}\n"
        f"Nome: {part.name}\n"
        f"Produttore: {part.manufacturer}\n"
        f"Specifiche: {part.specs}"
    )


def handoff_report() -> ToolResult:
    """Transfer control to the reporting agent."""
    return ToolResult(
        tool_call_id="",
        content=f"Trasferimento al {REPORT_AGENT_NAME} in corso.",
        handoff_target=REPORT_AGENT_NAME,
    )


@dataclass(frozen=True)
class Action:
    description: str
    step_id: int

    def __post_init__(self) -> None:
        if self.step_id < 1:
            raise ValueError("step_id must be a positive integer")


@dataclass(frozen=True)
class ActivityLog:
    """What happened during a troubleshooting session, as assembled by the
    reporting agent from the conversation."""

    problem: str
    doc_ref: str
    title: str
    actions: tuple[Action, ...]

    @classmethod
    def from_json(cls, text: str) -> "ActivityLog":
        data = json.loads(text)
        actions = tuple(
            Action(description=row["description"], step_id=int(row["step_id"]))
            for row in data.get("actions", [])
        )
        return cls(
            problem=data["problem"],
            doc_ref=data["doc_ref"],
            title=data["title"],
            actions=actions,
        )


ReportSink = Callable[[str], None]


def build_report(activities: ActivityLog, sink: ReportSink | None = None) -> str:
    """Format the final intervention report (plain text, no markdown) and
    persist the same bytes through ``sink``.

    Each action line ends with its step id in square brackets so the visited
    step sequence can be recovered from the report text alone.
    """
    if not activities.actions:
        raise ValueError("activity log carries no actions")
    lines = [
        "REPORT INTERVENTO SVOLTO:",
        "",
        "Problema:",
        activities.problem,
        "",
        "Procedura:",
        activities.title,
        f"DOC-REF: {activities.doc_ref}",
        "",
        "Azioni svolte:",
    ]
    for action in activities.actions:
        lines.append(f"- {action.description} [{action.step_id}].")
    text = "\n".join(lines) + "\n"
    if sink is not None:
        sink(text)
    return text


def file_report_sink(path: str | Path) -> ReportSink:
    """Sink that writes the report bytes to ``path`` (UTF-8)."""
    target = Path(path)

    def write(text: str) -> None:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")

    return write


# ---------------------------------------------------------------------------
# Tool declarations and registry wiring


RETRIEVE_INSTRUCTIONS_SPEC = ToolSpec(
    name="retrieve_troubleshooting_instructions",
    description=(
        "Retrieve the troubleshooting procedure document that best matches "
        "the reported issue."
    ),
    parameters=(
        ParamSpec("query", "string", "The user's issue description.", required=True),
    ),
    returns_description="Returns procedure details.",
)

RETRIEVE_PART_SPEC = ToolSpec(
    name="retrieve_part_details",
    description="Retrieve specifications for a component by device code.",
    parameters=(
        ParamSpec(
            "device_code", "string", "Component code, e.g. 'CNV-NT2024-A'.",
            required=True,
        ),
    ),
    returns_description="Returns part specifications.",
)

HANDOFF_REPORT_SPEC = ToolSpec(
    name="handoff_report",
    description="Transfer control to the reporting system.",
    parameters=(),
    returns_description="Confirmation of the transfer.",
)

BUILD_REPORT_SPEC = ToolSpec(
    name="build_report",
    description=(
        "Generate the final intervention report from the activities "
        "performed and persist it."
    ),
    parameters=(
        ParamSpec(
            "activities_done",
            "string",
            "JSON-encoded activity log: {problem, doc_ref, title, actions: "
            "[{description, step_id}]}.",
            required=True,
        ),
    ),
    returns_description="The formatted report text.",
)


def build_troubleshooting_registry(
    corpus: list[ProcedureDocument],
    catalog: Mapping[str, Part],
    *,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    report_sink: ReportSink | None = None,
) -> ToolRegistry:
    """Assemble the troubleshooting tool registry over the given corpus,
    catalog and per-session report sink."""
    registry = ToolRegistry()

    def handle_retrieve(values: dict, ctx: ContextVariables) -> str:
        return retrieve_troubleshooting_instructions(
            values.get("query", ""), corpus, stopwords
        )

    def handle_part(values: dict, ctx: ContextVariables) -> str:
        return retrieve_part_details(values.get("device_code", ""), catalog)

    def handle_handoff(values: dict, ctx: ContextVariables) -> ToolResult:
        return handoff_report()

    def handle_build_report(values: dict, ctx: ContextVariables) -> ToolResult:
        try:
            activities = ActivityLog.from_json(values.get("activities_done", ""))
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            return ToolResult(
                tool_call_id="",
                content=f"invalid activity log: {exc}",
                is_error=True,
            )
        try:
            text = build_report(activities, report_sink)
        except (ValueError, OSError) as exc:
            return ToolResult(
                tool_call_id="", content=f"report failed: {exc}", is_error=True
            )
        return ToolResult(tool_call_id="", content=text, ends_session=True)

    registry.register(RETRIEVE_INSTRUCTIONS_SPEC, handle_retrieve)
    registry.register(RETRIEVE_PART_SPEC, handle_part)
    registry.register(HANDOFF_REPORT_SPEC, handle_handoff)
    registry.register(BUILD_REPORT_SPEC, handle_build_report)
    return registry
