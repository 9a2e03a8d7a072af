"""Parsing, rendering and validation of conversation routine documents.

A routine is the natural-language "source code" of an agent: plain UTF-8
text organised into uppercase-headed sections (``CORE FUNCTIONS:``,
``INTERACTION WORKFLOW:``, ...). Body indentation is meaningful hierarchy
and is preserved byte-for-byte; parsing never re-flows text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from casrun.types import ContextVariables

# A section opens on a line that is entirely an uppercase token sequence
# followed by a colon. Numbered sub-headings ("1. INITIAL ASSESSMENT:") start
# with a digit and therefore stay inside the parent body.
HEADER_RE = re.compile(r"^[A-Z][A-Z /_-]*:$")

PLACEHOLDER_RE = re.compile(r"\{\{([^{}\s]+)\}\}")

# Backticked call references such as `search_railway_station()` or
# `retrieve_part_details(device_code)`.
TOOL_REF_RE = re.compile(r"`([A-Za-z_][A-Za-z0-9_]*)\([^)`]*\)`")


class RoutineParseError(ValueError):
    """Raised when a routine document cannot be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class RoutineSection:
    """One headed block of a routine; ``header`` is None for the implicit
    preamble (text before the first header)."""

    header: str | None
    body: str


@dataclass(frozen=True)
class RoutineDoc:
    """An ordered, parsed routine document."""

    sections: tuple[RoutineSection, ...] = ()
    title: str | None = None

    def section(self, header: str) -> RoutineSection | None:
        for sec in self.sections:
            if sec.header == header:
                return sec
        return None


@dataclass(frozen=True)
class Finding:
    """One validation finding: an unknown tool reference (error) or a
    registered tool the document never references (warning)."""

    severity: str  # "error" | "warning"
    tool_name: str
    message: str
    line: int | None = None


def _strip_trailing_blanks(lines: list[str]) -> list[str]:
    trimmed = list(lines)
    while trimmed and trimmed[-1].strip() == "":
        trimmed.pop()
    return trimmed


def parse_routine(text: str) -> RoutineDoc:
    """Parse routine source text into sections.

    Every line belongs to exactly one section; text before the first header
    becomes the implicit preamble. Raises RoutineParseError on a duplicate
    section header, naming the header and its line.
    """
    lines = text.split("\n")
    sections: list[RoutineSection] = []
    seen_headers: set[str] = set()
    current_header: str | None = None
    buffer: list[str] = []
    started = False

    def flush() -> None:
        body_lines = _strip_trailing_blanks(buffer)
        if current_header is None and not body_lines:
            return
        sections.append(RoutineSection(current_header, "\n".join(body_lines)))

    for line_no, line in enumerate(lines, start=1):
        if HEADER_RE.match(line):
            header = line[:-1]
            if header in seen_headers:
                raise RoutineParseError(f"duplicate section header {header!r}", line_no)
            if started or buffer:
                flush()
            seen_headers.add(header)
            current_header = header
            buffer = []
            started = True
        else:
            buffer.append(line)
    flush()

    title = None
    if sections and sections[0].header is None:
        for body_line in sections[0].body.split("\n"):
            if body_line.strip():
                title = body_line.strip()
                break
    return RoutineDoc(tuple(sections), title=title)


def render_system_prompt(doc: RoutineDoc, ctx: ContextVariables | None = None) -> str:
    """Render a routine back to prompt text.

    Sections appear in order, header line followed by body, separated by
    single blank lines. ``{{key}}`` placeholders with a matching context
    entry are substituted; unknown placeholders pass through verbatim.
    Rendering is total and deterministic.
    """
    chunks: list[str] = []
    for sec in doc.sections:
        if sec.header is None:
            chunks.append(sec.body)
        elif sec.body:
            chunks.append(f"{sec.header}:\n{sec.body}")
        else:
            chunks.append(f"{sec.header}:")
    text = "\n\n".join(chunks)
    if ctx is not None and ctx.entries:
        def substitute(match: re.Match[str]) -> str:
            value = ctx.get(match.group(1))
            return value if value is not None else match.group(0)

        text = PLACEHOLDER_RE.sub(substitute, text)
    return text + "\n" if text else ""


def validate_routine(doc: RoutineDoc, registered_tools) -> list[Finding]:
    """Cross-check the routine's backticked call references with a tool set.

    Returns one error per distinct referenced name that is not registered,
    and one warning per registered tool the routine never references.
    ``registered_tools`` is any iterable of tool names (a registry's
    ``names()`` works directly).
    """
    registered = set(registered_tools)
    referenced: dict[str, int] = {}
    rendered = render_system_prompt(doc)
    for line_no, line in enumerate(rendered.split("\n"), start=1):
        for match in TOOL_REF_RE.finditer(line):
            referenced.setdefault(match.group(1), line_no)

    findings: list[Finding] = []
    for name in sorted(set(referenced) - registered):
        findings.append(
            Finding(
                severity="error",
                tool_name=name,
                message=f"routine references unregistered tool {name!r}",
                line=referenced[name],
            )
        )
    for name in sorted(registered - set(referenced)):
        findings.append(
            Finding(
                severity="warning",
                tool_name=name,
                message=f"registered tool {name!r} is never referenced by the routine",
            )
        )
    return findings


def load_routine(path: str | Path) -> RoutineDoc:
    """Read and parse a ``.routine.txt`` file."""
    return parse_routine(Path(path).read_text(encoding="utf-8"))
