"""Tolerant, line-oriented Gherkin model.

Model output is frequently malformed, and the lint rules need to see the
malformation rather than a parse error. :func:`parse_document` therefore never
rejects text: every non-blank, non-comment line lands somewhere in the
:class:`GherkinDocument`, and lines that do not fit the structure at their
position are kept as :class:`RawLine` entries.

Only ``Feature:``, ``Background:``, ``Scenario:``, tag lines and the five step
keywords are recognised. Outlines, example tables, doc strings, rules and
localised keywords all come through as raw lines.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from bddgen.errors import BddGenError


class InvalidEncoding(BddGenError):
    pass


class StepKeyword(enum.Enum):
    GIVEN = "Given"
    WHEN = "When"
    THEN = "Then"
    AND = "And"
    BUT = "But"

    @property
    def phase(self) -> int | None:
        """1 for Given, 2 for When, 3 for Then; None for the conjunctions."""
        return _PHASES.get(self)


_PHASES = {StepKeyword.GIVEN: 1, StepKeyword.WHEN: 2, StepKeyword.THEN: 3}
_STEP_WORDS = {kw.value: kw for kw in StepKeyword}


class LineContext(enum.Enum):
    TOP_LEVEL = "top_level"
    IN_FEATURE_HEADER = "in_feature_header"
    IN_BACKGROUND = "in_background"
    IN_SCENARIO = "in_scenario"


# Line numbers are positional metadata and excluded from equality, so two
# documents compare equal when their structure and text match.


@dataclass(frozen=True)
class TextLine:
    text: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Tag:
    name: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Step:
    keyword: StepKeyword
    text: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RawLine:
    text: str
    context: LineContext
    line: int = field(default=0, compare=False)

    @property
    def is_tag_line(self) -> bool:
        return _is_tag_line(self.text)


@dataclass(frozen=True)
class Background:
    name: str = ""
    description: tuple[TextLine, ...] = ()
    steps: tuple[Step, ...] = ()
    raw_lines: tuple[RawLine, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Scenario:
    name: str = ""
    tags: tuple[Tag, ...] = ()
    description: tuple[TextLine, ...] = ()
    steps: tuple[Step, ...] = ()
    raw_lines: tuple[RawLine, ...] = ()
    line: int = field(default=0, compare=False)

    @property
    def tag_names(self) -> list[str]:
        return [t.name for t in self.tags]


@dataclass(frozen=True)
class GherkinDocument:
    feature_name: str | None = None
    feature_tags: tuple[Tag, ...] = ()
    feature_description: tuple[TextLine, ...] = ()
    background: Background | None = None
    scenarios: tuple[Scenario, ...] = ()
    leading_raw: tuple[RawLine, ...] = ()
    trailing_raw: tuple[RawLine, ...] = ()
    source_path: str = ""
    feature_line: int = field(default=0, compare=False)

    @property
    def feature_tag_names(self) -> list[str]:
        return [t.name for t in self.feature_tags]

    def modeled_lines(self) -> list[int]:
        """Source line numbers of every element, in ascending order."""
        lines: list[int] = []
        lines += [r.line for r in self.leading_raw]
        if self.feature_name is not None:
            lines.append(self.feature_line)
        lines += sorted({t.line for t in self.feature_tags})
        lines += [d.line for d in self.feature_description]
        containers: list[Background | Scenario] = list(self.scenarios)
        if self.background is not None:
            containers.append(self.background)
        for c in containers:
            lines.append(c.line)
            if isinstance(c, Scenario):
                lines += sorted({t.line for t in c.tags})
            lines += [d.line for d in c.description]
            lines += [s.line for s in c.steps]
            lines += [r.line for r in c.raw_lines]
        lines += [r.line for r in self.trailing_raw]
        return sorted(lines)


# --- parsing ------------------------------------------------------------------

_LINE_BREAK = re.compile(r"\r\n|\r|\n")


def split_lines(text: str) -> list[str]:
    """Split on LF, CRLF or CR only, so line numbers match editors."""
    return _LINE_BREAK.split(text)


def _is_tag_line(stripped: str) -> bool:
    tokens = stripped.split()
    return bool(tokens) and all(t.startswith("@") and len(t) > 1 for t in tokens)


def _match_header(stripped: str, keyword: str) -> str | None:
    prefix = keyword + ":"
    if stripped.startswith(prefix):
        return stripped[len(prefix):].strip()
    return None


def _match_step(stripped: str) -> tuple[StepKeyword, str] | None:
    parts = stripped.split(None, 1)
    if parts and parts[0] in _STEP_WORDS:
        return _STEP_WORDS[parts[0]], parts[1] if len(parts) > 1 else ""
    return None


class _Container:
    def __init__(self, kind: str, name: str, line: int, tags: list[Tag]):
        self.kind = kind
        self.name = name
        self.line = line
        self.tags = tags
        self.description: list[TextLine] = []
        self.steps: list[Step] = []
        self.raw: list[RawLine] = []

    def freeze(self) -> Background | Scenario:
        if self.kind == "background":
            return Background(self.name, tuple(self.description), tuple(self.steps), tuple(self.raw), self.line)
        return Scenario(
            self.name, tuple(self.tags), tuple(self.description), tuple(self.steps), tuple(self.raw), self.line
        )


class _Builder:
    def __init__(self, source_path: str):
        self.source_path = source_path
        self.context = LineContext.TOP_LEVEL
        self.feature_name: str | None = None
        self.feature_line = 0
        self.feature_tags: list[Tag] = []
        self.feature_description: list[TextLine] = []
        self.leading_raw: list[RawLine] = []
        self.background: _Container | None = None
        self.scenarios: list[_Container] = []
        self.current: _Container | None = None
        self.pending_tags: list[tuple[int, str]] = []

    def _take_tags(self) -> list[Tag]:
        tags = [Tag(name, line) for line, text in self.pending_tags for name in text.split()]
        self.pending_tags = []
        return tags

    def _add_raw(self, line: int, text: str) -> None:
        raw = RawLine(text, self.context, line)
        if self.current is not None:
            self.current.raw.append(raw)
        else:
            self.leading_raw.append(raw)

    def _flush_orphan_tags(self) -> None:
        for line, text in self.pending_tags:
            self._add_raw(line, text)
        self.pending_tags = []

    def feed(self, line: int, stripped: str) -> None:
        if not stripped or stripped.startswith("#"):
            return
        if _is_tag_line(stripped):
            self.pending_tags.append((line, stripped))
            return

        feature = _match_header(stripped, "Feature")
        if feature is not None and self.context is LineContext.TOP_LEVEL:
            self.feature_name = feature
            self.feature_line = line
            self.feature_tags = self._take_tags()
            self.context = LineContext.IN_FEATURE_HEADER
            return

        scenario = _match_header(stripped, "Scenario")
        if scenario is not None:
            self.current = _Container("scenario", scenario, line, self._take_tags())
            self.scenarios.append(self.current)
            self.context = LineContext.IN_SCENARIO
            return

        self._flush_orphan_tags()

        background = _match_header(stripped, "Background")
        if background is not None and self.current is None:
            self.current = self.background = _Container("background", background, line, [])
            self.context = LineContext.IN_BACKGROUND
            return

        step = _match_step(stripped)
        if self.current is not None and step is not None:
            self.current.steps.append(Step(step[0], step[1], line))
        elif self.current is not None and not self.current.steps and _is_plain_text(stripped):
            self.current.description.append(TextLine(stripped, line))
        elif self.context is LineContext.IN_FEATURE_HEADER and _is_plain_text(stripped):
            self.feature_description.append(TextLine(stripped, line))
        else:
            self._add_raw(line, stripped)

    def finish(self) -> GherkinDocument:
        trailing = [RawLine(text, self.context, line) for line, text in self.pending_tags]
        return GherkinDocument(
            feature_name=self.feature_name,
            feature_tags=tuple(self.feature_tags),
            feature_description=tuple(self.feature_description),
            background=self.background.freeze() if self.background else None,
            scenarios=tuple(s.freeze() for s in self.scenarios),
            leading_raw=tuple(self.leading_raw),
            trailing_raw=tuple(trailing),
            source_path=self.source_path,
            feature_line=self.feature_line,
        )


# Gherkin syntax this model does not represent; never taken as description.
_UNSUPPORTED = re.compile(
    r"^(?:(?:Scenario Outline|Scenario Template|Examples|Scenarios|Example|Rule):|\||\"\"\"|```)"
)


def _is_plain_text(stripped: str) -> bool:
    """True when the line is not a step, a keyword header or unsupported syntax."""
    if _match_step(stripped) is not None or _UNSUPPORTED.match(stripped):
        return False
    return not any(
        _match_header(stripped, kw) is not None for kw in ("Feature", "Background", "Scenario")
    )


def parse_document(text: str | bytes, source_path: str = "") -> GherkinDocument:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise InvalidEncoding(f"{source_path or '<input>'}: not valid UTF-8 ({exc.reason})") from exc
    builder = _Builder(source_path)
    for number, line in enumerate(split_lines(text), start=1):
        builder.feed(number, line.strip())
    return builder.finish()


def read_feature(path: str | Path) -> GherkinDocument:
    path = Path(path)
    return parse_document(path.read_bytes(), str(path))


# --- serialization ------------------------------------------------------------

_INDENT = "  "


def _tag_lines(tags: tuple[Tag, ...]) -> list[str]:
    groups: list[list[Tag]] = []
    for tag in tags:
        if groups and groups[-1][0].line == tag.line:
            groups[-1].append(tag)
        else:
            groups.append([tag])
    return [" ".join(t.name for t in group) for group in groups]


def _header(keyword: str, name: str) -> str:
    return f"{keyword}: {name}" if name else f"{keyword}:"


def _by_line(*groups) -> Iterator:
    items = [item for group in groups for item in group]
    return iter(sorted(items, key=lambda item: item.line))


def _body_text(item: TextLine | Step | RawLine) -> str:
    if isinstance(item, Step):
        return f"{item.keyword.value} {item.text}" if item.text else item.keyword.value
    return item.text


def _container_block(c: Background | Scenario) -> list[str]:
    block = []
    if isinstance(c, Scenario):
        block += [_INDENT + t for t in _tag_lines(c.tags)]
        block.append(_INDENT + _header("Scenario", c.name))
    else:
        block.append(_INDENT + _header("Background", c.name))
    block += [_INDENT * 2 + _body_text(i) for i in _by_line(c.description, c.steps, c.raw_lines)]
    return block


def serialize(doc: GherkinDocument) -> str:
    """Render ``doc`` as canonical Gherkin text."""
    sections: list[list[str]] = []

    head = [r.text for r in doc.leading_raw if r.context is LineContext.TOP_LEVEL]
    if doc.feature_name is not None:
        head += _tag_lines(doc.feature_tags)
        head.append(_header("Feature", doc.feature_name))
        header_raw = [r for r in doc.leading_raw if r.context is not LineContext.TOP_LEVEL]
        head += [_INDENT + _body_text(i) for i in _by_line(doc.feature_description, header_raw)]
    else:
        head += [r.text for r in doc.leading_raw if r.context is not LineContext.TOP_LEVEL]
    if head:
        sections.append(head)

    if doc.background is not None:
        sections.append(_container_block(doc.background))
    sections += [_container_block(s) for s in doc.scenarios]
    if doc.trailing_raw:
        sections.append([_INDENT + r.text for r in doc.trailing_raw])

    if not sections:
        return ""
    return "\n\n".join("\n".join(section) for section in sections) + "\n"
