"""Lint rules for generated feature files.

Four rules mirror the gherkin-lint error types the evaluation counts; a fifth,
``no-feature``, marks output that never produced a ``Feature:`` header.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from bddgen.errors import ConfigError
from bddgen.gherkin import GherkinDocument, RawLine, Step, TextLine, parse_document


class InvalidConfig(ConfigError):
    pass


class LintRule(enum.Enum):
    KEYWORDS_NOT_IN_LOGICAL_ORDER = "gherkin-keywords-not-in-logical-order"
    KEYWORD_NOT_PRESENT_IN_STEP = "gherkin-keyword-not-present-in-step"
    MISSING_TAGS = "missing-tags"
    RESTRICTED_PATTERNS_PRESENT = "restricted-patterns-present"
    NO_FEATURE = "no-feature"

    @property
    def order(self) -> int:
        return _RULE_ORDER[self]


_RULE_ORDER = {rule: i for i, rule in enumerate(LintRule)}

CORE_RULES = (
    LintRule.KEYWORDS_NOT_IN_LOGICAL_ORDER,
    LintRule.KEYWORD_NOT_PRESENT_IN_STEP,
    LintRule.MISSING_TAGS,
    LintRule.RESTRICTED_PATTERNS_PRESENT,
)


class MissingTagsScope(enum.Enum):
    SCENARIOS_ONLY = "scenarios"
    SCENARIOS_AND_FEATURE = "scenarios_and_feature"


# A line made only of dashes, equals, stars, underscores, quotes and spaces,
# holding at least one run of three such rule characters: "-----", "=====",
# '-----" ----"'. Any letter or digit keeps the line out.
DEFAULT_RESTRICTED_PATTERNS = (r"""^(?=.*[-=*_]{3})[-=*_"'\s]+$""",)


@dataclass(frozen=True)
class LintConfig:
    enabled: frozenset[LintRule] = frozenset(LintRule)
    restricted_patterns: tuple[str, ...] = DEFAULT_RESTRICTED_PATTERNS
    missing_tags_scope: MissingTagsScope = MissingTagsScope.SCENARIOS_ONLY

    def compiled_patterns(self) -> list[re.Pattern]:
        compiled = []
        for pattern in self.restricted_patterns:
            try:
                compiled.append(re.compile(pattern))
            except re.error as exc:
                raise InvalidConfig(f"invalid restricted pattern {pattern!r}: {exc}") from exc
        return compiled

    def without(self, *rules: LintRule) -> LintConfig:
        return LintConfig(self.enabled - set(rules), self.restricted_patterns, self.missing_tags_scope)

    @classmethod
    def from_dict(cls, data: dict) -> LintConfig:
        """Build a config from ``{"rules": {...}, "restricted_patterns": [...], ...}``.

        ``rules`` maps rule ids to ``"on"``/``"off"``; unlisted rules stay on.
        """
        if not isinstance(data, dict):
            raise InvalidConfig("lint config must be a JSON object")
        unknown = set(data) - {"rules", "restricted_patterns", "missing_tags_scope"}
        if unknown:
            raise InvalidConfig(f"unknown lint config keys: {sorted(unknown)}")
        enabled = set(LintRule)
        for rule_id, state in data.get("rules", {}).items():
            try:
                rule = LintRule(rule_id)
            except ValueError:
                raise InvalidConfig(f"unknown lint rule {rule_id!r}") from None
            if state not in ("on", "off"):
                raise InvalidConfig(f"rule {rule_id!r} must be 'on' or 'off', got {state!r}")
            if state == "off":
                enabled.discard(rule)
        patterns = data.get("restricted_patterns", list(DEFAULT_RESTRICTED_PATTERNS))
        if not isinstance(patterns, list) or not all(isinstance(p, str) for p in patterns):
            raise InvalidConfig("restricted_patterns must be a list of strings")
        try:
            scope = MissingTagsScope(data.get("missing_tags_scope", "scenarios"))
        except ValueError:
            raise InvalidConfig(f"unknown missing_tags_scope {data['missing_tags_scope']!r}") from None
        config = cls(frozenset(enabled), tuple(patterns), scope)
        config.compiled_patterns()
        return config


def load_lint_config(path: str | Path) -> LintConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise InvalidConfig(f"cannot read lint config {path}: {exc}") from exc
    return LintConfig.from_dict(data)


@dataclass(frozen=True)
class LintFinding:
    rule: LintRule
    message: str
    line: int
    source_path: str = field(default="")

    def sort_key(self) -> tuple[int, int, str]:
        return (self.line, self.rule.order, self.message)

    def to_dict(self, path: str | None = None) -> dict:
        return {
            "path": self.source_path if path is None else path,
            "line": self.line,
            "rule": self.rule.value,
            "message": self.message,
        }


# --- rules --------------------------------------------------------------------


def check_logical_order(
    steps: Sequence[Step],
    preceding: Sequence[Step] = (),
    source_path: str = "",
) -> list[LintFinding]:
    """Flag steps that move back to an earlier Given/When/Then phase.

    And/But take the phase of the nearest primary keyword before them and are
    only flagged when there is none. ``preceding`` (the background) supplies
    that antecedent but does not raise the phase floor.
    """
    findings = []
    antecedent = next((s.keyword for s in reversed(preceding) if s.keyword.phase), None)
    max_phase = 0
    for step in steps:
        phase = step.keyword.phase
        if phase is None:
            if antecedent is None:
                findings.append(LintFinding(
                    LintRule.KEYWORDS_NOT_IN_LOGICAL_ORDER,
                    f"'{step.keyword.value}' step has no preceding Given, When or Then",
                    step.line,
                    source_path,
                ))
            continue
        if phase < max_phase:
            findings.append(LintFinding(
                LintRule.KEYWORDS_NOT_IN_LOGICAL_ORDER,
                f"'{step.keyword.value}' step follows a later-phase step",
                step.line,
                source_path,
            ))
        max_phase = max(max_phase, phase)
        antecedent = step.keyword
    return findings


def _described_lines(doc: GherkinDocument) -> Iterable[TextLine | RawLine]:
    if doc.feature_name:
        yield TextLine(doc.feature_name, doc.feature_line)
    yield from doc.feature_description
    yield from doc.leading_raw
    if doc.background is not None:
        bg = doc.background
        if bg.name:
            yield TextLine(bg.name, bg.line)
        yield from bg.description
        yield from bg.raw_lines
    for sc in doc.scenarios:
        if sc.name:
            yield TextLine(sc.name, sc.line)
        yield from sc.description
        yield from sc.raw_lines
    yield from doc.trailing_raw


def check_restricted_patterns(
    doc: GherkinDocument, patterns: Sequence[str | re.Pattern]
) -> list[LintFinding]:
    """One finding per (line, matching pattern); step text is not checked."""
    compiled = [re.compile(p) if isinstance(p, str) else p for p in patterns]
    findings = []
    for item in _described_lines(doc):
        for pattern in compiled:
            if pattern.search(item.text):
                findings.append(LintFinding(
                    LintRule.RESTRICTED_PATTERNS_PRESENT,
                    f"text {item.text!r} matches restricted pattern {pattern.pattern!r}",
                    item.line,
                    doc.source_path,
                ))
    return findings


def check_keyword_in_step(doc: GherkinDocument) -> list[LintFinding]:
    raw: list[RawLine] = []
    if doc.background is not None:
        raw += doc.background.raw_lines
    for sc in doc.scenarios:
        raw += sc.raw_lines
    raw += doc.trailing_raw
    findings = []
    for r in raw:
        if r.is_tag_line:
            message = f"tags {r.text!r} are not followed by a Scenario or Feature"
        else:
            message = f"line {r.text!r} does not start with Given, When, Then, And or But"
        findings.append(LintFinding(LintRule.KEYWORD_NOT_PRESENT_IN_STEP, message, r.line, doc.source_path))
    return findings


def check_missing_tags(doc: GherkinDocument, scope: MissingTagsScope) -> list[LintFinding]:
    findings = []
    if (
        scope is MissingTagsScope.SCENARIOS_AND_FEATURE
        and doc.feature_name is not None
        and not doc.feature_tags
    ):
        findings.append(LintFinding(
            LintRule.MISSING_TAGS, "feature has no tags", doc.feature_line, doc.source_path
        ))
    for sc in doc.scenarios:
        if not sc.tags:
            findings.append(LintFinding(
                LintRule.MISSING_TAGS, f"scenario {sc.name!r} has no tags", sc.line, doc.source_path
            ))
    return findings


def check_no_feature(doc: GherkinDocument, first_line: int = 1) -> list[LintFinding]:
    if doc.feature_name is not None:
        return []
    return [LintFinding(LintRule.NO_FEATURE, "no 'Feature:' header found", first_line, doc.source_path)]


def _first_content_line(doc: GherkinDocument) -> int:
    lines = doc.modeled_lines()
    return lines[0] if lines else 1


def lint(doc: GherkinDocument, config: LintConfig = LintConfig()) -> list[LintFinding]:
    patterns = config.compiled_patterns()
    enabled = config.enabled
    findings: list[LintFinding] = []

    if LintRule.KEYWORDS_NOT_IN_LOGICAL_ORDER in enabled:
        background_steps = doc.background.steps if doc.background else ()
        findings += check_logical_order(background_steps, source_path=doc.source_path)
        for sc in doc.scenarios:
            findings += check_logical_order(sc.steps, background_steps, doc.source_path)
    if LintRule.KEYWORD_NOT_PRESENT_IN_STEP in enabled:
        findings += check_keyword_in_step(doc)
    if LintRule.MISSING_TAGS in enabled:
        findings += check_missing_tags(doc, config.missing_tags_scope)
    if LintRule.RESTRICTED_PATTERNS_PRESENT in enabled:
        findings += check_restricted_patterns(doc, patterns)
    if LintRule.NO_FEATURE in enabled:
        findings += check_no_feature(doc, _first_content_line(doc))

    return sorted(findings, key=LintFinding.sort_key)


def lint_text(text: str, source_path: str = "", config: LintConfig = LintConfig()) -> list[LintFinding]:
    return lint(parse_document(text, source_path), config)
