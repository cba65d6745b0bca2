from __future__ import annotations

import random
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"
DATASET = ROOT / "data" / "user_stories.csv"
REPLAY_50 = FIXTURES / "replay_50.json"

WORDS = ["user", "cart", "login", "report", "calculator", "result", "email", "order", "page", "value"]
KEYWORDS = ["Given", "When", "Then", "And", "But"]


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def read_fixture(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def _phrase(rng: random.Random, lo: int = 1, hi: int = 5) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(lo, hi)))


def _tags(rng: random.Random, indent: str) -> list[str]:
    lines = []
    for _ in range(rng.randint(0, 2)):
        lines.append(indent + " ".join("@" + rng.choice(WORDS) for _ in range(rng.randint(1, 3))))
    return lines


def canonical_document(rng: random.Random) -> str:
    """Random well-formed feature text built from the grammar the parser models."""
    out = _tags(rng, "")
    out.append("Feature: " + _phrase(rng))
    out += ["  " + _phrase(rng).capitalize() for _ in range(rng.randint(0, 2))]
    if rng.random() < 0.5:
        out += ["", "  Background:"]
        out += ["    " + rng.choice(KEYWORDS[:1] + KEYWORDS[3:]) + " " + _phrase(rng)
                for _ in range(rng.randint(1, 3))]
    for _ in range(rng.randint(0, 5)):
        out.append("")
        out += _tags(rng, "  ")
        out.append("  Scenario: " + _phrase(rng))
        out += ["    " + _phrase(rng).capitalize() for _ in range(rng.randint(0, 1))]
        out += ["    " + rng.choice(KEYWORDS) + " " + _phrase(rng) for _ in range(rng.randint(0, 6))]
    return "\n".join(out) + "\n"


FUZZ_LINES = [
    "Feature:", "Feature: x", "Background:", "Background: bg", "Scenario:", "Scenario: s",
    "Scenario Outline: o", "Examples:", "| a | b |", '"""', "Given", "Given a", "When b", "Then c",
    "And d", "But e", "given lower", "* star", "@t", "@a @b", "@", "@ x", "# comment", "#", "-----",
    '-----" ----"', "===", "plain prose", "", "   ", "\t", "Feature:Feature:", "Rule: r",
    "Сценарий: кириллица", "功能: 中文", "🙂 emoji", " ", "\x0b\x0c", "\ufeff", "\x00",
]


def fuzz_text(rng: random.Random) -> str:
    """Gherkin-flavoured noise: keyword lines, broken tags, odd unicode and line endings."""
    pieces = []
    for _ in range(rng.randint(0, 25)):
        roll = rng.random()
        if roll < 0.6:
            line = rng.choice(FUZZ_LINES)
        elif roll < 0.8:
            line = rng.choice(KEYWORDS + ["@", "Feature:", "Scenario:"]) + rng.choice(["", " ", "  "]) + _phrase(rng)
        else:
            line = "".join(chr(rng.randint(1, 0x2FFF)) for _ in range(rng.randint(0, 12)))
        indent = " " * rng.randint(0, 6)
        pieces.append(indent + line + rng.choice(["\n", "\r\n", "\r", "  \n"]))
    return "".join(pieces)


# Acceptance criteria append (number, title, passed, seconds) here; the summary
# hook below prints one line per criterion at the end of the session.
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, float]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, seconds in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number}: {title} ({seconds:.2f}s)")
