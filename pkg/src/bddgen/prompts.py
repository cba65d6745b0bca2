"""Zero-shot and few-shot prompt templates for feature-file generation."""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from bddgen.errors import BddGenError
from bddgen.stories import UserStory

STORY_PLACEHOLDER = "{user_story}"
INSTRUCTIONS_PLACEHOLDER = "{instructions}"

INSTRUCTIONS = (
    "Start the feature file with the 'Feature:' keyword.",
    "Provide a descriptive feature name to specify the context of the scenarios.",
    "Include steps in the Background if they are repeated at the beginning of all scenarios in a feature.",
    "The background step is executed before every scenario.",
    "Use tags as annotations to group and organize scenarios and features.",
    "Tags are written with the '@' symbol followed by a significant text.",
)

DEFAULT_BODY = (
    "Generate a feature file with 5 Gherkin Scenarios for {user_story} "
    "by following below instructions.\n{instructions}"
)

# Two scenarios match the published demonstration; the remaining three
# complete the five-scenario shape the instructions ask for.
CALCULATOR_EXEMPLAR = """\
Feature: Basic Calculator Operations
  As a user, I need a simple calculator for quick and accurate basic operations.

  Background:
    Given I have opened the calculator application

  @basicoperations
  Scenario: Performing Addition
    When I enter "5" into the calculator
    And I add "7"
    Then the result should be "12"

  @basicoperations
  Scenario: Performing Subtraction
    When I enter "10" into the calculator
    And I subtract "3"
    Then the result should be "7"

  @basicoperations
  Scenario: Performing Multiplication
    When I enter "4" into the calculator
    And I multiply by "3"
    Then the result should be "12"

  @basicoperations
  Scenario: Performing Division
    When I enter "20" into the calculator
    And I divide by "4"
    Then the result should be "5"

  @errorhandling
  Scenario: Dividing by zero
    When I enter "8" into the calculator
    And I divide by "0"
    Then I should see the error message "Cannot divide by zero"
"""


class PromptError(BddGenError):
    pass


class EmptyStory(PromptError):
    pass


class PlaceholderMissing(PromptError):
    pass


class PromptTechnique(enum.Enum):
    ZERO_SHOT = "zero"
    FEW_SHOT = "few"

    @classmethod
    def parse(cls, value: str) -> PromptTechnique:
        for technique in cls:
            if value in (technique.value, technique.name, technique.name.lower()):
                return technique
        raise ValueError(f"unknown prompt technique {value!r}")


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Message:
    role: Role
    text: str


@dataclass(frozen=True)
class PromptTemplate:
    technique: PromptTechnique
    instruction_lines: tuple[str, ...] = INSTRUCTIONS
    body: str = DEFAULT_BODY
    exemplar: str | None = None
    system: str | None = None
    story_placeholder: str = STORY_PLACEHOLDER

    def __post_init__(self):
        if len(self.instruction_lines) != 6:
            raise PromptError(
                f"expected 6 instruction lines, got {len(self.instruction_lines)}"
            )
        if (self.exemplar is not None) != (self.technique is PromptTechnique.FEW_SHOT):
            raise PromptError("an exemplar is required for few-shot and forbidden for zero-shot")
        if self.story_placeholder not in self.body:
            raise PlaceholderMissing(
                f"template body does not contain {self.story_placeholder}"
            )

    def digest(self) -> str:
        blob = json.dumps(
            {
                "technique": self.technique.value,
                "instructions": list(self.instruction_lines),
                "body": self.body,
                "exemplar": self.exemplar,
                "system": self.system,
                "placeholder": self.story_placeholder,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class DefaultTemplates(NamedTuple):
    zero: PromptTemplate
    few: PromptTemplate


@dataclass(frozen=True)
class PromptPayload:
    messages: tuple[Message, ...]
    technique: PromptTechnique
    story_id: str

    def to_wire(self) -> list[dict[str, str]]:
        return [{"role": m.role.value, "content": m.text} for m in self.messages]


def default_templates() -> DefaultTemplates:
    return DefaultTemplates(
        zero=PromptTemplate(PromptTechnique.ZERO_SHOT),
        few=PromptTemplate(PromptTechnique.FEW_SHOT, exemplar=CALCULATOR_EXEMPLAR),
    )


def template_for(technique: PromptTechnique) -> PromptTemplate:
    defaults = default_templates()
    return defaults.zero if technique is PromptTechnique.ZERO_SHOT else defaults.few


def load_template(
    path: str | Path,
    technique: PromptTechnique,
    exemplar_path: str | Path | None = None,
) -> PromptTemplate:
    """Build a template from a plain-text body file.

    The body must contain ``{user_story}`` and may contain ``{instructions}``.
    Few-shot templates take their exemplar from ``exemplar_path``, falling back
    to the bundled calculator exemplar.
    """
    body = Path(path).read_text(encoding="utf-8").strip("\n")
    exemplar = None
    if technique is PromptTechnique.FEW_SHOT:
        if exemplar_path is not None:
            exemplar = Path(exemplar_path).read_text(encoding="utf-8")
        else:
            exemplar = CALCULATOR_EXEMPLAR
    return PromptTemplate(technique, body=body, exemplar=exemplar)


def render_instructions(lines: tuple[str, ...]) -> str:
    return "\n".join(f"{i}. {line}" for i, line in enumerate(lines, start=1))


def build_prompt(story: UserStory, template: PromptTemplate) -> PromptPayload:
    if not story.description.strip():
        raise EmptyStory(f"story {story.id!r} has a blank description")
    if template.story_placeholder not in template.body:
        raise PlaceholderMissing(f"template body does not contain {template.story_placeholder}")

    values = {
        template.story_placeholder: story.description,
        INSTRUCTIONS_PLACEHOLDER: render_instructions(template.instruction_lines),
    }
    # Single pass so placeholder-like text inside the story is never re-expanded.
    pattern = "|".join(re.escape(token) for token in values)
    user_text = re.sub(pattern, lambda m: values[m.group(0)], template.body)

    messages = []
    if template.system:
        messages.append(Message(Role.SYSTEM, template.system))
    messages.append(Message(Role.USER, user_text))
    if template.exemplar is not None:
        messages.append(Message(Role.ASSISTANT, template.exemplar))
    return PromptPayload(tuple(messages), template.technique, story.id)
