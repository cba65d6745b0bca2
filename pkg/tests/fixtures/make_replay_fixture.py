"""Rebuild replay_50.json: canned model responses for data/user_stories.csv.

Two simulated models answer both prompt techniques. Which stories get a
defective answer is fixed by index, so the expected accuracy of every
(model, technique) group is known without running the linter:

    model-a / zero : every 5th story defective  -> 40/50
    model-a / few  : every 10th story defective -> 45/50
    model-b / zero : every 2nd story defective  -> 25/50
    model-b / few  : every 25th story defective -> 48/50

Run from the repository root: ``python tests/fixtures/make_replay_fixture.py``.
"""

from __future__ import annotations

from pathlib import Path

from bddgen.prompts import PromptTechnique, build_prompt, template_for
from bddgen.providers import GenerationParams, ReplayFixture, request_digest
from bddgen.stories import load_stories

ROOT = Path(__file__).resolve().parents[2]
DATASET = ROOT / "data" / "user_stories.csv"
FIXTURE = Path(__file__).with_name("replay_50.json")

DEFECT_EVERY = {
    ("model-a", PromptTechnique.ZERO_SHOT): 5,
    ("model-a", PromptTechnique.FEW_SHOT): 10,
    ("model-b", PromptTechnique.ZERO_SHOT): 2,
    ("model-b", PromptTechnique.FEW_SHOT): 25,
}


def clean_feature(title: str, description: str) -> str:
    return f"""Feature: {title}
  {description}

  Background:
    Given the application is running

  @smoke
  Scenario: Happy path for {title.lower()}
    When the user completes the main action
    Then the expected result is shown

  @negative
  Scenario: Invalid input for {title.lower()}
    When the user submits invalid data
    Then an error message is shown
    But no data is saved
"""


def defective_feature(title: str, description: str, kind: int) -> str:
    """Four malformations seen in model output, plus a prose-only reply."""
    if kind == 0:
        return f"""Feature: {title}

  @smoke
  Scenario: Steps out of order
    Given the application is running
    Then the expected result is shown
    When the user completes the main action
"""
    if kind == 1:
        return clean_feature(title, description) + "@regression @smoke @negative\n"
    if kind == 2:
        return f"""Feature: {title}
  {description}

  Scenario: Untagged scenario
    Given the application is running
    When the user completes the main action
    Then the expected result is shown
"""
    if kind == 3:
        return f"""Feature: {title}
  -----" ----"
  {description}

  @smoke
  Scenario: Decorated description
    Given the application is running
    When the user completes the main action
    Then the expected result is shown
"""
    return "I'm sorry, but I can only describe the scenarios in prose for this story.\n"


def build() -> ReplayFixture:
    stories = load_stories(DATASET)
    fixture = ReplayFixture()
    for (model, technique), every in DEFECT_EVERY.items():
        template = template_for(technique)
        params = GenerationParams(model)
        for i, story in enumerate(stories):
            title = f"Story {story.id}"
            if i % every == 0:
                text = defective_feature(title, story.description, (i // every) % 5)
            else:
                text = clean_feature(title, story.description)
            if technique is PromptTechnique.FEW_SHOT and i % 3 == 0:
                text = f"```gherkin\n{text}```\n"
            payload = build_prompt(story, template)
            fixture.entries[request_digest(payload, params)] = text
    return fixture


if __name__ == "__main__":
    fixture = build()
    fixture.save(FIXTURE)
    print(f"wrote {len(fixture)} entries to {FIXTURE}")
