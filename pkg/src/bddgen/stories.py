"""Load user stories from a CSV dataset.

The expected layout is a header row followed by one story per record::

    id,description,source
    US1,"As a user, I need a simple calculator for quick and accurate basic operations.",blog

Column names can be remapped with :class:`StorySchema`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from bddgen.errors import BddGenError


class StoryError(BddGenError):
    """Base class for dataset loading errors."""


class MalformedCsv(StoryError):
    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


class DuplicateId(StoryError):
    def __init__(self, story_id: str, row: int):
        super().__init__(f"row {row}: duplicate story id {story_id!r}")
        self.story_id = story_id
        self.row = row


class BlankDescription(StoryError):
    def __init__(self, story_id: str, row: int):
        super().__init__(f"row {row}: story {story_id!r} has a blank description")
        self.story_id = story_id
        self.row = row


class EmptyDataset(StoryError):
    pass


class SchemaError(StoryError):
    pass


@dataclass(frozen=True)
class UserStory:
    id: str
    description: str
    source: str | None = None


@dataclass(frozen=True)
class StorySchema:
    """Maps story fields onto CSV column names."""

    id_column: str = "id"
    description_column: str = "description"
    source_column: str | None = "source"


DEFAULT_SCHEMA = StorySchema()


def load_stories(path: str | Path, schema: StorySchema = DEFAULT_SCHEMA) -> list[UserStory]:
    """Read every story in ``path``, preserving file order.

    Raises ``FileNotFoundError`` for a missing file and a :class:`StoryError`
    subclass for anything wrong with its contents.
    """
    data = Path(path).read_bytes()
    return parse_stories(data, schema)


def parse_stories(data: bytes | str, schema: StorySchema = DEFAULT_SCHEMA) -> list[UserStory]:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise MalformedCsv(f"not valid UTF-8 ({exc.reason})", 0) from exc
    else:
        text = data.removeprefix("\ufeff")

    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader, None)
        if header is None:
            raise EmptyDataset("dataset has no header row")
        header = [name.strip() for name in header]
        columns = _resolve_columns(header, schema)

        stories: list[UserStory] = []
        seen: set[str] = set()
        for record in reader:
            row = reader.line_num
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) != len(header):
                raise MalformedCsv(
                    f"expected {len(header)} columns, found {len(record)}", row
                )
            story_id = record[columns["id"]].strip()
            if not story_id:
                raise MalformedCsv("empty story id", row)
            if story_id in seen:
                raise DuplicateId(story_id, row)
            description = record[columns["description"]].strip()
            if not description:
                raise BlankDescription(story_id, row)
            source = None
            if "source" in columns:
                source = record[columns["source"]].strip() or None
            seen.add(story_id)
            stories.append(UserStory(story_id, description, source))
    except csv.Error as exc:
        raise MalformedCsv(str(exc), reader.line_num) from exc

    if not stories:
        raise EmptyDataset("dataset contains no stories")
    return stories


def _resolve_columns(header: list[str], schema: StorySchema) -> dict[str, int]:
    columns = {}
    for field, name in (("id", schema.id_column), ("description", schema.description_column)):
        if name not in header:
            raise SchemaError(f"missing required column {name!r} (header: {header})")
        columns[field] = header.index(name)
    if schema.source_column and schema.source_column in header:
        columns["source"] = header.index(schema.source_column)
    return columns


def dump_stories(stories: list[UserStory], schema: StorySchema = DEFAULT_SCHEMA) -> str:
    """Serialize stories back to CSV text accepted by :func:`parse_stories`."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    with_source = schema.source_column is not None and any(s.source for s in stories)
    header = [schema.id_column, schema.description_column]
    if with_source:
        header.append(schema.source_column)
    writer.writerow(header)
    for story in stories:
        row = [story.id, story.description]
        if with_source:
            row.append(story.source or "")
        writer.writerow(row)
    return buf.getvalue()
