"""Validation accuracy and error distributions over linted feature files."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from bddgen.errors import BddGenError
from bddgen.lint import LintFinding, LintRule
from bddgen.prompts import PromptTechnique


class EvaluationError(BddGenError):
    pass


class EmptyGroup(EvaluationError):
    pass


class EmptyMatrix(EvaluationError):
    pass


Group = tuple[str, PromptTechnique]


@dataclass(frozen=True)
class FileVerdict:
    story_id: str
    model_id: str
    technique: PromptTechnique
    path: str
    findings: tuple[LintFinding, ...] = ()

    @property
    def clean(self) -> bool:
        return not self.findings

    @property
    def group(self) -> Group:
        return (self.model_id, self.technique)


@dataclass(frozen=True)
class AccuracySummary:
    model_id: str
    technique: PromptTechnique
    clean_count: int
    total_count: int

    @property
    def exact(self) -> Fraction:
        return Fraction(self.clean_count, self.total_count)

    @property
    def accuracy(self) -> float:
        return self.clean_count / self.total_count


def accuracy(verdicts: Iterable[FileVerdict], group: Group) -> AccuracySummary:
    """Share of files in ``group`` that produced no findings."""
    model_id, technique = group
    members = [v for v in verdicts if v.group == group]
    if not members:
        raise EmptyGroup(f"no verdicts for model {model_id!r}, technique {technique.value!r}")
    clean = sum(1 for v in members if v.clean)
    return AccuracySummary(model_id, technique, clean, len(members))


def groups_of(verdicts: Iterable[FileVerdict]) -> list[Group]:
    return sorted({v.group for v in verdicts}, key=_group_key)


def _group_key(group: Group) -> tuple[str, int]:
    return (group[0], list(PromptTechnique).index(group[1]))


def accuracy_table(verdicts: list[FileVerdict]) -> list[AccuracySummary]:
    return [accuracy(verdicts, g) for g in groups_of(verdicts)]


@dataclass
class ErrorMatrix:
    """Finding counts keyed by (model, technique, rule); absent keys are zero."""

    counts: dict[tuple[str, PromptTechnique, LintRule], int] = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, PromptTechnique, LintRule]) -> int:
        return self.counts.get(key, 0)

    def total(self) -> int:
        return sum(self.counts.values())

    def technique_total(self, technique: PromptTechnique) -> int:
        return sum(n for (_, t, _), n in self.counts.items() if t is technique)

    def rule_totals(self, technique: PromptTechnique) -> dict[LintRule, int]:
        totals = {rule: 0 for rule in LintRule}
        for (_, t, rule), n in self.counts.items():
            if t is technique:
                totals[rule] += n
        return totals

    def models(self) -> list[str]:
        return sorted({m for (m, _, _) in self.counts})

    def techniques(self) -> list[PromptTechnique]:
        present = {t for (_, t, _) in self.counts}
        return [t for t in PromptTechnique if t in present]

    def merge(self, other: ErrorMatrix) -> ErrorMatrix:
        merged = Counter(self.counts)
        merged.update(other.counts)
        return ErrorMatrix(dict(merged))


def error_matrix(verdicts: Iterable[FileVerdict]) -> ErrorMatrix:
    counts: Counter = Counter()
    for v in verdicts:
        for finding in v.findings:
            counts[(v.model_id, v.technique, finding.rule)] += 1
    return ErrorMatrix(dict(counts))


def technique_share(matrix: ErrorMatrix) -> dict[PromptTechnique, float]:
    """Fraction of all findings contributed by each technique."""
    grand = matrix.total()
    if grand == 0:
        raise EmptyMatrix("error matrix holds no findings")
    return {t: matrix.technique_total(t) / grand for t in matrix.techniques()}


# --- report files -------------------------------------------------------------


def _csv_text(rows: list[list]) -> str:
    buf = io.StringIO(newline="")
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def accuracy_csv(summaries: list[AccuracySummary]) -> str:
    rows = [["model", "technique", "clean", "total", "accuracy"]]
    for s in summaries:
        rows.append([s.model_id, s.technique.value, s.clean_count, s.total_count, repr(s.accuracy)])
    return _csv_text(rows)


def error_matrix_csv(matrix: ErrorMatrix, models: list[str], techniques: list[PromptTechnique]) -> str:
    """Rule rows by model columns, one block per technique."""
    rows = [["technique", "error_type", *models, "total"]]
    for technique in techniques:
        for rule in LintRule:
            cells = [matrix[(m, technique, rule)] for m in models]
            rows.append([technique.value, rule.value, *cells, sum(cells)])
    return _csv_text(rows)


def errors_long_csv(matrix: ErrorMatrix, models: list[str], techniques: list[PromptTechnique]) -> str:
    rows = [["model", "technique", "error_type", "count"]]
    for m in models:
        for technique in techniques:
            for rule in LintRule:
                rows.append([m, technique.value, rule.value, matrix[(m, technique, rule)]])
    return _csv_text(rows)


def build_summary(
    verdicts: list[FileVerdict],
    failures: Mapping[Group, int] | None = None,
    run_ids: Iterable[str] = (),
    fence_stripping: bool | None = None,
) -> dict:
    failures = dict(failures or {})
    summaries = accuracy_table(verdicts)
    matrix = error_matrix(verdicts)
    all_groups = sorted(set(groups_of(verdicts)) | set(failures), key=_group_key)
    models = sorted({g[0] for g in all_groups})
    techniques = [t for t in PromptTechnique if any(g[1] is t for g in all_groups)]
    try:
        shares = {t.value: s for t, s in technique_share(matrix).items()}
    except EmptyMatrix:
        shares = None

    return {
        "run_ids": sorted(set(run_ids)),
        "fence_stripping": fence_stripping,
        "accuracy": [
            {
                "model": s.model_id,
                "technique": s.technique.value,
                "clean": s.clean_count,
                "total": s.total_count,
                "accuracy": s.accuracy,
            }
            for s in summaries
        ],
        "failures": [
            {"model": m, "technique": t.value, "failed": failures.get((m, t), 0)}
            for m, t in all_groups
        ],
        "error_matrix": {
            t.value: {rule.value: {m: matrix[(m, t, rule)] for m in models} for rule in LintRule}
            for t in techniques
        },
        "technique_totals": {t.value: matrix.technique_total(t) for t in techniques},
        "total_findings": matrix.total(),
        "technique_share": shares,
    }


def write_reports(
    out_dir: str | Path,
    verdicts: list[FileVerdict],
    failures: Mapping[Group, int] | None = None,
    run_ids: Iterable[str] = (),
    fence_stripping: bool | None = None,
) -> Path:
    """Write accuracy.csv, error_matrix.csv, errors_long.csv and summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = build_summary(verdicts, failures, run_ids, fence_stripping)
    models = sorted({row["model"] for row in summary["failures"]})
    techniques = [PromptTechnique(t) for t in summary["error_matrix"]]
    matrix = error_matrix(verdicts)

    (out / "accuracy.csv").write_text(accuracy_csv(accuracy_table(verdicts)), encoding="utf-8")
    (out / "error_matrix.csv").write_text(error_matrix_csv(matrix, models, techniques), encoding="utf-8")
    (out / "errors_long.csv").write_text(errors_long_csv(matrix, models, techniques), encoding="utf-8")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return out
