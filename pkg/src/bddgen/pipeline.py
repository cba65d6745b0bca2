"""The generate, lint and evaluate phases, callable without the CLI.

Generated files land at ``<out>/<model>/<technique>/<story_id>.feature`` next
to a ``manifest.json`` describing the run, so every later phase can recover the
(model, technique) grouping from the directory alone.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from bddgen import __version__
from bddgen.errors import BddGenError, ConfigError
from bddgen.evaluation import EvaluationError, FileVerdict, write_reports
from bddgen.gherkin import read_feature
from bddgen.lint import LintConfig, LintFinding, LintRule, lint
from bddgen.prompts import PromptTemplate, PromptTechnique, build_prompt
from bddgen.providers import GenerationParams, Provider, strip_fences
from bddgen.stories import UserStory

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
REPORT_NAME = "findings.json"


class GenerationFailed(BddGenError):
    """Every story in a generation run failed."""

    def __init__(self, message: str, manifest: RunManifest | None = None):
        super().__init__(message)
        self.manifest = manifest


class NoFeatureFiles(ConfigError):
    pass


class EmptyInput(ConfigError):
    pass


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def safe_name(value: str) -> str:
    """Make ``value`` usable as a single path component."""
    name = _UNSAFE.sub("_", value).strip(".")
    return name or "_"


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


@dataclass
class StoryOutcome:
    story_id: str
    file: str | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunManifest:
    run_id: str
    timestamp: str
    dataset_path: str
    technique: PromptTechnique
    provider_name: str
    params: GenerationParams
    prompt_digest: str
    tool_version: str = __version__
    fence_stripping: bool = True
    stories: list[StoryOutcome] = field(default_factory=list)

    @property
    def model_id(self) -> str:
        return self.params.model_id

    @property
    def failures(self) -> list[StoryOutcome]:
        return [s for s in self.stories if not s.ok]

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "timestamp": self.timestamp,
            "dataset_path": self.dataset_path,
            "technique": self.technique.value,
            "provider_name": self.provider_name,
            "model_id": self.model_id,
            "params": self.params.to_dict(),
            "prompt_digest": self.prompt_digest,
            "tool_version": self.tool_version,
            "fence_stripping": self.fence_stripping,
            "stories": [
                {"id": s.story_id, "file": s.file, "status": "ok" if s.ok else "failed", "error": s.error}
                for s in self.stories
            ],
            "failed": len(self.failures),
        }

    @classmethod
    def from_dict(cls, data: dict) -> RunManifest:
        params = dict(data["params"])
        return cls(
            run_id=data["run_id"],
            timestamp=data["timestamp"],
            dataset_path=data["dataset_path"],
            technique=PromptTechnique(data["technique"]),
            provider_name=data["provider_name"],
            params=GenerationParams.from_dict(params),
            prompt_digest=data["prompt_digest"],
            tool_version=data.get("tool_version", ""),
            fence_stripping=data.get("fence_stripping", True),
            stories=[StoryOutcome(s["id"], s["file"], s.get("error")) for s in data["stories"]],
        )

    @classmethod
    def load(cls, path: str | Path) -> RunManifest:
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid run manifest {path}: {exc}") from exc


def run_id_for(
    stories: Sequence[UserStory],
    technique: PromptTechnique,
    provider_name: str,
    params: GenerationParams,
    prompt_digest: str,
) -> str:
    blob = _canonical({
        "stories": [[s.id, s.description] for s in stories],
        "technique": technique.value,
        "provider": provider_name,
        "params": params.to_dict(),
        "prompt": prompt_digest,
        "version": __version__,
    })
    return hashlib.sha256(blob).hexdigest()[:16]


def run_dir(out_dir: str | Path, model_id: str, technique: PromptTechnique) -> Path:
    return Path(out_dir) / safe_name(model_id) / technique.value


def cmd_generate(
    stories: Sequence[UserStory],
    provider: Provider,
    template: PromptTemplate,
    params: GenerationParams,
    out_dir: str | Path,
    dataset_path: str = "",
    jobs: int = 4,
    strip: bool = True,
) -> RunManifest:
    """Generate one feature file per story; per-story failures are recorded, not raised."""
    technique = template.technique
    target = run_dir(out_dir, params.model_id, technique)
    file_names = [safe_name(s.id) + ".feature" for s in stories]
    if len(set(file_names)) != len(file_names):
        raise ConfigError("story ids collide after conversion to file names")
    target.mkdir(parents=True, exist_ok=True)

    def one(index: int) -> StoryOutcome:
        story, name = stories[index], file_names[index]
        path = target / name
        try:
            payload = build_prompt(story, template)
            text = provider.generate(payload, params).text
        except BddGenError as exc:
            logger.warning("story %s failed: %s", story.id, exc)
            path.unlink(missing_ok=True)
            return StoryOutcome(story.id, None, f"{type(exc).__name__}: {exc}")
        if strip:
            text = strip_fences(text)
        if not text.endswith("\n"):
            text += "\n"
        path.write_text(text, encoding="utf-8", newline="\n")
        return StoryOutcome(story.id, name)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(one, range(len(stories))))

    manifest = RunManifest(
        run_id=run_id_for(stories, technique, provider.name, params, template.digest()),
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        dataset_path=dataset_path,
        technique=technique,
        provider_name=provider.name,
        params=params,
        prompt_digest=template.digest(),
        fence_stripping=strip,
        stories=outcomes,
    )
    (target / MANIFEST_NAME).write_text(
        json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    ok = sum(1 for o in outcomes if o.ok)
    logger.info("run %s: %d/%d stories generated into %s", manifest.run_id, ok, len(outcomes), target)
    if stories and ok == 0:
        raise GenerationFailed(
            f"all {len(stories)} stories failed for {params.model_id}/{technique.value}", manifest
        )
    return manifest


# --- lint ---------------------------------------------------------------------


def _file_metadata(path: Path, root: Path, manifests: dict[Path, RunManifest]) -> dict:
    rel = path.relative_to(root)
    manifest = manifests.get(path.parent)
    if manifest is not None:
        story_id = next((s.story_id for s in manifest.stories if s.file == path.name), path.stem)
        return {
            "model": manifest.model_id,
            "technique": manifest.technique.value,
            "story_id": story_id,
            "run_id": manifest.run_id,
        }
    parts = rel.parts
    technique = None
    model = None
    if len(parts) >= 3:
        try:
            technique = PromptTechnique.parse(parts[-2]).value
            model = parts[-3]
        except ValueError:
            pass
    return {"model": model, "technique": technique, "story_id": path.stem, "run_id": None}


def cmd_lint(
    feature_dir: str | Path,
    config: LintConfig = LintConfig(),
    out_path: str | Path | None = None,
) -> Path:
    """Lint every ``.feature`` file under ``feature_dir`` into a JSON report."""
    root = Path(feature_dir)
    config.compiled_patterns()
    files = sorted(root.rglob("*.feature"))
    if not files:
        raise NoFeatureFiles(f"no .feature files under {root}")

    manifests = {p.parent: RunManifest.load(p) for p in sorted(root.rglob(MANIFEST_NAME))}
    entries = []
    flat = []
    for path in files:
        rel = path.relative_to(root).as_posix()
        findings = lint(read_feature(path), config)
        entries.append({"path": rel, **_file_metadata(path, root, manifests), "findings": len(findings)})
        flat += [f.to_dict(rel) for f in findings]

    failures = []
    for _, manifest in sorted(manifests.items()):
        for s in manifest.failures:
            failures.append({
                "model": manifest.model_id,
                "technique": manifest.technique.value,
                "story_id": s.story_id,
                "run_id": manifest.run_id,
                "error": s.error,
            })

    stripping = {m.fence_stripping for m in manifests.values()}
    report = {
        "tool_version": __version__,
        "run_ids": sorted({m.run_id for m in manifests.values()}),
        "fence_stripping": stripping.pop() if len(stripping) == 1 else None,
        "enabled_rules": [r.value for r in LintRule if r in config.enabled],
        "files": entries,
        "failures": failures,
        "findings": flat,
    }
    out = Path(out_path) if out_path else root / REPORT_NAME
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return out


# --- evaluate -----------------------------------------------------------------


def verdicts_from_report(report: dict) -> tuple[list[FileVerdict], dict, list[str]]:
    by_path: dict[str, list[LintFinding]] = {}
    for f in report.get("findings", []):
        finding = LintFinding(LintRule(f["rule"]), f["message"], f["line"], f["path"])
        by_path.setdefault(f["path"], []).append(finding)

    verdicts = []
    for entry in report.get("files", []):
        if entry.get("model") is None or entry.get("technique") is None:
            raise EvaluationError(f"cannot tell model and technique for {entry['path']}")
        verdicts.append(FileVerdict(
            story_id=entry["story_id"],
            model_id=entry["model"],
            technique=PromptTechnique(entry["technique"]),
            path=entry["path"],
            findings=tuple(by_path.get(entry["path"], ())),
        ))
    failures: dict = {}
    for f in report.get("failures", []):
        key = (f["model"], PromptTechnique(f["technique"]))
        failures[key] = failures.get(key, 0) + 1
    return verdicts, failures, list(report.get("run_ids", []))


def cmd_evaluate(report_paths: Sequence[str | Path], out_dir: str | Path) -> Path:
    if not report_paths:
        raise EmptyInput("no findings reports given")
    verdicts: list[FileVerdict] = []
    failures: dict = {}
    run_ids: list[str] = []
    stripping = set()
    for path in report_paths:
        try:
            report = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read findings report {path}: {exc}") from exc
        try:
            v, f, r = verdicts_from_report(report)
        except (KeyError, ValueError) as exc:
            raise EvaluationError(f"malformed findings report {path}: {exc}") from exc
        verdicts += v
        for key, n in f.items():
            failures[key] = failures.get(key, 0) + n
        run_ids += r
        stripping.add(report.get("fence_stripping"))

    seen = set()
    for v in verdicts:
        key = (v.model_id, v.technique, v.story_id)
        if key in seen:
            raise EvaluationError(f"story {v.story_id!r} counted twice for {v.model_id}/{v.technique.value}")
        seen.add(key)
    if not verdicts and not failures:
        raise EmptyInput("findings reports contain no files")

    fence = stripping.pop() if len(stripping) == 1 else None
    return write_reports(out_dir, verdicts, failures, run_ids, fence)
