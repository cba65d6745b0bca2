"""Command-line entry point: ``bddgen generate|lint|evaluate|run``.

Exit codes: 0 on success (lint findings included), 1 for usage or
configuration errors, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from bddgen import __version__
from bddgen.errors import BddGenError, ConfigError
from bddgen.lint import LintConfig, load_lint_config
from bddgen.pipeline import REPORT_NAME, GenerationFailed, cmd_evaluate, cmd_generate, cmd_lint
from bddgen.prompts import PromptTechnique, load_template, template_for
from bddgen.providers import (
    ChatCompletionsProvider,
    GenerationParams,
    RecordingProvider,
    ReplayFixture,
    ReplayProvider,
    load_provider_configs,
)
from bddgen.stories import StoryError, StorySchema, load_stories

logger = logging.getLogger("bddgen")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_generate_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="CSV file of user stories")
    p.add_argument("--id-column", default="id")
    p.add_argument("--description-column", default="description")
    p.add_argument("--source-column", default="source")
    p.add_argument("--provider", action="append", default=[],
                   help="provider name from --provider-config (repeatable)")
    p.add_argument("--provider-config", help="JSON file describing chat-completions providers")
    p.add_argument("--model", action="append", default=[],
                   help="model id to replay when no --provider is given (repeatable)")
    p.add_argument("--technique", choices=["zero", "few", "both"], default="both")
    p.add_argument("--params", help="JSON file with temperature/top_p/max_tokens/extra")
    p.add_argument("--template", help="plain-text prompt body with {user_story} and {instructions}")
    p.add_argument("--exemplar", help="few-shot exemplar file used with --template")
    p.add_argument("--out", required=True, help="output root directory")
    p.add_argument("--replay", help="replay fixture (JSON digest -> response)")
    p.add_argument("--record", action="store_true", help="call live providers and record into --replay")
    p.add_argument("--no-strip-fences", action="store_true", help="persist raw model output")
    p.add_argument("--jobs", type=int, default=4, help="parallel provider calls (default 4)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bddgen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bddgen {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="generate feature files from user stories")
    _add_generate_args(gen)

    lint_p = sub.add_parser("lint", help="lint a directory of feature files")
    lint_p.add_argument("feature_dir")
    lint_p.add_argument("--lint-config")
    lint_p.add_argument("--report", help=f"report path (default <feature_dir>/{REPORT_NAME})")

    ev = sub.add_parser("evaluate", help="aggregate findings reports")
    ev.add_argument("reports", nargs="+")
    ev.add_argument("--out", required=True)

    run = sub.add_parser("run", help="generate, lint and evaluate in one go")
    _add_generate_args(run)
    run.add_argument("--lint-config")
    return parser


def _techniques(choice: str) -> list[PromptTechnique]:
    if choice == "both":
        return [PromptTechnique.ZERO_SHOT, PromptTechnique.FEW_SHOT]
    return [PromptTechnique.parse(choice)]


def _base_params(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read params file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("params file must hold a JSON object")
    return data


def _targets(args) -> list[tuple]:
    """Resolve (provider, params) pairs from the command-line flags."""
    base = _base_params(args.params)
    if args.record and not args.replay:
        raise ConfigError("--record needs --replay to name the fixture file")
    fixture = ReplayFixture.load(args.replay) if args.replay and not args.record else None

    targets = []
    if args.provider:
        if not args.provider_config:
            raise ConfigError("--provider needs --provider-config")
        configs = load_provider_configs(args.provider_config)
        for name in args.provider:
            if name not in configs:
                raise ConfigError(f"provider {name!r} not found in {args.provider_config}")
            config = configs[name]
            params = GenerationParams.from_dict({**base, **config.params}, model_id=config.model_id)
            if fixture is not None:
                provider = ReplayProvider(fixture, name=config.name)
            else:
                provider = ChatCompletionsProvider(config)
                if args.record:
                    provider = RecordingProvider(provider, args.replay)
            targets.append((provider, params))
    else:
        if fixture is None:
            raise ConfigError("give --provider (live) or --replay with --model (offline)")
        models = args.model or ([base["model_id"]] if base.get("model_id") else [])
        if not models:
            raise ConfigError("replay runs need at least one --model")
        provider = ReplayProvider(fixture)
        targets += [(provider, GenerationParams.from_dict(base, model_id=m)) for m in models]
    return targets


def _generate(args) -> tuple[list, list[GenerationFailed]]:
    schema = StorySchema(args.id_column, args.description_column, args.source_column or None)
    stories = load_stories(args.dataset, schema)
    targets = _targets(args)
    manifests, failed = [], []
    for technique in _techniques(args.technique):
        if args.template:
            template = load_template(args.template, technique, args.exemplar)
        else:
            template = template_for(technique)
        for provider, params in targets:
            try:
                manifests.append(cmd_generate(
                    stories, provider, template, params, args.out,
                    dataset_path=args.dataset, jobs=args.jobs, strip=not args.no_strip_fences,
                ))
            except GenerationFailed as exc:
                logger.error("%s", exc)
                manifests.append(exc.manifest)
                failed.append(exc)
    return manifests, failed


def _lint_config(path: str | None) -> LintConfig:
    return load_lint_config(path) if path else LintConfig()


def dispatch(args) -> int:
    if args.command == "lint":
        print(cmd_lint(args.feature_dir, _lint_config(args.lint_config), args.report))
        return EXIT_OK
    if args.command == "evaluate":
        print(cmd_evaluate(args.reports, args.out))
        return EXIT_OK

    config = _lint_config(getattr(args, "lint_config", None))
    manifests, failed = _generate(args)
    for m in manifests:
        print(f"{m.model_id}/{m.technique.value}: run {m.run_id}, "
              f"{len(m.stories) - len(m.failures)} generated, {len(m.failures)} failed")
    if args.command == "run" and len(failed) < len(manifests):
        report = cmd_lint(args.out, config)
        print(cmd_evaluate([report], Path(args.out) / "reports"))
    return EXIT_RUNTIME if failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return dispatch(args)
    except (ConfigError, StoryError, FileNotFoundError) as exc:
        print(f"bddgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BddGenError, OSError) as exc:
        print(f"bddgen: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
