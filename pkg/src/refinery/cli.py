"""Command-line entry point: ``refinery ingest|refine|evaluate|report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import dataset
from .analytics import trajectory_stats
from .aspects import TemplateError, build_backgrounds, load_catalog
from .config import Config, ConfigError, load_config
from .domain import parse_goal
from .evaluation import MetricValues, evaluate, format_table
from .llm import BackendError, CachingBackend, OpenAICompatibleBackend, ParseError, ScriptedBackend
from .orchestrator import Pipeline, run_batch
from .prompts import load_prompt_dir
from .traces import TraceDirectory, load_traces

log = logging.getLogger("refinery")


class CLIError(Exception):
    pass


def _config(args) -> Config:
    return load_config(args.config) if getattr(args, "config", None) else Config().validate()


def _backends(args, config: Config):
    """(refinement backend, judge backend) for the chosen --backend."""
    if args.backend == "scripted":
        if not args.script:
            raise CLIError("--backend scripted requires --script")
        backend = ScriptedBackend.from_file(args.script)
        return backend, backend
    bc = config.backend
    key = None
    if bc.api_key_env:
        key = os.environ.get(bc.api_key_env)
        if not key:
            raise CLIError(f"environment variable {bc.api_key_env} is not set")

    def make(model: str):
        b = OpenAICompatibleBackend(
            bc.base_url, model, api_key=key, api_key_env=bc.api_key_env,
            max_attempts=bc.max_attempts, backoff_base=bc.backoff_base, timeout=bc.timeout, max_in_flight=bc.max_in_flight,
            requests_per_second=bc.requests_per_second or None,
        )
        return CachingBackend(b) if bc.cache else b

    backend = make(bc.model)
    judge = make(bc.judge_model) if bc.judge_model else backend
    return backend, judge


def _features(ws: dataset.Workspace, config: Config) -> tuple[frozenset[str], str]:
    if ws.features:
        return ws.features, "corpus"
    reviews = [it.review for it in ws.train]
    log.warning("no feature set in workspace; extracting %d features from train reviews",
                config.metrics.fallback_feature_k)
    return dataset.extract_fallback_features(reviews, config.metrics.fallback_feature_k), "extracted"


def cmd_ingest(args) -> int:
    config = _config(args)
    corpus = dataset.load_corpus(args.interactions, args.items, args.features)
    split = dataset.leave_one_out_split(corpus)
    n = args.n_users or config.pipeline.n_users
    seed = config.pipeline.seed if args.seed is None else args.seed
    rows = dataset.sample_test_users(split, n, seed)
    samples, dropped = dataset.attach_base_outputs(rows, args.base_outputs, corpus.items)
    features, source = corpus.features, "corpus"
    if not features:
        features = dataset.extract_fallback_features(
            [it.review for it in split.train], config.metrics.fallback_feature_k
        )
        source = "extracted"
    ws = dataset.Workspace(samples, list(split.train), corpus.items, features)
    dataset.write_workspace(args.out, ws, split.test)
    manifest = {
        "n_interactions": len(corpus.interactions),
        "n_train": len(split.train),
        "n_test": len(split.test),
        "excluded_users": len(split.excluded_users),
        "n_samples": len(samples),
        "dropped_without_base_output": len(dropped),
        "n_features": len(features),
        "feature_source": source,
        "seed": seed,
    }
    Path(args.out, "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(samples)} samples to {args.out} "
          f"({len(dropped)} dropped, {len(split.excluded_users)} single-interaction users)")
    return 0


def cmd_refine(args) -> int:
    config = _config(args).with_overrides(
        max_rounds=args.max_rounds, max_length=args.max_length, parallelism=args.parallelism
    )
    goal = parse_goal(args.goal)
    ws = dataset.load_workspace(args.data)
    if not ws.samples:
        raise CLIError(f"no samples in {args.data}")
    features, _ = _features(ws, config)
    backend, judge = _backends(args, config)
    pipeline = Pipeline.from_config(
        config.pipeline,
        features=features,
        judge=judge,
        catalog=load_prompt_dir(args.prompts) if args.prompts else None,
        aspect_catalog=load_catalog(args.aspect_catalog) if args.aspect_catalog else None,
        summarizer=backend,
    )
    backgrounds = build_backgrounds(ws.samples, ws.train, ws.items)
    try:
        sink = TraceDirectory(args.out)
    except OSError as exc:
        raise CLIError(f"cannot write traces to {args.out}: {exc}") from exc
    results = run_batch(ws.samples, goal, backend, pipeline, backgrounds,
                        config.pipeline.parallelism, sink)
    failed = sum(r.failed for r in results)
    print(f"refined {len(results) - failed}/{len(results)} samples; traces in {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    config = _config(args)
    traces = load_traces(args.traces)
    if not traces:
        raise CLIError(f"no traces in {args.traces}")
    ws = dataset.load_workspace(args.data)
    features, source = _features(ws, config)
    _, judge = _backends(args, config)
    results = [r for r, _ in traces]
    backgrounds = build_backgrounds([r.sample for r in results], ws.train, ws.items)
    report = evaluate(
        results, judge, features, backgrounds,
        goal=traces[0][1],
        preference_threshold=config.pipeline.preference_threshold,
        max_attempts=config.pipeline.max_attempts,
        review_budget=config.metrics.review_budget,
        parallelism=args.parallelism,
        feature_source=source,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                   encoding="utf-8")
    sys.stdout.write(report.to_text())
    return 0


def cmd_report(args) -> int:
    traces = load_traces(args.traces)
    if not traces:
        raise CLIError(f"no traces in {args.traces}")
    goal = traces[0][1]
    stats = trajectory_stats([r for r, _ in traces])
    text = f"Goal: {goal.notation} ({goal.prose})\n\n" + stats.to_text()
    evaluation = Path(args.evaluation) if args.evaluation else None
    if evaluation is not None and evaluation.exists():
        data = json.loads(evaluation.read_text(encoding="utf-8"))
        table = format_table([
            ("Initial", MetricValues(**data["initial"])),
            ("Refined", MetricValues(**data["final"])),
        ], footer=f"n = {data['n_samples']}")
        text += "\n" + table
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    Path(out.with_suffix(".json")).write_text(
        json.dumps(stats.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    sys.stdout.write(text)
    return 0


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("scripted", "live"), default="live")
    p.add_argument("--script", help="JSON script for --backend scripted")
    p.add_argument("--config", help="TOML config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refinery", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", help="build split and samples from a review corpus")
    p.add_argument("--interactions", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--features")
    p.add_argument("--base-outputs", required=True)
    p.add_argument("--n-users", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("refine", help="run refinement episodes and write traces")
    p.add_argument("--data", default="data")
    p.add_argument("--goal", default="F=P=C", help="e.g. F=P=C, F>P>C, P>F=C")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--max-length", type=int)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--prompts", help="directory of prompt template overrides")
    p.add_argument("--aspect-catalog", help="JSON aspect materials override")
    p.add_argument("--out", default="traces")
    _backend_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="score traces with Entail/FCR/ENTR/CoR")
    p.add_argument("--data", default="data")
    p.add_argument("--traces", default="traces")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out", default="report.json")
    _backend_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="trajectory statistics and metric table")
    p.add_argument("--traces", default="traces")
    p.add_argument("--evaluation", default="report.json")
    p.add_argument("--out", default="report.txt")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, ConfigError, dataset.DataError, TemplateError, BackendError,
            ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cli_run(argv: Sequence[str] | None = None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
