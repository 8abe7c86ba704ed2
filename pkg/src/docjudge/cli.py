"""Command line entry point: ``docjudge evaluate|score|report|meta-eval``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .meta_eval import MetaEvalError, ScoreMatrix, evaluate_consistency, render_consistency_table
from .pipeline import SCORES_FILE, TASKS_FILE, RunArtifact, evaluate, read_scores, rescore
from .report import ReportError, write_report
from .tasks import TaskFileError, load_human_scores, load_tasks, load_translations, validate_coverage


def _cmd_evaluate(args) -> dict:
    config = RunConfig.load(args.config)
    tasks = load_tasks(args.tasks)
    translations = load_translations(args.translations)
    coverage = validate_coverage(tasks, translations)
    for tid, sid in coverage.missing:
        logging.warning("no translation for task %s from system %s", tid, sid)
    for tid, sid in coverage.orphans:
        logging.warning("translation from %s references unknown task %s; skipped", sid, tid)
    artifact = evaluate(tasks, translations, config, out_dir=args.out)
    errored = artifact.errored()
    return {
        "status": "ok" if not errored else "partial",
        "artifact": str(args.out),
        "cells": len(artifact.cells),
        "scored": len(artifact.scores()),
        "errored": [[c.task_id, c.system_id, c.error] for c in errored],
    }


def _cmd_score(args) -> dict:
    artifact = RunArtifact.load(args.artifact)
    config = RunConfig.load(args.config) if args.config else None
    new = rescore(artifact, config)
    new.write(args.artifact)
    return {"status": "ok", "artifact": str(args.artifact), "scored": len(new.scores()),
            "errored": [[c.task_id, c.system_id, c.error] for c in new.errored()]}


def _cmd_report(args) -> dict:
    artifacts = [RunArtifact.load(d) for d in args.artifact]
    out = Path(args.out or args.artifact[0])
    out.mkdir(parents=True, exist_ok=True)
    md, js = write_report(artifacts, out, args.group_by)
    if not args.quiet:
        print(md.read_text(encoding="utf-8"))
    return {"status": "ok", "markdown": str(md), "json": str(js)}


def _metric_records(path: Path):
    if path.is_dir():
        path = path / SCORES_FILE
    return [(s.system_id, s.task_id, s.total) for s in read_scores(path)]


def _tasks_for_metric(args) -> Path:
    if args.tasks:
        return Path(args.tasks)
    # An artifact directory (or a scores file inside one) carries its tasks.
    metric = Path(args.metric)
    candidate = (metric if metric.is_dir() else metric.parent) / TASKS_FILE
    if not candidate.is_file():
        raise FileNotFoundError(f"no {TASKS_FILE} next to {metric}; pass --tasks")
    return candidate


def _cmd_meta_eval(args) -> dict:
    config = RunConfig.load(args.config)
    tasks = load_tasks(_tasks_for_metric(args))
    direction_of = {t.id: t.direction.value for t in tasks}
    human = ScoreMatrix.from_records(((h.system_id, h.task_id, h.score) for h in load_human_scores(args.human)),
                                     source="human")
    metric = ScoreMatrix.from_records(_metric_records(Path(args.metric)), source="metric")
    report = evaluate_consistency(
        human, metric, direction_of, tie_threshold=config.tie_threshold,
        permutations=config.spa_permutations, seed=config.spa_seed, metric_name=args.name,
    )
    table = render_consistency_table([report])
    payload = report.to_dict()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "consistency.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        (out / "consistency.md").write_text(table, encoding="utf-8")
    if not args.quiet:
        print(table)
    return {"status": "ok", **payload}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docjudge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="judge and score every (task, system) cell")
    p.add_argument("--tasks", required=True)
    p.add_argument("--translations", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="artifact directory")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("score", help="re-score an artifact from its recorded judge replies")
    p.add_argument("--artifact", required=True)
    p.add_argument("--config", help="re-weight with a different config (same ablation)")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("report", help="write leaderboards for one or more artifacts")
    p.add_argument("--artifact", required=True, action="append",
                   help="artifact directory; repeat for multiple runs")
    p.add_argument("--group-by", choices=["direction", "domain"])
    p.add_argument("--out", help="output directory (default: first artifact)")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("meta-eval", help="pairwise consistency of metric scores with human scores")
    p.add_argument("--metric", required=True, help="scores.jsonl or an artifact directory")
    p.add_argument("--human", required=True, help="human_scores.jsonl")
    p.add_argument("--tasks", help="tasks.json for translation directions (default: the artifact's own)")
    p.add_argument("--config")
    p.add_argument("--name", default="metric", help="metric name in the table")
    p.add_argument("--out")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=_cmd_meta_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except TaskFileError as exc:
        summary = {"status": "error", "kind": "input", "file": str(exc.path), "diagnostics": exc.diagnostics}
    except (MetaEvalError, ReportError, FileNotFoundError, ValueError) as exc:
        summary = {"status": "error", "kind": type(exc).__name__, "message": str(exc)}
    if summary["status"] == "error":
        print(json.dumps(summary, ensure_ascii=False), file=sys.stderr)
        return 2
    print(json.dumps(summary, ensure_ascii=False), file=sys.stderr)
    return 0 if summary["status"] == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
