"""End-to-end evaluation of (task, system) cells.

Per cell: instruction-following gate, then the checkpoint and quality judges
(concurrently), then the de-duplication judge, the dedup engine and the
scorer. Every raw judge reply is kept in the run artifact so that scores can
be recomputed later without calling any judge.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .backend import (
    BackendError,
    JudgeClient,
    JudgeKind,
    JudgeRequest,
    LiveBackend,
    ResponseCache,
    ScriptedBackend,
)
from .config import Ablation, RunConfig
from .dedup import DedupOutcome, apply_dedup, dedup_disabled_passthrough
from .prompts import (
    TEMPLATE_VERSIONS,
    render_checkpoint_prompt,
    render_dedup_prompt,
    render_if_prompt,
    render_quality_prompt,
    render_single_prompt,
)
from .scoring import TaskScore, score_task
from .tasks import CandidateTranslation, TranslationTask, dump_tasks, load_tasks, validate_coverage
from .verdicts import (
    CheckpointVerdict,
    Dimension,
    ErrorRecord,
    IfVerdict,
    VerdictParseError,
    VerdictSets,
    checkpoint_as_dict,
    error_as_dict,
    parse_checkpoints,
    parse_combined_errors,
    parse_dedup,
    parse_error_list,
    parse_if,
)

log = logging.getLogger(__name__)

CELLS_FILE = "cells.jsonl"
SCORES_FILE = "scores.jsonl"
RUN_FILE = "run.json"
TASKS_FILE = "tasks.json"
CACHE_FILE = "cache.jsonl"


class CellError(RuntimeError):
    pass


@dataclass
class Ask:
    """One judge question: the prompt and how to parse the reply."""

    kind: JudgeKind
    prompt: str
    parse: Callable[[str], object]


# ``ask_many`` answers a batch of questions, returning parsed results in order.
AskMany = Callable[[Sequence[Ask]], list]


@dataclass
class CellRecord:
    task_id: str
    system_id: str
    status: str = "pending"  # scored | if_failed | errored
    error: str | None = None
    responses: dict[str, list[dict]] = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    dedup: dict = field(default_factory=dict)
    score: TaskScore | None = None
    warnings: list[str] = field(default_factory=list)
    judge_calls: int = 0

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "system_id": self.system_id,
            "status": self.status,
            "error": self.error,
            "judge_calls": self.judge_calls,
            "responses": self.responses,
            "verdicts": self.verdicts,
            "dedup": self.dedup,
            "score": self.score.to_dict() if self.score else None,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CellRecord:
        rec = cls(d["task_id"], d["system_id"], d["status"], d.get("error"), d.get("responses", {}),
                  d.get("verdicts", {}), d.get("dedup", {}), None, d.get("warnings", []),
                  d.get("judge_calls", 0))
        if d.get("score"):
            rec.score = TaskScore.from_dict(d["score"])
        return rec


def _outcome_dict(outcome: DedupOutcome) -> dict:
    return {
        "disabled": outcome.dedup_disabled,
        "surviving": [f"{e.dimension.value}#{e.index}" for e in outcome.surviving_errors],
        "failed_checkpoints": [f"checkpoint#{c.index}" for c in outcome.failed_checkpoints],
        "removed": [{"handle": f"{r.handle[0]}#{r.handle[1]}", "reason": r.reason} for r in outcome.removed],
        "overrides": [
            {
                "judge_kept": "%s#%d" % o.directive.kept,
                "judge_removed": ["%s#%d" % h for h in o.directive.removed],
                "applied_kept": ["%s#%d" % h for h in o.applied_kept],
                "applied_removed": ["%s#%d" % h for h in o.applied_removed],
                "note": o.note,
            }
            for o in outcome.overrides
        ],
        "skipped": list(outcome.skipped),
    }


def judge_cell(task: TranslationTask, cand: CandidateTranslation, config: RunConfig, ask_many: AskMany,
               record: CellRecord) -> None:
    """Run the judging workflow for one cell, filling ``record`` in place."""
    warn = record.warnings.append
    if_verdict: IfVerdict = ask_many([Ask(JudgeKind.INSTRUCTION_FOLLOWING, render_if_prompt(task, cand),
                                          parse_if)])[0]
    record.verdicts["instruction_following"] = {
        "has_problem": if_verdict.has_problem, "level": if_verdict.level, "details": if_verdict.details}
    scoring = config.scoring()
    if if_verdict.has_problem:
        record.status = "if_failed"
        record.score = score_task(None, if_verdict, scoring, task_id=task.id, system_id=cand.system_id)
        return

    asks: list[Ask] = []
    if task.rubrics and config.ablation is not Ablation.SINGLE_JUDGE:
        asks.append(Ask(JudgeKind.CHECKPOINT, render_checkpoint_prompt(task, cand),
                        lambda raw: parse_checkpoints(raw, task.rubrics, warn)))
    if config.ablation is Ablation.SINGLE_JUDGE:
        asks.append(Ask(JudgeKind.SINGLE, render_single_prompt(task, cand), parse_combined_errors))
    else:
        kinds = [JudgeKind.ACCURACY]
        if config.ablation is not Ablation.ACCURACY_ONLY:
            kinds += [JudgeKind.FLUENCY, JudgeKind.APPROPRIATENESS]
        for kind in kinds:
            asks.append(Ask(kind, render_quality_prompt(kind, task, cand),
                            lambda raw, d=Dimension(kind.value): parse_error_list(raw, d)))
    results = ask_many(asks)

    errors: list[ErrorRecord] = []
    checkpoints: list[CheckpointVerdict] = []
    for a, result in zip(asks, results):
        if a.kind is JudgeKind.CHECKPOINT:
            checkpoints = result
            record.verdicts["checkpoint"] = [checkpoint_as_dict(v) for v in result]
        else:
            errors.extend(result)
            record.verdicts[a.kind.value] = [error_as_dict(e) for e in result]
    sets = VerdictSets.build(errors, checkpoints)

    if config.ablation in (Ablation.NO_DEDUP, Ablation.SINGLE_JUDGE):
        outcome = dedup_disabled_passthrough(sets)
    elif sets.non_empty_count() >= 2:
        directives = ask_many([Ask(JudgeKind.DEDUP, render_dedup_prompt(sets, task.rubrics),
                                   lambda raw: parse_dedup(raw, sets, warn))])[0]
        record.verdicts["dedup"] = [
            {"kept": "%s#%d" % d.kept, "removed": ["%s#%d" % h for h in d.removed], "rationale": d.rationale}
            for d in directives
        ]
        outcome = apply_dedup(sets, directives)
    else:
        outcome = apply_dedup(sets, [])
    record.dedup = _outcome_dict(outcome)
    record.score = score_task(outcome, if_verdict, scoring, task_id=task.id, system_id=cand.system_id)
    record.status = "scored"


class LiveAsker:
    """Answers questions through a :class:`JudgeClient`, re-asking on parse failure."""

    def __init__(self, client: JudgeClient, config: RunConfig, record: CellRecord):
        self.client = client
        self.config = config
        self.record = record
        self._lock = threading.Lock()

    def one(self, ask: Ask):
        req = JudgeRequest(ask.kind, ask.prompt, self.config.model_id, self.config.temperature,
                           TEMPLATE_VERSIONS[ask.kind], cell=(self.record.task_id, self.record.system_id))
        attempts = []
        last: Exception | None = None
        try:
            for _ in range(self.config.parse_retries + 1):
                resp = self.client.call_judge(req)
                attempts.append({"request_key": resp.request_key, "raw_text": resp.raw_text})
                try:
                    return ask.parse(resp.raw_text)
                except VerdictParseError as exc:
                    last = exc
                    self.record.warnings.append(f"{ask.kind.value} attempt {req.attempt}: {exc}")
                    req = req.retry()
            raise CellError(f"{ask.kind.value}: unparseable after {len(attempts)} attempts: {last}")
        finally:
            with self._lock:
                self.record.responses[ask.kind.value] = attempts
                self.record.judge_calls += len(attempts)

    def __call__(self, asks: Sequence[Ask]) -> list:
        if len(asks) == 1:
            return [self.one(asks[0])]
        with ThreadPoolExecutor(max_workers=len(asks)) as pool:
            return list(pool.map(self.one, asks))


class ReplayAsker:
    """Answers questions from replies recorded in a cell, never calling a judge."""

    def __init__(self, record: CellRecord):
        self.record = record

    def __call__(self, asks: Sequence[Ask]) -> list:
        out = []
        for ask in asks:
            attempts = self.record.responses.get(ask.kind.value)
            if not attempts:
                raise CellError(f"no recorded {ask.kind.value} reply")
            last: Exception | None = None
            for att in attempts:
                try:
                    out.append(ask.parse(att["raw_text"]))
                    break
                except VerdictParseError as exc:
                    last = exc
            else:
                raise CellError(f"{ask.kind.value}: no recorded reply parses: {last}")
        return out


def make_client(config: RunConfig, cache_path: str | Path | None = None) -> JudgeClient:
    if config.backend == "scripted":
        if not config.fixture_dir:
            raise ValueError("scripted backend needs fixture_dir")
        backend = ScriptedBackend(config.fixture_dir)
    else:
        if not config.endpoint:
            raise ValueError("live backend needs an endpoint")
        backend = LiveBackend(config.endpoint, config.api_key)
    return JudgeClient(backend, ResponseCache(cache_path), retries=config.transport_retries,
                       max_inflight=config.max_inflight)


@dataclass
class RunArtifact:
    cells: list[CellRecord]
    metadata: dict
    tasks: list[TranslationTask]

    def scores(self) -> list[TaskScore]:
        return [c.score for c in self.cells if c.score is not None and c.status != "errored"]

    def errored(self) -> list[CellRecord]:
        return [c for c in self.cells if c.status == "errored"]

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dump_tasks(self.tasks, out / TASKS_FILE)
        with (out / CELLS_FILE).open("w", encoding="utf-8") as fh:
            for c in self.cells:
                fh.write(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        write_scores(self.scores(), out / SCORES_FILE)
        (out / RUN_FILE).write_text(json.dumps(self.metadata, ensure_ascii=False, indent=2) + "\n",
                                    encoding="utf-8")
        return out

    @classmethod
    def load(cls, artifact_dir: str | Path) -> RunArtifact:
        d = Path(artifact_dir)
        if not (d / CELLS_FILE).is_file():
            raise FileNotFoundError(f"{d} is not a run artifact (no {CELLS_FILE})")
        with (d / CELLS_FILE).open(encoding="utf-8") as fh:
            cells = [CellRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
        metadata = json.loads((d / RUN_FILE).read_text(encoding="utf-8"))
        return cls(cells, metadata, load_tasks(d / TASKS_FILE))


def write_scores(scores: Sequence[TaskScore], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in scores:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_scores(path: str | Path) -> list[TaskScore]:
    with Path(path).open(encoding="utf-8") as fh:
        return [TaskScore.from_dict(json.loads(line)) for line in fh if line.strip()]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def evaluate(tasks: Sequence[TranslationTask], translations: Sequence[CandidateTranslation],
             config: RunConfig, client: JudgeClient | None = None,
             out_dir: str | Path | None = None) -> RunArtifact:
    """Judge and score every cell; a failing cell is marked errored and the run continues."""
    out_dir = out_dir or config.output_dir
    if client is None:
        client = make_client(config, Path(out_dir) / CACHE_FILE if out_dir else None)
    started = _now()
    coverage = validate_coverage(tasks, translations)
    by_id = {t.id: t for t in tasks}
    cells = [CellRecord(c.task_id, c.system_id) for c in translations if c.task_id in by_id]
    cands = [c for c in translations if c.task_id in by_id]

    def run(pair):
        record, cand = pair
        try:
            judge_cell(by_id[cand.task_id], cand, config, LiveAsker(client, config, record), record)
        except (BackendError, CellError) as exc:
            record.status = "errored"
            record.error = str(exc)
            record.score = None
            log.warning("cell (%s, %s) errored: %s", record.task_id, record.system_id, exc)
        # Concurrent judges append in completion order; sort for stable artifacts.
        record.warnings.sort()
        return record

    with ThreadPoolExecutor(max_workers=config.max_inflight) as pool:
        list(pool.map(run, zip(cells, cands)))

    metadata = {
        "tool_version": __version__,
        "config": config.echo(),
        "config_hash": config.config_hash(),
        "prompt_versions": {k.value: v for k, v in TEMPLATE_VERSIONS.items()},
        "started_at": started,
        "finished_at": _now(),
        "cells": len(cells),
        "errored": [[c.task_id, c.system_id, c.error] for c in cells if c.status == "errored"],
        "missing_cells": [list(x) for x in coverage.missing],
        "orphans": [list(x) for x in coverage.orphans],
    }
    artifact = RunArtifact(cells, metadata, list(tasks))
    if out_dir:
        artifact.write(out_dir)
    return artifact


def rescore(artifact: RunArtifact, config: RunConfig | None = None) -> RunArtifact:
    """Recompute verdicts, dedup outcomes and scores from recorded replies only.

    ``config`` defaults to the one recorded in the artifact; pass another one
    to re-weight. Changing the ablation mode is not possible offline because
    it changes which judges were asked.
    """
    recorded = RunConfig.from_dict(artifact.metadata["config"])
    config = config or recorded
    if config.ablation is not recorded.ablation:
        raise ValueError(f"artifact was judged under ablation {recorded.ablation.value!r}; "
                         f"cannot rescore as {config.ablation.value!r}")
    by_id = {t.id: t for t in artifact.tasks}
    cells = []
    for old in artifact.cells:
        rec = CellRecord(old.task_id, old.system_id, responses=old.responses, judge_calls=0)
        if old.status == "errored":
            rec.status, rec.error = "errored", old.error
        else:
            cand = CandidateTranslation(old.task_id, old.system_id, "")
            try:
                judge_cell(by_id[old.task_id], cand, config, ReplayAsker(rec), rec)
            except CellError as exc:
                rec.status, rec.error, rec.score = "errored", str(exc), None
        rec.warnings.sort()
        cells.append(rec)
    metadata = dict(artifact.metadata, config=config.echo(), config_hash=config.config_hash(),
                    rescored_at=_now())
    return RunArtifact(cells, metadata, artifact.tasks)
