"""Regenerate the scripted judge fixtures for the test corpus.

Judge replies are authored by hand in ``corpus/replies.json``, keyed by
task, system and judge kind (``<kind>@<ablation>`` for a reply that only
applies under one ablation). The scripted backend, however, looks replies up
by request key, which hashes the rendered prompt. This script runs the
pipeline once per ablation with a backend that answers from the hand-written
map and writes each answer to ``scripted/<request_key>.txt``.

    python tests/fixtures/build_scripted.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from docjudge.backend import JudgeClient, JudgeRequest, ResponseCache
from docjudge.config import Ablation, RunConfig
from docjudge.pipeline import evaluate
from docjudge.tasks import load_tasks, load_translations

CORPUS = Path(__file__).resolve().parent / "corpus"


class MappingBackend:
    def __init__(self, replies: dict, ablation: Ablation, out_dir: Path):
        self.replies = replies
        self.ablation = ablation
        self.out_dir = out_dir
        self.written: set[str] = set()

    def complete(self, req: JudgeRequest) -> str:
        task_id, system_id = req.cell
        cell = self.replies[task_id][system_id]
        kind = req.judge_kind.value
        text = cell.get(f"{kind}@{self.ablation.value}", cell.get(kind))
        if text is None:
            raise KeyError(f"no hand-written {kind} reply for ({task_id}, {system_id})")
        (self.out_dir / f"{req.request_key}.txt").write_text(text, encoding="utf-8")
        self.written.add(req.request_key)
        return text


def build(out_dir: Path, corpus: Path = CORPUS) -> set[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    replies = json.loads((corpus / "replies.json").read_text(encoding="utf-8"))
    tasks = load_tasks(corpus / "tasks.json")
    translations = load_translations(corpus / "translations.jsonl")
    written: set[str] = set()
    for ablation in Ablation:
        backend = MappingBackend(replies, ablation, out_dir)
        config = RunConfig(ablation=ablation, fixture_dir=str(out_dir), max_inflight=1)
        artifact = evaluate(tasks, translations, config, client=JudgeClient(backend, ResponseCache()))
        if artifact.errored():
            raise RuntimeError(f"{ablation.value}: errored cells {[c.error for c in artifact.errored()]}")
        written |= backend.written
    return written


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else CORPUS / "scripted"
    for stale in target.glob("*.txt"):
        stale.unlink()
    keys = build(target)
    print(f"wrote {len(keys)} fixtures to {target}")
