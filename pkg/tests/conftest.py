from __future__ import annotations

import csv
import sys
from pathlib import Path

import pytest

from docjudge.config import Ablation, RunConfig
from docjudge.tasks import load_tasks, load_translations
from docjudge.verdicts import CheckpointVerdict, Dimension, ErrorRecord, Severity

HERE = Path(__file__).resolve().parent
CORPUS = HERE / "fixtures" / "corpus"
SCRIPTED = CORPUS / "scripted"
DATA = HERE / "data"


def read_table(name: str) -> list[dict]:
    with (DATA / name).open(encoding="utf-8") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def err(dim: str, index: int, severity: str, paragraph: int = 1, error_type: str = "t",
        analysis: str = "a") -> ErrorRecord:
    return ErrorRecord(Dimension(dim), index, paragraph, error_type, analysis, Severity(severity))


def ckpt(index: int, correct: bool | None, rubric_id: str | None = None) -> CheckpointVerdict:
    return CheckpointVerdict(rubric_id or f"c{index}", index, 1, "analysis", correct)


def corpus_config(ablation: str | Ablation = Ablation.FULL, **overrides) -> RunConfig:
    return RunConfig(ablation=Ablation(ablation), fixture_dir=str(SCRIPTED), **overrides)


@pytest.fixture
def corpus_tasks():
    return load_tasks(CORPUS / "tasks.json")


@pytest.fixture
def corpus_translations():
    return load_translations(CORPUS / "translations.jsonl")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
