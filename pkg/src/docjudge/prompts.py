"""Judge prompt templates and rendering.

Templates live in ``templates/*.txt``. Placeholders are ``{source}``,
``{translation}``, ``{checkpoints}``, ``{verdicts_acc}``, ``{verdicts_flu}``,
``{verdicts_app}`` and ``{verdicts_ckpt}``; any other brace text in a template
is literal. Substitution is a single pass, so bound values are never
re-scanned for placeholders.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .backend import JudgeKind
from .tasks import CandidateTranslation, Rubric, TranslationTask
from .verdicts import (
    CheckpointVerdict,
    VerdictSets,
    serialize_checkpoints,
    serialize_errors,
)

PLACEHOLDERS = (
    "source", "translation", "checkpoints",
    "verdicts_acc", "verdicts_flu", "verdicts_app", "verdicts_ckpt",
)
_PLACEHOLDER = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")

# Bump when a template file changes; versions feed the judge cache key.
TEMPLATE_VERSIONS = {
    JudgeKind.INSTRUCTION_FOLLOWING: "if-1",
    JudgeKind.CHECKPOINT: "ckpt-1",
    JudgeKind.ACCURACY: "acc-1",
    JudgeKind.FLUENCY: "flu-1",
    JudgeKind.APPROPRIATENESS: "app-1",
    JudgeKind.DEDUP: "dedup-1",
    JudgeKind.SINGLE: "single-1",
}
_FILES = {
    JudgeKind.INSTRUCTION_FOLLOWING: "instruction_following.txt",
    JudgeKind.CHECKPOINT: "checkpoint.txt",
    JudgeKind.ACCURACY: "accuracy.txt",
    JudgeKind.FLUENCY: "fluency.txt",
    JudgeKind.APPROPRIATENESS: "appropriateness.txt",
    JudgeKind.DEDUP: "dedup.txt",
    JudgeKind.SINGLE: "single_judge.txt",
}
QUALITY_KINDS = (JudgeKind.ACCURACY, JudgeKind.FLUENCY, JudgeKind.APPROPRIATENESS)


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    judge_kind: JudgeKind
    template_text: str
    version: str

    @property
    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER.findall(self.template_text))

    def render(self, **bindings: str) -> str:
        missing = self.placeholders - bindings.keys()
        if missing:
            raise PromptError(f"{self.judge_kind.value} template: unbound {sorted(missing)}")
        return _PLACEHOLDER.sub(lambda m: bindings[m.group(1)], self.template_text)


@lru_cache(maxsize=None)
def get_template(kind: JudgeKind | str) -> PromptTemplate:
    kind = JudgeKind(kind)
    text = resources.files("docjudge").joinpath("templates", _FILES[kind]).read_text(encoding="utf-8")
    return PromptTemplate(kind, text, TEMPLATE_VERSIONS[kind])


def format_rubrics(rubrics: Sequence[Rubric]) -> str:
    """Numbered checkpoint list: ``考点N: <description> (参考译文: a / b)``."""
    lines = []
    for n, rubric in enumerate(rubrics, start=1):
        line = f"考点{n}: {rubric.description}"
        if rubric.required_renderings:
            line += f" (参考译文: {' / '.join(rubric.required_renderings)})"
        lines.append(line)
    return "\n".join(lines)


def _check_pair(task: TranslationTask, candidate: CandidateTranslation) -> None:
    if candidate.task_id != task.id:
        raise PromptError(f"candidate for task {candidate.task_id!r} rendered against task {task.id!r}")


def render_if_prompt(task: TranslationTask, candidate: CandidateTranslation) -> str:
    _check_pair(task, candidate)
    return get_template(JudgeKind.INSTRUCTION_FOLLOWING).render(
        source=task.source_text, translation=candidate.output_text)


def render_checkpoint_prompt(task: TranslationTask, candidate: CandidateTranslation) -> str:
    _check_pair(task, candidate)
    return get_template(JudgeKind.CHECKPOINT).render(
        checkpoints=format_rubrics(task.rubrics), source=task.source_text,
        translation=candidate.output_text)


def render_quality_prompt(kind: JudgeKind | str, task: TranslationTask,
                          candidate: CandidateTranslation) -> str:
    kind = JudgeKind(kind)
    if kind not in QUALITY_KINDS:
        raise PromptError(f"{kind.value} is not a quality judge")
    _check_pair(task, candidate)
    return get_template(kind).render(source=task.source_text, translation=candidate.output_text)


def render_single_prompt(task: TranslationTask, candidate: CandidateTranslation) -> str:
    _check_pair(task, candidate)
    return get_template(JudgeKind.SINGLE).render(
        checkpoints=format_rubrics(task.rubrics) or "无", source=task.source_text,
        translation=candidate.output_text)


def _failed_checkpoints_text(verdicts: Sequence[CheckpointVerdict], rubrics: Sequence[Rubric]) -> str:
    return serialize_checkpoints(verdicts, rubrics) if verdicts else "无"


def render_dedup_prompt(sets: VerdictSets, rubrics: Sequence[Rubric] = ()) -> str:
    """Serialize the four verdict sets with the indices the engine uses."""
    return get_template(JudgeKind.DEDUP).render(
        verdicts_acc=serialize_errors(sets.accuracy),
        verdicts_flu=serialize_errors(sets.fluency),
        verdicts_app=serialize_errors(sets.appropriateness),
        verdicts_ckpt=_failed_checkpoints_text(sets.checkpoints, rubrics),
    )
