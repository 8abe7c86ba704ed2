"""Translation tasks, rubrics, candidate outputs and human scores.

Task files are one JSON document (``{"tasks": [...]}``); translations and
human scores are JSONL, one record per line.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable


class Direction(str, enum.Enum):
    ZH_TO_EN = "zh-en"
    EN_TO_ZH = "en-zh"

    @property
    def label(self) -> str:
        return "zh→en" if self is Direction.ZH_TO_EN else "en→zh"


class PrimaryDomain(str, enum.Enum):
    ACADEMIC = "Academic"
    NON_ACADEMIC = "NonAcademic"


class SecondaryDomain(str, enum.Enum):
    SOCIAL_SCIENCES = "Social Sciences"
    NATURAL_SCIENCES = "Natural Sciences"
    HUMANITIES = "Humanities"
    APPLIED_DISCIPLINES = "Applied Disciplines"
    NEWS_AND_INFORMATION = "News and Information"
    DOMAIN_SPECIFIC_SCENARIOS = "Domain-Specific Scenarios"
    LITERATURE_AND_ARTS = "Literature and Arts"

    @property
    def primary(self) -> PrimaryDomain:
        return DOMAIN_GROUPS[self]


DOMAIN_GROUPS: dict[SecondaryDomain, PrimaryDomain] = {
    SecondaryDomain.SOCIAL_SCIENCES: PrimaryDomain.ACADEMIC,
    SecondaryDomain.NATURAL_SCIENCES: PrimaryDomain.ACADEMIC,
    SecondaryDomain.HUMANITIES: PrimaryDomain.ACADEMIC,
    SecondaryDomain.APPLIED_DISCIPLINES: PrimaryDomain.ACADEMIC,
    SecondaryDomain.NEWS_AND_INFORMATION: PrimaryDomain.NON_ACADEMIC,
    SecondaryDomain.DOMAIN_SPECIFIC_SCENARIOS: PrimaryDomain.NON_ACADEMIC,
    SecondaryDomain.LITERATURE_AND_ARTS: PrimaryDomain.NON_ACADEMIC,
}


class RubricStrength(str, enum.Enum):
    REQUIRED = "required"
    RECOMMENDED = "recommended"


class TaskFileError(ValueError):
    """Raised when an input file violates its schema.

    ``diagnostics`` holds one ``"<location>: <problem>"`` string per violation.
    """

    def __init__(self, path: str | Path, diagnostics: list[str]):
        self.path = str(path)
        self.diagnostics = list(diagnostics)
        summary = "; ".join(self.diagnostics[:5])
        more = f" (+{len(self.diagnostics) - 5} more)" if len(self.diagnostics) > 5 else ""
        super().__init__(f"{self.path}: {summary}{more}")


@dataclass(frozen=True)
class Rubric:
    id: str
    description: str
    required_renderings: tuple[str, ...] = ()
    strength: RubricStrength = RubricStrength.REQUIRED

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError(f"rubric {self.id!r}: empty description")


@dataclass(frozen=True)
class TranslationTask:
    id: str
    direction: Direction
    primary_domain: PrimaryDomain
    secondary_domain: SecondaryDomain
    source_text: str
    rubrics: tuple[Rubric, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "primary_domain", PrimaryDomain(self.primary_domain))
        object.__setattr__(self, "secondary_domain", SecondaryDomain(self.secondary_domain))
        object.__setattr__(self, "rubrics", tuple(self.rubrics))
        if not self.source_text.strip():
            raise ValueError(f"task {self.id!r}: empty source_text")
        if self.secondary_domain.primary is not self.primary_domain:
            raise ValueError(
                f"task {self.id!r}: {self.secondary_domain.value!r} "
                f"belongs to {self.secondary_domain.primary.value}, not {self.primary_domain.value}"
            )
        ids = [r.id for r in self.rubrics]
        if len(set(ids)) != len(ids):
            raise ValueError(f"task {self.id!r}: duplicate rubric ids")


@dataclass(frozen=True)
class CandidateTranslation:
    task_id: str
    system_id: str
    output_text: str


@dataclass(frozen=True)
class HumanScore:
    task_id: str
    system_id: str
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 100.0:
            raise ValueError(f"human score {self.score} outside [0, 100]")


@dataclass
class CoverageReport:
    present: list[tuple[str, str]] = field(default_factory=list)
    missing: list[tuple[str, str]] = field(default_factory=list)
    orphans: list[tuple[str, str]] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing and not self.orphans


# -- parsing helpers ---------------------------------------------------------

def _enum_value(enum_cls, raw, loc: str, errors: list[str]):
    try:
        return enum_cls(raw)
    except ValueError:
        allowed = ", ".join(repr(m.value) for m in enum_cls)
        errors.append(f"{loc}: {raw!r} is not one of {allowed}")
        return None


def _string(obj: dict, key: str, loc: str, errors: list[str], *, allow_empty=False) -> str | None:
    if key not in obj:
        errors.append(f"{loc}.{key}: missing")
        return None
    value = obj[key]
    if not isinstance(value, str):
        errors.append(f"{loc}.{key}: expected string, got {type(value).__name__}")
        return None
    if not allow_empty and not value.strip():
        errors.append(f"{loc}.{key}: must be non-empty")
        return None
    return value


def _parse_rubric(raw: Any, loc: str, errors: list[str]) -> Rubric | None:
    if not isinstance(raw, dict):
        errors.append(f"{loc}: expected object")
        return None
    n_before = len(errors)
    rid = _string(raw, "id", loc, errors)
    desc = _string(raw, "description", loc, errors)
    renderings = raw.get("required_renderings", [])
    if not isinstance(renderings, list) or not all(isinstance(x, str) for x in renderings):
        errors.append(f"{loc}.required_renderings: expected list of strings")
    strength = _enum_value(RubricStrength, raw.get("strength", "required"), f"{loc}.strength", errors)
    if len(errors) > n_before:
        return None
    return Rubric(rid, desc, tuple(renderings), strength)


def _parse_task(raw: Any, loc: str, errors: list[str]) -> TranslationTask | None:
    if not isinstance(raw, dict):
        errors.append(f"{loc}: expected object")
        return None
    n_before = len(errors)
    tid = _string(raw, "id", loc, errors)
    source = _string(raw, "source_text", loc, errors)
    direction = _enum_value(Direction, raw.get("direction"), f"{loc}.direction", errors)
    primary = _enum_value(PrimaryDomain, raw.get("primary_domain"), f"{loc}.primary_domain", errors)
    secondary = _enum_value(SecondaryDomain, raw.get("secondary_domain"), f"{loc}.secondary_domain", errors)
    raw_rubrics = raw.get("rubrics", [])
    rubrics: list[Rubric] = []
    if not isinstance(raw_rubrics, list):
        errors.append(f"{loc}.rubrics: expected list")
    else:
        seen: set[str] = set()
        for j, r in enumerate(raw_rubrics):
            rubric = _parse_rubric(r, f"{loc}.rubrics[{j}]", errors)
            if rubric is None:
                continue
            if rubric.id in seen:
                errors.append(f"{loc}.rubrics[{j}].id: duplicate rubric id {rubric.id!r}")
            seen.add(rubric.id)
            rubrics.append(rubric)
    if primary is not None and secondary is not None and secondary.primary is not primary:
        errors.append(
            f"{loc}.secondary_domain: {secondary.value!r} belongs to {secondary.primary.value}, "
            f"not {primary.value}"
        )
    if len(errors) > n_before:
        return None
    return TranslationTask(tid, direction, primary, secondary, source, tuple(rubrics))


def parse_tasks(doc: Any, origin: str | Path = "<tasks>") -> list[TranslationTask]:
    errors: list[str] = []
    if not isinstance(doc, dict) or not isinstance(doc.get("tasks"), list):
        raise TaskFileError(origin, ["<root>: expected an object with a 'tasks' array"])
    tasks: list[TranslationTask] = []
    seen: dict[str, int] = {}
    for i, raw in enumerate(doc["tasks"]):
        task = _parse_task(raw, f"tasks[{i}]", errors)
        if task is None:
            continue
        if task.id in seen:
            errors.append(f"tasks[{i}].id: duplicate task id {task.id!r} (first at tasks[{seen[task.id]}])")
            continue
        seen[task.id] = i
        tasks.append(task)
    if errors:
        raise TaskFileError(origin, errors)
    return tasks


def load_tasks(path: str | Path) -> list[TranslationTask]:
    """Load and validate a task file; any violation rejects the whole file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TaskFileError(path, [f"line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    return parse_tasks(doc, path)


def task_to_dict(task: TranslationTask) -> dict:
    return {
        "id": task.id,
        "direction": task.direction.value,
        "primary_domain": task.primary_domain.value,
        "secondary_domain": task.secondary_domain.value,
        "source_text": task.source_text,
        "rubrics": [
            {
                "id": r.id,
                "description": r.description,
                "required_renderings": list(r.required_renderings),
                "strength": r.strength.value,
            }
            for r in task.rubrics
        ],
    }


def dump_tasks(tasks: Iterable[TranslationTask], path: str | Path) -> None:
    doc = {"tasks": [task_to_dict(t) for t in tasks]}
    Path(path).write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TaskFileError(path, [f"line {lineno}: malformed JSON ({exc.msg})"]) from exc
            if not isinstance(obj, dict):
                raise TaskFileError(path, [f"line {lineno}: expected a JSON object"])
            yield lineno, obj


def load_translations(path: str | Path) -> list[CandidateTranslation]:
    """Read candidate translations, preserving file order.

    Empty ``output_text`` is legal. Unknown task ids are not checked here.
    """
    path = Path(path)
    records: list[CandidateTranslation] = []
    seen: dict[tuple[str, str], int] = {}
    for lineno, obj in _read_jsonl(path):
        errors: list[str] = []
        tid = _string(obj, "task_id", f"line {lineno}", errors)
        sid = _string(obj, "system_id", f"line {lineno}", errors)
        text = _string(obj, "output_text", f"line {lineno}", errors, allow_empty=True)
        if errors:
            raise TaskFileError(path, errors)
        if (tid, sid) in seen:
            raise TaskFileError(
                path, [f"line {lineno}: duplicate ({tid}, {sid}) cell, first on line {seen[(tid, sid)]}"]
            )
        seen[(tid, sid)] = lineno
        records.append(CandidateTranslation(tid, sid, text))
    return records


def dump_translations(records: Iterable[CandidateTranslation], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"task_id": r.task_id, "system_id": r.system_id,
                                 "output_text": r.output_text}, ensure_ascii=False) + "\n")


def load_human_scores(path: str | Path) -> list[HumanScore]:
    path = Path(path)
    scores = []
    for lineno, obj in _read_jsonl(path):
        errors: list[str] = []
        tid = _string(obj, "task_id", f"line {lineno}", errors)
        sid = _string(obj, "system_id", f"line {lineno}", errors)
        score = obj.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            errors.append(f"line {lineno}.score: expected a number")
        elif not 0 <= score <= 100:
            errors.append(f"line {lineno}.score: {score} outside [0, 100]")
        if errors:
            raise TaskFileError(path, errors)
        scores.append(HumanScore(tid, sid, float(score)))
    return scores


def validate_coverage(tasks: Iterable[TranslationTask],
                      translations: Iterable[CandidateTranslation]) -> CoverageReport:
    """Cross every task with every system seen in ``translations``."""
    task_ids = [t.id for t in tasks]
    known = set(task_ids)
    systems: list[str] = []
    cells: set[tuple[str, str]] = set()
    report = CoverageReport()
    for tr in translations:
        if tr.system_id not in systems:
            systems.append(tr.system_id)
        if tr.task_id not in known:
            report.orphans.append((tr.task_id, tr.system_id))
        else:
            cells.add((tr.task_id, tr.system_id))
    for tid in task_ids:
        for sid in systems:
            (report.present if (tid, sid) in cells else report.missing).append((tid, sid))
    return report
