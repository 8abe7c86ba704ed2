"""Parsing of raw judge text into structured verdicts.

Judge replies are loosely JSON: keys are often unquoted, separators may be
full-width (``：``, ``，``) and the payload may sit inside a code fence.
Parsing first tries strict JSON and otherwise falls back to locating known
keys and slicing the text between them.
"""

from __future__ import annotations

import enum
import json
import re
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .tasks import Rubric


class Dimension(str, enum.Enum):
    ACCURACY = "accuracy"
    FLUENCY = "fluency"
    APPROPRIATENESS = "appropriateness"


class Severity(str, enum.Enum):
    MINOR = "minor"
    MAJOR = "major"
    CRITICAL = "critical"
    EXTREMELY_CRITICAL = "extremely_critical"


CHECKPOINT = "checkpoint"
DIMENSION_ORDER = {Dimension.ACCURACY: 0, Dimension.FLUENCY: 1, Dimension.APPROPRIATENESS: 2}

NO_PROBLEM = "整体无问题"
NO_DUPLICATES = "本次评估无重复问题"


class VerdictParseError(ValueError):
    """The judge reply has no recoverable structure."""


class VerdictWarning(UserWarning):
    """A reply parsed, but something was dropped or guessed."""


def _warn(message: str, on_warning: Callable[[str], None] | None) -> None:
    if on_warning is not None:
        on_warning(message)
    else:
        warnings.warn(message, VerdictWarning, stacklevel=3)


@dataclass(frozen=True)
class ErrorRecord:
    dimension: Dimension
    index: int
    paragraph: int | None
    error_type: str
    analysis: str
    severity: Severity

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("index must be >= 1")
        if self.paragraph is not None and self.paragraph < 1:
            raise ValueError("paragraph must be >= 1")
        allowed = _ALLOWED_SEVERITIES[self.dimension]
        if self.severity not in allowed:
            raise ValueError(f"{self.dimension.value} error cannot be {self.severity.value}")

    @property
    def handle(self) -> tuple[str, int]:
        return (self.dimension.value, self.index)


_ALLOWED_SEVERITIES = {
    Dimension.ACCURACY: {Severity.MAJOR, Severity.CRITICAL, Severity.EXTREMELY_CRITICAL},
    Dimension.FLUENCY: {Severity.MINOR},
    Dimension.APPROPRIATENESS: {Severity.MAJOR},
}


@dataclass(frozen=True)
class CheckpointVerdict:
    rubric_id: str
    index: int
    paragraph: int | None
    analysis: str
    correct: bool | None  # None: judge gave no entry for this rubric

    @property
    def handle(self) -> tuple[str, int]:
        return (CHECKPOINT, self.index)

    @property
    def failed(self) -> bool:
        return self.correct is False


@dataclass(frozen=True)
class IfVerdict:
    has_problem: bool
    level: str  # "major_need_problem" | "none"
    details: str = ""

    def __post_init__(self):
        if not self.has_problem and self.level != "none":
            raise ValueError("a passing verdict must have level 'none'")


Handle = tuple[str, int]


@dataclass(frozen=True)
class DedupDirective:
    kept: Handle
    removed: tuple[Handle, ...]
    rationale: str = ""

    def __post_init__(self):
        if self.kept in self.removed:
            raise ValueError("kept handle also listed as removed")

    @property
    def group(self) -> tuple[Handle, ...]:
        return (self.kept, *self.removed)


# -- key aliases ---------------------------------------------------------------

_KEY_ALIASES = {
    "index": ["问题序号", "考点序号", "index"],
    "paragraph": ["问题段落", "段落序号", "paragraph"],
    "type": ["问题类型", "错误类型", "error_type", "type"],
    "analysis": ["问题分析", "analysis"],
    "severity": ["问题严重程度", "严重程度", "severity"],
    "result": ["判断结果", "result", "verdict"],
    "dims": ["重复维度", "duplicate_dimensions"],
    "attribution": ["正确归因", "attribution"],
    "dimension": ["评估维度", "dimension"],
    "rubric": ["考点", "checkpoint"],
}
_ALIAS_TO_FIELD = {alias.lower(): name for name, aliases in _KEY_ALIASES.items() for alias in aliases}


def _alias_regex(alias: str) -> str:
    # ASCII keys must not be the tail of a longer word.
    return (r"(?<![A-Za-z_])" if alias.isascii() else "") + re.escape(alias)


# Longest first so that 问题严重程度 wins over 严重程度.
_KEY_PATTERN = re.compile(
    r"""["'“”]?(?P<key>""" + "|".join(
        _alias_regex(a) for a in sorted(_ALIAS_TO_FIELD, key=len, reverse=True)
    ) + r""")["'“”]?\s*[:：]""",
    re.IGNORECASE,
)
_FENCE = re.compile(r"```[^\n`]*\n?(.*?)```", re.DOTALL)


def strip_fences(raw: str) -> str:
    blocks = _FENCE.findall(raw)
    return "\n".join(blocks) if blocks else raw


# Structural debris around a scanned value: separators, braces of the
# enclosing (or next) record, and HTML paragraph tags some judges emit.
_EDGE_TAG = r"</?[A-Za-z][A-Za-z0-9]*\s*/?>"
_TRAILING_DEBRIS = re.compile(rf"(?:\s|[,，;；{{}}\[\]]|{_EDGE_TAG})+\Z")
_LEADING_DEBRIS = re.compile(rf"\A(?:\s|{_EDGE_TAG})+")


def _clean_value(value: str) -> str:
    value = _TRAILING_DEBRIS.sub("", value)
    value = _LEADING_DEBRIS.sub("", value)
    if len(value) >= 2 and value[0] in "\"'“‘「" and value[-1] in "\"'”’」":
        value = value[1:-1].strip()
    return value


def _normalize_keys(obj: dict) -> dict:
    out = {}
    for k, v in obj.items():
        name = _ALIAS_TO_FIELD.get(str(k).strip().lower())
        if name is not None and name not in out:
            out[name] = v
    return out


def _json_records(text: str) -> list[dict] | None:
    start = text.find("[")
    end = text.rfind("]")
    if start < 0 or end <= start:
        return None
    try:
        data = json.loads(text[start:end + 1])
    except json.JSONDecodeError:
        return None
    if not isinstance(data, list) or not all(isinstance(x, (dict, str)) for x in data):
        return None
    records = []
    for item in data:
        if isinstance(item, str):
            records.append({"_text": item})
        else:
            records.append(_normalize_keys(item))
    return records


def _split_records(text: str) -> list[dict]:
    """Key-scanning fallback for loosely formatted replies."""
    matches = list(_KEY_PATTERN.finditer(text))
    records: list[dict] = []
    current: dict = {}
    for i, m in enumerate(matches):
        name = _ALIAS_TO_FIELD[m.group("key").lower()]
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        value = _clean_value(text[m.end():end])
        if name in current:
            records.append(current)
            current = {}
        current[name] = value
    if current:
        records.append(current)
    return records


def extract_records(raw: str) -> list[dict]:
    """Return the reply's records as dicts keyed by canonical field names."""
    text = strip_fences(raw)
    records = _json_records(text)
    if records is None or not any(r for r in records if "_text" not in r):
        records = _split_records(text) or records or []
    return records


# -- severities ----------------------------------------------------------------

_ACCURACY_TOKENS = {
    "普通": Severity.MAJOR,
    "major": Severity.MAJOR,
    "严重": Severity.CRITICAL,
    "critical": Severity.CRITICAL,
    "非常严重": Severity.EXTREMELY_CRITICAL,
    "extremely critical": Severity.EXTREMELY_CRITICAL,
    "extremely_critical": Severity.EXTREMELY_CRITICAL,
}
_PROBLEM_TOKENS = {"有问题", "minor", "problem", "has problem"}
_FIXED_SEVERITY = {Dimension.FLUENCY: Severity.MINOR, Dimension.APPROPRIATENESS: Severity.MAJOR}


def _severity_token(value: str) -> str:
    token = re.sub(r"[（(].*?[)）]", "", str(value))
    token = token.strip().strip("\"'“”【】[]").strip()
    return token.lower()


def map_severity(value: str, dimension: Dimension) -> Severity:
    """Map a judge severity token to the fixed ladder for ``dimension``.

    Fluency is always minor and appropriateness always major, whatever
    ladder word the judge used. Unknown tokens raise.
    """
    token = _severity_token(value)
    known = token in _ACCURACY_TOKENS or token in _PROBLEM_TOKENS
    if not known:
        raise VerdictParseError(f"unknown severity token {value!r}")
    if dimension in _FIXED_SEVERITY:
        return _FIXED_SEVERITY[dimension]
    if token not in _ACCURACY_TOKENS:
        raise VerdictParseError(f"severity {value!r} is not on the accuracy ladder")
    return _ACCURACY_TOKENS[token]


def _is_no_problem(rec: dict) -> bool:
    sev = rec.get("severity", rec.get("_text", ""))
    return NO_PROBLEM in str(sev) or "无问题" == _severity_token(sev)


def _paragraph(value) -> int | None:
    if value is None:
        return None
    if isinstance(value, int) and not isinstance(value, bool):
        return value if value >= 1 else None
    m = re.search(r"\d+", str(value))
    if m and int(m.group()) >= 1:
        return int(m.group())
    return None


# -- quality judges --------------------------------------------------------------

_DIMENSION_NAMES = {
    "accuracy": Dimension.ACCURACY, "准确度": Dimension.ACCURACY, "准确性": Dimension.ACCURACY,
    "acc": Dimension.ACCURACY,
    "fluency": Dimension.FLUENCY, "流畅度": Dimension.FLUENCY, "流畅性": Dimension.FLUENCY,
    "flu": Dimension.FLUENCY,
    "appropriateness": Dimension.APPROPRIATENESS, "风格": Dimension.APPROPRIATENESS,
    "style": Dimension.APPROPRIATENESS, "app": Dimension.APPROPRIATENESS,
    "适当性": Dimension.APPROPRIATENESS, "风格一致度": Dimension.APPROPRIATENESS,
}


def _build_errors(records: Iterable[dict], dimension_of) -> list[ErrorRecord]:
    built: list[ErrorRecord] = []
    seen: set[tuple] = set()
    for rec in records:
        if _is_no_problem(rec):
            continue
        if "severity" not in rec:
            if set(rec) <= {"_text", "index"}:
                continue
            raise VerdictParseError(f"record without severity: {rec}")
        dim = dimension_of(rec)
        severity = map_severity(rec["severity"], dim)
        paragraph = _paragraph(rec.get("paragraph"))
        err_type = str(rec.get("type", "")).strip()
        analysis = str(rec.get("analysis", "")).strip()
        dup_key = (dim, paragraph, err_type, analysis)
        if dup_key in seen:
            continue
        seen.add(dup_key)
        built.append((dim, paragraph, err_type, analysis, severity))
    counters: dict[Dimension, int] = {}
    out = []
    for dim, paragraph, err_type, analysis, severity in built:
        counters[dim] = counters.get(dim, 0) + 1
        out.append(ErrorRecord(dim, counters[dim], paragraph, err_type, analysis, severity))
    return out


def _has_sentinel_only(raw: str) -> bool:
    return NO_PROBLEM in raw


def parse_error_list(raw: str, dimension: Dimension | str) -> list[ErrorRecord]:
    """Parse an accuracy, fluency or appropriateness reply.

    Records are renumbered 1..n in reply order; exact repeats (same
    paragraph, type and analysis) are collapsed.
    """
    dimension = Dimension(dimension)
    records = extract_records(raw)
    if not records:
        if _has_sentinel_only(raw):
            return []
        raise VerdictParseError(f"no {dimension.value} verdict structure found")
    return _build_errors(records, lambda rec: dimension)


def parse_combined_errors(raw: str) -> list[ErrorRecord]:
    """Parse the merged single-judge reply; each record names its dimension."""
    records = extract_records(raw)
    if not records:
        if _has_sentinel_only(raw):
            return []
        raise VerdictParseError("no combined verdict structure found")

    def dimension_of(rec):
        name = str(rec.get("dimension", "")).strip().lower()
        if name not in _DIMENSION_NAMES:
            raise VerdictParseError(f"record has no recognizable dimension: {rec.get('dimension')!r}")
        return _DIMENSION_NAMES[name]

    errors = _build_errors(records, dimension_of)
    return sorted(errors, key=lambda e: (DIMENSION_ORDER[e.dimension], e.index))


# -- checkpoints -----------------------------------------------------------------

_RESULT_TOKENS = {
    "正确": True, "对": True, "correct": True, "true": True, "pass": True, "yes": True,
    "错误": False, "错": False, "incorrect": False, "wrong": False, "false": False, "fail": False,
    "no": False,
}


def _result(value) -> bool:
    if isinstance(value, bool):
        return value
    token = _severity_token(value)
    if token in _RESULT_TOKENS:
        return _RESULT_TOKENS[token]
    raise VerdictParseError(f"unknown checkpoint result {value!r}")


def parse_checkpoints(raw: str, rubrics: Sequence[Rubric],
                      on_warning: Callable[[str], None] | None = None) -> list[CheckpointVerdict]:
    """One verdict per rubric, mapped positionally by the entry number.

    Rubrics the judge skipped come back with ``correct=None`` and a
    :class:`VerdictWarning`.
    """
    records = [r for r in extract_records(raw) if "result" in r]
    if not records:
        raise VerdictParseError("no checkpoint verdicts found")
    if len(records) != len(rubrics):
        _warn(f"{len(records)} checkpoint entries for {len(rubrics)} rubrics", on_warning)
    by_pos: dict[int, CheckpointVerdict] = {}
    for pos, rec in enumerate(records, start=1):
        number = _paragraph(rec.get("index"))
        if number is None or number > len(rubrics) or number in by_pos:
            number = pos
        if number > len(rubrics) or number in by_pos:
            _warn(f"checkpoint entry {pos} has no matching rubric; dropped", on_warning)
            continue
        by_pos[number] = CheckpointVerdict(
            rubrics[number - 1].id, number, _paragraph(rec.get("paragraph")),
            str(rec.get("analysis", "")).strip(), _result(rec["result"]),
        )
    out = []
    for number, rubric in enumerate(rubrics, start=1):
        if number in by_pos:
            out.append(by_pos[number])
        else:
            _warn(f"no checkpoint verdict for rubric {rubric.id!r}", on_warning)
            out.append(CheckpointVerdict(rubric.id, number, None, "", None))
    return out


# -- instruction following -------------------------------------------------------

_IF_ANSWER = re.compile(r"(?:是否存在问题|has[ _]problem)\s*[:：]\s*[\"“]?(是|否|yes|no)(?![A-Za-z])(?!\s*/)",
                        re.IGNORECASE)
_IF_LEVEL = re.compile(r"问题等级\s*[:：]\s*(主需问题|无)(?!\s*/)")


def parse_if(raw: str) -> IfVerdict:
    answers = _IF_ANSWER.findall(raw)
    if not answers:
        raise VerdictParseError("instruction-following reply has no 是否存在问题 answer")
    has_problem = answers[-1].lower() in {"是", "yes"}
    if not has_problem:
        return IfVerdict(False, "none", "")
    m = list(_IF_ANSWER.finditer(raw))[-1]
    tail = raw[m.end():]
    tail = _IF_LEVEL.sub("", tail).strip()
    return IfVerdict(True, "major_need_problem", tail)


# -- de-duplication ----------------------------------------------------------------

_HANDLE = re.compile(
    r"(?P<dim>accuracy|fluency|appropriateness|style|checkpoints?|acc|flu|app|准确度|流畅度|风格|考点)"
    r"\s*(?:问题|考点|#|no\.?)?\s*(?P<num>\d+)",
    re.IGNORECASE,
)
_BELONGS = re.compile(r"属于\s*【?\s*(accuracy|fluency|appropriateness|style|checkpoints?|准确度|流畅度|风格|考点)",
                      re.IGNORECASE)
_HANDLE_DIMS = {
    "accuracy": "accuracy", "acc": "accuracy", "准确度": "accuracy",
    "fluency": "fluency", "flu": "fluency", "流畅度": "fluency",
    "appropriateness": "appropriateness", "style": "appropriateness", "app": "appropriateness",
    "风格": "appropriateness",
    "checkpoint": CHECKPOINT, "checkpoints": CHECKPOINT, "考点": CHECKPOINT,
}


def _handles(text: str) -> list[Handle]:
    out: list[Handle] = []
    for m in _HANDLE.finditer(text or ""):
        h = (_HANDLE_DIMS[m.group("dim").lower()], int(m.group("num")))
        if h not in out:
            out.append(h)
    return out


@dataclass(frozen=True)
class VerdictSets:
    """The four verdict sets handed to the de-duplication step."""

    accuracy: tuple[ErrorRecord, ...] = ()
    fluency: tuple[ErrorRecord, ...] = ()
    appropriateness: tuple[ErrorRecord, ...] = ()
    checkpoints: tuple[CheckpointVerdict, ...] = ()  # failed checkpoints only

    @classmethod
    def build(cls, errors: Iterable[ErrorRecord], checkpoints: Iterable[CheckpointVerdict] = ()):
        errors = list(errors)
        return cls(
            tuple(e for e in errors if e.dimension is Dimension.ACCURACY),
            tuple(e for e in errors if e.dimension is Dimension.FLUENCY),
            tuple(e for e in errors if e.dimension is Dimension.APPROPRIATENESS),
            tuple(c for c in checkpoints if c.failed),
        )

    def records(self) -> dict[Handle, ErrorRecord | CheckpointVerdict]:
        out: dict[Handle, ErrorRecord | CheckpointVerdict] = {}
        for rec in (*self.accuracy, *self.fluency, *self.appropriateness, *self.checkpoints):
            out[rec.handle] = rec
        return out

    @property
    def errors(self) -> list[ErrorRecord]:
        return [*self.accuracy, *self.fluency, *self.appropriateness]

    def non_empty_count(self) -> int:
        return sum(bool(s) for s in (self.accuracy, self.fluency, self.appropriateness, self.checkpoints))


def parse_dedup(raw: str, sets: VerdictSets,
                on_warning: Callable[[str], None] | None = None) -> list[DedupDirective]:
    """Turn a de-duplication reply into directives over ``sets``.

    Handles that do not resolve are dropped with a :class:`VerdictWarning`.
    """
    records = extract_records(raw)
    if not records or not any(r.get("dims") or r.get("result") or r.get("attribution") for r in records):
        if NO_DUPLICATES in raw:
            return []
        raise VerdictParseError("no de-duplication structure found")
    known = sets.records()
    directives = []
    for rec in records:
        group = _handles(str(rec.get("dims", "")))
        judgment = " ".join(str(rec.get(k, "")) for k in ("result", "attribution"))
        if not group:
            group = _handles(judgment)
        if len(group) < 2:
            continue
        unresolved = [h for h in group if h not in known]
        for h in unresolved:
            _warn(f"dedup handle {h[0]}#{h[1]} does not exist; dropped", on_warning)
        group = [h for h in group if h in known]
        for h in _handles(judgment):
            if h in known and h not in group:
                group.append(h)
        if len(group) < 2:
            continue
        m = _BELONGS.search(judgment)
        owner = _HANDLE_DIMS[m.group(1).lower()] if m else None
        named_removed = [h for h in _handles(judgment) if h in group and h[0] != owner]
        kept = next((h for h in group if h[0] == owner and h not in named_removed), None)
        if kept is None:
            rest = [h for h in group if h not in named_removed]
            if len(rest) != 1:
                _warn(f"dedup entry without a clear attribution: {judgment.strip()!r}", on_warning)
                continue
            kept = rest[0]
        removed = tuple(named_removed) if named_removed else tuple(h for h in group if h != kept)
        removed = tuple(h for h in removed if h != kept)
        if removed:
            directives.append(DedupDirective(kept, removed, str(rec.get("analysis", "")).strip()))
    return directives


# -- canonical serialization ---------------------------------------------------------

_SEVERITY_WORDS = {
    Severity.MAJOR: "普通",
    Severity.CRITICAL: "严重",
    Severity.EXTREMELY_CRITICAL: "非常严重",
}


def error_to_dict(err: ErrorRecord) -> dict:
    para_key = "段落序号" if err.dimension is Dimension.APPROPRIATENESS else "问题段落"
    sev = _SEVERITY_WORDS[err.severity] if err.dimension is Dimension.ACCURACY else "有问题"
    return {
        "问题序号": err.index,
        para_key: err.paragraph,
        "问题类型": err.error_type,
        "问题分析": err.analysis,
        "问题严重程度": sev,
    }


def serialize_errors(errors: Sequence[ErrorRecord]) -> str:
    if not errors:
        return json.dumps([{"问题严重程度": NO_PROBLEM}], ensure_ascii=False)
    return json.dumps([error_to_dict(e) for e in errors], ensure_ascii=False, indent=1)


def checkpoint_to_dict(v: CheckpointVerdict, rubric: Rubric | None = None) -> dict:
    out = {"问题序号": v.index, "问题段落": v.paragraph}
    if rubric is not None:
        out["考点"] = rubric.description
    out["问题分析"] = v.analysis
    out["判断结果"] = {True: "正确", False: "错误", None: "未知"}[v.correct]
    return out


def serialize_checkpoints(verdicts: Sequence[CheckpointVerdict], rubrics: Sequence[Rubric] = ()) -> str:
    by_id = {r.id: r for r in rubrics}
    return json.dumps([checkpoint_to_dict(v, by_id.get(v.rubric_id)) for v in verdicts],
                      ensure_ascii=False, indent=1)


def error_from_dict(d: dict) -> ErrorRecord:
    return ErrorRecord(Dimension(d["dimension"]), d["index"], d["paragraph"], d["error_type"],
                       d["analysis"], Severity(d["severity"]))


def error_as_dict(err: ErrorRecord) -> dict:
    return {"dimension": err.dimension.value, "index": err.index, "paragraph": err.paragraph,
            "error_type": err.error_type, "analysis": err.analysis, "severity": err.severity.value}


def checkpoint_as_dict(v: CheckpointVerdict) -> dict:
    return {"rubric_id": v.rubric_id, "index": v.index, "paragraph": v.paragraph,
            "analysis": v.analysis, "correct": v.correct}
