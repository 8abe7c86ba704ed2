"""Severity-weighted scoring of surviving errors."""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .dedup import DedupOutcome
from .verdicts import CheckpointVerdict, Dimension, ErrorRecord, IfVerdict, Severity


@dataclass(frozen=True)
class SeverityWeights:
    minor: float = 2.0
    major: float = 5.0
    critical: float = 10.0
    extremely_critical: float = 50.0

    def __post_init__(self):
        ladder = [self.minor, self.major, self.critical, self.extremely_critical]
        if ladder[0] < 0 or any(a >= b for a, b in zip(ladder, ladder[1:])):
            raise ValueError(f"severity weights must be non-negative and strictly increasing: {ladder}")

    def weight(self, severity: Severity | str) -> float:
        return getattr(self, Severity(severity).value)


@dataclass(frozen=True)
class DimensionBudget:
    accuracy_max: float = 60.0
    fluency_max: float = 20.0
    appropriateness_max: float = 20.0

    def __post_init__(self):
        if min(self.accuracy_max, self.fluency_max, self.appropriateness_max) < 0:
            raise ValueError("budgets must be non-negative")
        if abs(self.accuracy_max + self.fluency_max + self.appropriateness_max - 100.0) > 1e-9:
            raise ValueError("dimension budgets must sum to 100")

    def max_for(self, dimension: Dimension | str) -> float:
        return getattr(self, f"{Dimension(dimension).value}_max")


@dataclass(frozen=True)
class ScoringConfig:
    weights: SeverityWeights = field(default_factory=SeverityWeights)
    budget: DimensionBudget = field(default_factory=DimensionBudget)
    checkpoint_severity: Severity = Severity.MAJOR
    # Dimensions that are scored; the rest are reported as 0 (accuracy-only ablation).
    dimensions: tuple[Dimension, ...] = (Dimension.ACCURACY, Dimension.FLUENCY, Dimension.APPROPRIATENESS)


@dataclass(frozen=True)
class LedgerEntry:
    dimension: Dimension
    item: str
    severity: Severity
    points: float


@dataclass(frozen=True)
class TaskScore:
    task_id: str
    system_id: str
    accuracy: float
    fluency: float
    appropriateness: float
    total: float
    if_failed: bool = False
    ledger: tuple[LedgerEntry, ...] = ()

    def dimension(self, dim: Dimension | str) -> float:
        return getattr(self, Dimension(dim).value)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "system_id": self.system_id,
            "total": self.total,
            "accuracy": self.accuracy,
            "fluency": self.fluency,
            "appropriateness": self.appropriateness,
            "if_failed": self.if_failed,
            "ledger": [
                {"dimension": e.dimension.value, "item": e.item, "severity": e.severity.value, "points": e.points}
                for e in self.ledger
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> TaskScore:
        ledger = tuple(LedgerEntry(Dimension(e["dimension"]), e["item"], Severity(e["severity"]), e["points"])
                       for e in d.get("ledger", []))
        return cls(d["task_id"], d["system_id"], d["accuracy"], d["fluency"], d["appropriateness"],
                   d["total"], d.get("if_failed", False), ledger)


def _clamp(value: float, hi: float) -> float:
    return min(max(value, 0.0), hi)


def score_dimension(errors: Iterable[ErrorRecord], dimension: Dimension | str,
                    weights: SeverityWeights = SeverityWeights(),
                    budget: DimensionBudget = DimensionBudget()) -> float:
    dimension = Dimension(dimension)
    total = 0.0
    for err in errors:
        if err.dimension is not dimension:
            raise ValueError(f"{err.dimension.value} error passed to {dimension.value} scoring")
        total += weights.weight(err.severity)
    return _clamp(budget.max_for(dimension) - total, budget.max_for(dimension))


def score_checkpoints(verdicts: Iterable[CheckpointVerdict], weights: SeverityWeights = SeverityWeights(),
                      severity: Severity = Severity.MAJOR) -> float:
    """Accuracy points lost to failed checkpoints; unknown verdicts cost nothing."""
    return sum(weights.weight(severity) for v in verdicts if v.failed)


def _error_item(err: ErrorRecord) -> str:
    label = f"{err.dimension.value}#{err.index}"
    return f"{label} {err.error_type}" if err.error_type else label


def score_task(outcome: DedupOutcome | None, if_verdict: IfVerdict, config: ScoringConfig = ScoringConfig(),
               *, task_id: str = "", system_id: str = "") -> TaskScore:
    if if_verdict.has_problem:
        return TaskScore(task_id, system_id, 0.0, 0.0, 0.0, 0.0, if_failed=True)
    if outcome is None:
        raise ValueError("a passing cell needs a dedup outcome to score")
    ledger: list[LedgerEntry] = []
    for err in outcome.surviving_errors:
        if err.dimension in config.dimensions:
            ledger.append(LedgerEntry(err.dimension, _error_item(err), err.severity,
                                      config.weights.weight(err.severity)))
    if Dimension.ACCURACY in config.dimensions:
        for v in outcome.failed_checkpoints:
            if v.failed:
                ledger.append(LedgerEntry(Dimension.ACCURACY, f"checkpoint#{v.index} {v.rubric_id}",
                                          config.checkpoint_severity,
                                          config.weights.weight(config.checkpoint_severity)))
    scores = {}
    for dim in Dimension:
        if dim not in config.dimensions:
            scores[dim] = 0.0
            continue
        lost = sum(e.points for e in ledger if e.dimension is dim)
        cap = config.budget.max_for(dim)
        scores[dim] = _clamp(cap - lost, cap)
    acc, flu, app = scores[Dimension.ACCURACY], scores[Dimension.FLUENCY], scores[Dimension.APPROPRIATENESS]
    return TaskScore(task_id, system_id, acc, flu, app, acc + flu + app, False, tuple(ledger))


# -- aggregation -------------------------------------------------------------------

@dataclass(frozen=True)
class SystemScore:
    system_id: str
    overall: float
    accuracy: float
    fluency: float
    appropriateness: float
    n: int
    std: float = 0.0
    runs: tuple[float, ...] = ()


def aggregate_system(scores: Sequence[TaskScore], system_id: str | None = None) -> SystemScore:
    """Arithmetic means over one system's task scores."""
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    sid = system_id or scores[0].system_id
    acc = statistics.fmean(s.accuracy for s in scores)
    flu = statistics.fmean(s.fluency for s in scores)
    app = statistics.fmean(s.appropriateness for s in scores)
    overall = statistics.fmean(s.total for s in scores)
    return SystemScore(sid, overall, acc, flu, app, len(scores))


def aggregate_all(scores: Iterable[TaskScore], key: Callable[[TaskScore], str] | None = None
                  ) -> dict[str, list[SystemScore]]:
    """Group scores (by ``key``, e.g. direction) and aggregate per system.

    Groups are returned in first-seen order, systems sorted by overall score.
    """
    groups: dict[str, dict[str, list[TaskScore]]] = defaultdict(lambda: defaultdict(list))
    for s in scores:
        groups[key(s) if key else "all"][s.system_id].append(s)
    return {
        g: sorted((aggregate_system(v, sid) for sid, v in by_sys.items()), key=lambda x: (-x.overall, x.system_id))
        for g, by_sys in groups.items()
    }


def aggregate_runs(runs: Sequence[Sequence[TaskScore]]) -> list[SystemScore]:
    """Mean and sample standard deviation of system scores across repeated runs."""
    per_run = [aggregate_all(run)["all"] if run else [] for run in runs]
    by_sys: dict[str, list[SystemScore]] = defaultdict(list)
    for run in per_run:
        for s in run:
            by_sys[s.system_id].append(s)
    out = []
    for sid, items in by_sys.items():
        totals = tuple(s.overall for s in items)
        out.append(SystemScore(
            sid,
            statistics.fmean(totals),
            statistics.fmean(s.accuracy for s in items),
            statistics.fmean(s.fluency for s in items),
            statistics.fmean(s.appropriateness for s in items),
            sum(s.n for s in items),
            statistics.stdev(totals) if len(totals) > 1 else 0.0,
            totals,
        ))
    return sorted(out, key=lambda x: (-x.overall, x.system_id))
