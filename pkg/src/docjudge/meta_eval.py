"""Pairwise agreement between a metric and human judgments.

System level uses soft pairwise accuracy (SPA): for each system pair a
one-sided paired permutation p-value is computed under human and under
metric scores, and the pair contributes ``1 - |p_human - p_metric|``.
Segment level counts, per segment, the system pairs whose ordering agrees,
with human ties counted as agreement when the metric gap is below a
threshold.
"""

from __future__ import annotations

import itertools
import logging
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

TIE_EPS = 1e-12
TASK_ORDER = ("system_zh-en", "system_en-zh", "segment_zh-en", "segment_en-zh")


class MetaEvalError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreMatrix:
    systems: tuple[str, ...]
    segments: tuple[str, ...]
    values: np.ndarray  # shape (len(systems), len(segments))
    normalized: bool = False
    source: str = "metric"  # "human" | "metric"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.systems), len(self.segments)):
            raise MetaEvalError(f"values shape {values.shape} does not match "
                                f"{len(self.systems)} systems x {len(self.segments)} segments")
        if np.isnan(values).any():
            raise MetaEvalError("score matrix has missing cells")
        if self.normalized and ((values < 0).any() or (values > 1).any()):
            raise MetaEvalError("normalized matrix has values outside [0, 1]")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str, float]], source: str = "metric",
                     normalized: bool = False) -> ScoreMatrix:
        """Build from ``(system_id, segment_id, score)`` triples; cells must be complete."""
        table: dict[tuple[str, str], float] = {}
        systems: list[str] = []
        segments: list[str] = []
        for sys_id, seg_id, score in records:
            if sys_id not in systems:
                systems.append(sys_id)
            if seg_id not in segments:
                segments.append(seg_id)
            table[(sys_id, seg_id)] = float(score)
        values = np.full((len(systems), len(segments)), np.nan)
        for (sys_id, seg_id), v in table.items():
            values[systems.index(sys_id), segments.index(seg_id)] = v
        return cls(tuple(systems), tuple(segments), values, normalized, source)

    def select(self, systems: Sequence[str], segments: Sequence[str]) -> ScoreMatrix:
        rows = [self.systems.index(s) for s in systems]
        cols = [self.segments.index(s) for s in segments]
        return ScoreMatrix(tuple(systems), tuple(segments), self.values[np.ix_(rows, cols)],
                           self.normalized, self.source)


def align(human: ScoreMatrix, metric: ScoreMatrix) -> tuple[ScoreMatrix, ScoreMatrix]:
    """Restrict both matrices to their shared systems and segments."""
    systems = [s for s in human.systems if s in set(metric.systems)]
    segments = [s for s in human.segments if s in set(metric.segments)]
    if not systems or not segments:
        raise MetaEvalError(
            f"no overlap between human and metric scores "
            f"(shared systems: {systems or 'none'}, shared segments: {segments or 'none'})")
    return human.select(systems, segments), metric.select(systems, segments)


def normalize(matrix: ScoreMatrix, max_scale: float = 100.0) -> ScoreMatrix:
    if max_scale <= 0:
        raise MetaEvalError("max_scale must be positive")
    bad = np.argwhere((matrix.values < 0) | (matrix.values > max_scale))
    if bad.size:
        i, j = bad[0]
        raise MetaEvalError(f"{matrix.source} score {matrix.values[i, j]} for "
                            f"({matrix.systems[i]}, {matrix.segments[j]}) outside [0, {max_scale}]")
    return ScoreMatrix(matrix.systems, matrix.segments, matrix.values / max_scale, True, matrix.source)


def _check_aligned(human: ScoreMatrix, metric: ScoreMatrix) -> None:
    if human.systems != metric.systems or human.segments != metric.segments:
        raise MetaEvalError("matrices are not aligned; call align() first")


def pair_consistent(dh: float, dm: float, tie_threshold: float = 0.05,
                    require_separation: bool = False) -> bool:
    """Classify one system pair from its human and metric score gaps.

    With ``require_separation`` a metric gap below the threshold counts as a
    metric tie, and therefore as disagreement when humans separated the pair.
    """
    if abs(dh) <= TIE_EPS:
        return abs(dm) < tie_threshold
    if require_separation and abs(dm) < tie_threshold:
        return False
    return np.sign(dh) == np.sign(dm)


def segment_pair_counts(human: ScoreMatrix, metric: ScoreMatrix, tie_threshold: float = 0.05,
                        require_separation: bool = False) -> tuple[int, int]:
    _check_aligned(human, metric)
    n_sys = len(human.systems)
    if n_sys < 2:
        raise MetaEvalError("segment consistency needs at least 2 systems")
    h, m = human.values, metric.values
    consistent = total = 0
    for i, j in itertools.combinations(range(n_sys), 2):
        dh = h[i] - h[j]
        dm = m[i] - m[j]
        for a, b in zip(dh, dm):
            total += 1
            consistent += pair_consistent(a, b, tie_threshold, require_separation)
    return consistent, total


def segment_consistency(human: ScoreMatrix, metric: ScoreMatrix, tie_threshold: float = 0.05,
                        require_separation: bool = False) -> float:
    consistent, total = segment_pair_counts(human, metric, tie_threshold, require_separation)
    return consistent / total


# -- soft pairwise accuracy -------------------------------------------------------

def sign_flips(n_segments: int, permutations: int, seed: int) -> np.ndarray:
    """Sign patterns for the paired permutation test.

    Exhaustive when ``2**n_segments <= permutations``; otherwise the identity
    pattern plus ``permutations - 1`` random draws.
    """
    if n_segments < 63 and 2 ** n_segments <= permutations:
        grid = np.array(list(itertools.product((1.0, -1.0), repeat=n_segments)))
        return grid
    rng = np.random.default_rng(seed)
    draws = rng.choice((1.0, -1.0), size=(permutations - 1, n_segments))
    return np.vstack([np.ones((1, n_segments)), draws])


def permutation_pvalue(a: np.ndarray, b: np.ndarray, flips: np.ndarray) -> float | None:
    """One-sided p-value that system ``a`` scores higher than ``b``.

    Returns ``None`` when all per-segment differences are zero.
    """
    diff = np.asarray(a, float) - np.asarray(b, float)
    if np.all(np.abs(diff) <= TIE_EPS):
        return None
    observed = diff.mean()
    stats = flips @ diff / diff.size
    return float(np.mean(stats >= observed - 1e-12))


def spa_from_pvalues(p_human: Sequence[float], p_metric: Sequence[float]) -> float:
    ph = np.asarray(p_human, float)
    pm = np.asarray(p_metric, float)
    if ph.shape != pm.shape or ph.size == 0:
        raise MetaEvalError("p-value lists must be non-empty and of equal length")
    return float(np.mean(1.0 - np.abs(ph - pm)))


def pairwise_pvalues(matrix: ScoreMatrix, flips: np.ndarray) -> list[float]:
    out = []
    for i, j in itertools.combinations(range(len(matrix.systems)), 2):
        p = permutation_pvalue(matrix.values[i], matrix.values[j], flips)
        if p is None:
            log.info("%s scores identical for %s vs %s; p-value set to 0.5",
                     matrix.source, matrix.systems[i], matrix.systems[j])
            p = 0.5
        out.append(p)
    return out


def system_spa(human: ScoreMatrix, metric: ScoreMatrix, permutations: int = 1000, seed: int = 0) -> float:
    _check_aligned(human, metric)
    if len(human.systems) < 2:
        raise MetaEvalError("SPA needs at least 2 systems")
    if len(human.segments) < 2:
        raise MetaEvalError("SPA needs at least 2 segments")
    flips = sign_flips(len(human.segments), permutations, seed)
    return spa_from_pvalues(pairwise_pvalues(human, flips), pairwise_pvalues(metric, flips))


def overall_consistency(per_task: Sequence[float | None] | Mapping[str, float | None]) -> float:
    """Mean of the four task values (system/segment x both directions)."""
    if isinstance(per_task, Mapping):
        missing = [k for k in TASK_ORDER if per_task.get(k) is None]
        if missing:
            raise MetaEvalError(f"missing task values: {missing}")
        values = [per_task[k] for k in TASK_ORDER]
    else:
        values = list(per_task)
        if len(values) != 4 or any(v is None for v in values):
            raise MetaEvalError(f"expected four task values, got {values}")
    return statistics.fmean(values)


# -- report -----------------------------------------------------------------------

@dataclass
class ConsistencyReport:
    system_level: dict[str, float]
    segment_level: dict[str, float]
    pair_counts: dict[str, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    metric_name: str = "metric"

    @property
    def overall(self) -> float:
        return overall_consistency({
            "system_zh-en": self.system_level.get("zh-en"),
            "system_en-zh": self.system_level.get("en-zh"),
            "segment_zh-en": self.segment_level.get("zh-en"),
            "segment_en-zh": self.segment_level.get("en-zh"),
        })

    def to_dict(self) -> dict:
        return {
            "metric": self.metric_name,
            "overall": self.overall,
            "system_level": self.system_level,
            "segment_level": self.segment_level,
            "pair_counts": self.pair_counts,
            "config": self.config,
        }


def _pct(x: float) -> str:
    return f"{100 * x:.1f}%"


def render_consistency_table(reports: Sequence[ConsistencyReport]) -> str:
    lines = [
        "| Metric | Overall Avg. | System zh→en | System en→zh | Segment zh→en | Segment en→zh |",
        "|---|---|---|---|---|---|",
    ]
    for r in reports:
        lines.append(
            f"| {r.metric_name} | {_pct(r.overall)} | {_pct(r.system_level['zh-en'])} | "
            f"{_pct(r.system_level['en-zh'])} | {_pct(r.segment_level['zh-en'])} | "
            f"{_pct(r.segment_level['en-zh'])} |"
        )
    return "\n".join(lines) + "\n"


def evaluate_consistency(human: ScoreMatrix, metric: ScoreMatrix, direction_of: Mapping[str, str], *,
                         max_scale: float = 100.0, tie_threshold: float = 0.05, permutations: int = 1000,
                         seed: int = 0, require_separation: bool = False,
                         metric_name: str = "metric") -> ConsistencyReport:
    """Full report from raw (unnormalized) matrices; ``direction_of`` maps segment -> direction."""
    h, m = align(human, metric)
    h = h if h.normalized else normalize(h, max_scale)
    m = m if m.normalized else normalize(m, max_scale)
    system_level, segment_level, counts = {}, {}, {}
    for direction in ("zh-en", "en-zh"):
        segs = [s for s in h.segments if direction_of.get(s) == direction]
        if len(h.systems) < 2 or len(segs) < 2:
            raise MetaEvalError(
                f"{direction}: need >= 2 shared systems and >= 2 shared segments, "
                f"have {len(h.systems)} systems {list(h.systems)} and {len(segs)} segments")
        hd, md = h.select(h.systems, segs), m.select(m.systems, segs)
        system_level[direction] = system_spa(hd, md, permutations, seed)
        ok, total = segment_pair_counts(hd, md, tie_threshold, require_separation)
        segment_level[direction] = ok / total
        counts[f"system_{direction}"] = len(h.systems) * (len(h.systems) - 1) // 2
        counts[f"segment_{direction}"] = total
    config = {"tie_threshold": tie_threshold, "permutations": permutations, "seed": seed,
              "max_scale": max_scale, "require_separation": require_separation}
    return ConsistencyReport(system_level, segment_level, counts, config, metric_name)
