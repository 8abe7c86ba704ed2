"""Apply de-duplication directives under the attribution priority ladder.

1. An extremely critical accuracy error is always kept; everything it was
   grouped with is removed.
2. Otherwise a failed checkpoint in the group keeps the attribution and the
   quality-dimension members are removed.
3. Otherwise the judge's own kept/removed split is applied as given.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .verdicts import (
    CHECKPOINT,
    DIMENSION_ORDER,
    CheckpointVerdict,
    DedupDirective,
    Dimension,
    ErrorRecord,
    Handle,
    Severity,
    VerdictSets,
)


@dataclass(frozen=True)
class Removal:
    handle: Handle
    reason: str


@dataclass(frozen=True)
class Override:
    directive: DedupDirective
    applied_kept: tuple[Handle, ...]
    applied_removed: tuple[Handle, ...]
    note: str


@dataclass(frozen=True)
class DedupOutcome:
    surviving_errors: tuple[ErrorRecord, ...]
    failed_checkpoints: tuple[CheckpointVerdict, ...]
    removed: tuple[Removal, ...] = ()
    overrides: tuple[Override, ...] = ()
    skipped: tuple[str, ...] = ()
    dedup_disabled: bool = False

    def as_sets(self) -> VerdictSets:
        return VerdictSets.build(self.surviving_errors, self.failed_checkpoints)

    def errors_for(self, dimension: Dimension) -> list[ErrorRecord]:
        return [e for e in self.surviving_errors if e.dimension is dimension]


def _is_extremely_critical(rec) -> bool:
    return (isinstance(rec, ErrorRecord) and rec.dimension is Dimension.ACCURACY
            and rec.severity is Severity.EXTREMELY_CRITICAL)


def _sort_key(rec: ErrorRecord):
    return (DIMENSION_ORDER[rec.dimension], rec.index)


def resolve_group(directive: DedupDirective, records: dict) -> tuple[tuple[Handle, ...], tuple[Handle, ...], str]:
    """Return ``(kept, removed, rule)`` for one directive after the ladder."""
    group = directive.group
    protected = tuple(h for h in group if _is_extremely_critical(records[h]))
    if protected:
        return protected, tuple(h for h in group if h not in protected), "extremely_critical"
    checkpoints = [h for h in group if h[0] == CHECKPOINT]
    if checkpoints:
        keeper = directive.kept if directive.kept[0] == CHECKPOINT else checkpoints[0]
        removed = tuple(h for h in group if h != keeper and (h[0] != CHECKPOINT or h in directive.removed))
        return (keeper,), removed, "checkpoint"
    return (directive.kept,), directive.removed, "judge"


def _trim(directive: DedupDirective, removed: dict) -> DedupDirective | None:
    """Drop records an earlier directive already removed; ``None`` if no group is left.

    If the judge's kept record is among them, the remaining member that ranks
    first (accuracy, fluency, appropriateness, checkpoint; then index) stands
    in for it, so the rest of the group is still penalized once.
    """
    live = [h for h in directive.group if h not in removed]
    if len(live) < 2:
        return None
    kept = directive.kept if directive.kept in live else min(live, key=_handle_order)
    return DedupDirective(kept, tuple(h for h in live if h != kept), directive.rationale)


def apply_dedup(sets: VerdictSets, directives: list[DedupDirective]) -> DedupOutcome:
    """Remove duplicate attributions; directives are processed in order.

    A record already removed by an earlier directive stays with that
    directive (first directive wins); later directives are applied to their
    remaining members only, with a note.
    """
    records = sets.records()
    removed: dict[Handle, str] = {}
    overrides: list[Override] = []
    skipped: list[str] = []
    for n, d in enumerate(directives, start=1):
        unknown = [h for h in d.group if h not in records]
        if unknown:
            skipped.append(f"directive {n}: unknown handles {unknown}")
            continue
        kept = drop = rule = None
        effective = d
        stale = [h for h in d.group if h in removed]
        if stale:
            live = [h for h in d.group if h not in removed]
            orphaned = [h for h in stale if h[0] == CHECKPOINT]
            if (orphaned and not any(h[0] == CHECKPOINT for h in live)
                    and not any(_is_extremely_critical(records[h]) for h in live)):
                # The group's checkpoint already carries the attribution elsewhere;
                # its quality members are still duplicates of it.
                kept, drop, rule = (orphaned[0],), tuple(live), "checkpoint"
                skipped.append(f"directive {n}: {stale} already removed by an earlier directive; "
                               f"remaining members attributed to {orphaned[0][0]}#{orphaned[0][1]}")
            else:
                effective = _trim(d, removed)
                skipped.append(f"directive {n}: {stale} already removed by an earlier directive"
                               + ("" if effective else "; nothing left to apply"))
                if effective is None:
                    continue
        if rule is None:
            kept, drop, rule = resolve_group(effective, records)
        if set(kept) != {d.kept} or set(drop) != set(d.removed):
            note = f"{rule} priority" if not stale else f"{rule} priority, applied to remaining members"
            overrides.append(Override(d, kept, drop, note))
        reason = {
            "extremely_critical": "duplicate of extremely critical accuracy error",
            "checkpoint": "attributed to failed checkpoint",
            "judge": "duplicate attributed elsewhere by judge",
        }[rule]
        for h in drop:
            removed[h] = f"{reason} {kept[0][0]}#{kept[0][1]}"
    surviving = sorted((e for e in sets.errors if e.handle not in removed), key=_sort_key)
    failed = sorted((c for c in sets.checkpoints if c.handle not in removed), key=lambda c: c.index)
    removals = tuple(Removal(h, r) for h, r in sorted(removed.items(), key=lambda kv: _handle_order(kv[0])))
    return DedupOutcome(tuple(surviving), tuple(failed), removals, tuple(overrides), tuple(skipped))


def _handle_order(h: Handle):
    order = {d.value: i for d, i in DIMENSION_ORDER.items()}
    return (order.get(h[0], 3), h[1])


def dedup_disabled_passthrough(sets: VerdictSets) -> DedupOutcome:
    """Ablation path: every error survives, nothing is de-duplicated."""
    return DedupOutcome(
        tuple(sorted(sets.errors, key=_sort_key)),
        tuple(sorted(sets.checkpoints, key=lambda c: c.index)),
        dedup_disabled=True,
    )
