"""Leaderboards in Markdown and JSON."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .pipeline import RunArtifact
from .scoring import SystemScore, aggregate_all, aggregate_runs
from .tasks import Direction, PrimaryDomain, SecondaryDomain, TranslationTask


class ReportError(ValueError):
    pass


def _f(x: float) -> str:
    return f"{x:.2f}"


def leaderboard_rows(systems: Sequence[SystemScore]) -> list[dict]:
    return [
        {"system": s.system_id, "overall": round(s.overall, 4), "accuracy": round(s.accuracy, 4),
         "fluency": round(s.fluency, 4), "appropriateness": round(s.appropriateness, 4), "n": s.n}
        for s in systems
    ]


def render_leaderboard(systems: Sequence[SystemScore], title: str | None = None) -> str:
    lines = [f"### {title}", ""] if title else []
    lines += ["| Model | Overall | Accuracy | Fluency | Appropriateness | N |", "|---|---|---|---|---|---|"]
    for s in systems:
        lines.append(f"| {s.system_id} | {_f(s.overall)} | {_f(s.accuracy)} | {_f(s.fluency)} | "
                     f"{_f(s.appropriateness)} | {s.n} |")
    return "\n".join(lines) + "\n"


def render_direction_table(groups: dict[str, list[SystemScore]]) -> str:
    zh = {s.system_id: s for s in groups.get(Direction.ZH_TO_EN.value, [])}
    en = {s.system_id: s for s in groups.get(Direction.EN_TO_ZH.value, [])}
    systems = [sid for sid in zh if sid in en]
    systems.sort(key=lambda sid: -(zh[sid].overall + en[sid].overall))
    lines = [
        "| Model | zh→en Score | Accuracy | Fluency | Appropriateness "
        "| en→zh Score | Accuracy | Fluency | Appropriateness | Diff |",
        "|---|---|---|---|---|---|---|---|---|---|",
    ]
    for sid in systems:
        a, b = zh[sid], en[sid]
        lines.append(
            f"| {sid} | {_f(a.overall)} | {_f(a.accuracy)} | {_f(a.fluency)} | {_f(a.appropriateness)} "
            f"| {_f(b.overall)} | {_f(b.accuracy)} | {_f(b.fluency)} | {_f(b.appropriateness)} "
            f"| {_f(a.overall - b.overall)} |"
        )
    return "\n".join(lines) + "\n"


def render_domain_table(primary: dict[str, list[SystemScore]], secondary: dict[str, list[SystemScore]]) -> str:
    cols: list[tuple[str, dict[str, list[SystemScore]]]] = []
    for p in PrimaryDomain:
        if p.value in primary:
            cols.append((f"{p.value} Overall", primary))
        for s in SecondaryDomain:
            if s.primary is p and s.value in secondary:
                cols.append((s.value, secondary))
    ranks: dict[str, dict[str, tuple[int, float]]] = {}
    for label, source in cols:
        key = label.removesuffix(" Overall")
        ranks[label] = {s.system_id: (i, s.overall) for i, s in enumerate(source[key], start=1)}
    systems: list[str] = []
    for label, _ in cols:
        for sid in ranks[label]:
            if sid not in systems:
                systems.append(sid)
    header = "| Model | " + " | ".join(f"{label} R | {label} S" for label, _ in cols) + " |"
    sep = "|---|" + "---|---|" * len(cols)
    lines = [header, sep]
    for sid in systems:
        cells = []
        for label, _ in cols:
            r = ranks[label].get(sid)
            cells.append(f"{r[0]} | {_f(r[1])}" if r else "- | -")
        lines.append(f"| {sid} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_runs_table(systems: Sequence[SystemScore]) -> str:
    n_runs = max((len(s.runs) for s in systems), default=0)
    header = "| Model | " + " | ".join(f"Run {i + 1}" for i in range(n_runs)) + " | Mean | Std. Dev. |"
    lines = [header, "|---|" + "---|" * (n_runs + 2)]
    for s in systems:
        runs = [_f(x) for x in s.runs] + ["-"] * (n_runs - len(s.runs))
        lines.append(f"| {s.system_id} | " + " | ".join(runs) + f" | {_f(s.overall)} | {_f(s.std)} |")
    return "\n".join(lines) + "\n"


def build_report(artifacts: Sequence[RunArtifact], group_by: str | None = None) -> tuple[str, dict]:
    """Markdown text and JSON payload for one or more run artifacts.

    Several artifacts are treated as repeated runs of the same evaluation.
    """
    if not artifacts:
        raise ReportError("no artifacts given")
    hashes = {a.metadata.get("config_hash") for a in artifacts}
    if len(hashes) > 1:
        raise ReportError(f"artifacts were produced under different configs: {sorted(map(str, hashes))}")
    first = artifacts[0]
    scores = first.scores()
    if not scores:
        raise ReportError("artifact holds no scored cells")
    tasks: dict[str, TranslationTask] = {t.id: t for t in first.tasks}
    config_hash = first.metadata.get("config_hash")

    md = [f"# Leaderboard\n\nconfig hash: `{config_hash}`\n"]
    payload: dict = {"config_hash": config_hash, "config": first.metadata.get("config")}
    errored = first.errored()
    if errored:
        md.append(f"{len(errored)} errored cell(s) excluded: "
                  + ", ".join(f"({c.task_id}, {c.system_id})" for c in errored) + "\n")
        payload["excluded"] = [[c.task_id, c.system_id] for c in errored]

    overall = aggregate_all(scores)["all"]
    md.append(render_leaderboard(overall, "Overall"))
    payload["overall"] = leaderboard_rows(overall)

    if group_by == "direction":
        groups = aggregate_all(scores, key=lambda s: tasks[s.task_id].direction.value)
        for d in Direction:
            if d.value in groups:
                md.append(render_leaderboard(groups[d.value], d.label))
            else:
                md.append(f"_No scored cells for {d.label}; group omitted._\n")
        md.append("### Direction comparison\n\n" + render_direction_table(groups))
        payload["by_direction"] = {k: leaderboard_rows(v) for k, v in groups.items()}
    elif group_by == "domain":
        primary = aggregate_all(scores, key=lambda s: tasks[s.task_id].primary_domain.value)
        secondary = aggregate_all(scores, key=lambda s: tasks[s.task_id].secondary_domain.value)
        md.append("### Domains\n\n" + render_domain_table(primary, secondary))
        payload["by_primary_domain"] = {k: leaderboard_rows(v) for k, v in primary.items()}
        payload["by_secondary_domain"] = {k: leaderboard_rows(v) for k, v in secondary.items()}
    elif group_by is not None:
        raise ReportError(f"unknown grouping {group_by!r}")

    if len(artifacts) > 1:
        runs = aggregate_runs([a.scores() for a in artifacts])
        md.append("### Repeated runs\n\n" + render_runs_table(runs))
        payload["runs"] = [
            {"system": s.system_id, "scores": list(s.runs), "mean": s.overall, "std": s.std} for s in runs
        ]
    return "\n".join(md), payload


def write_report(artifacts: Sequence[RunArtifact], out_dir: str | Path, group_by: str | None = None
                 ) -> tuple[Path, Path]:
    text, payload = build_report(artifacts, group_by)
    out = Path(out_dir)
    suffix = f"_{group_by}" if group_by else ""
    md_path, json_path = out / f"leaderboard{suffix}.md", out / f"leaderboard{suffix}.json"
    md_path.write_text(text, encoding="utf-8")
    json_path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return md_path, json_path

