from __future__ import annotations

import json

import pytest

from docjudge.tasks import (
    CandidateTranslation,
    Direction,
    PrimaryDomain,
    SecondaryDomain,
    TaskFileError,
    dump_tasks,
    dump_translations,
    load_human_scores,
    load_tasks,
    load_translations,
    parse_tasks,
    validate_coverage,
)


def _task(**overrides):
    raw = {
        "id": "t1",
        "direction": "zh-en",
        "primary_domain": "Academic",
        "secondary_domain": "Natural Sciences",
        "source_text": "原文。",
        "rubrics": [{"id": "c1", "description": "术语须译为 genome。", "required_renderings": ["genome"]}],
    }
    raw.update(overrides)
    return raw


def test_parse_valid_task():
    (task,) = parse_tasks({"tasks": [_task()]})
    assert task.direction is Direction.ZH_TO_EN
    assert task.primary_domain is PrimaryDomain.ACADEMIC
    assert task.secondary_domain is SecondaryDomain.NATURAL_SCIENCES
    assert task.rubrics[0].required_renderings == ("genome",)


def test_domain_groups_cover_seven_secondaries():
    academic = [s for s in SecondaryDomain if s.primary is PrimaryDomain.ACADEMIC]
    assert len(SecondaryDomain) == 7
    assert len(academic) == 4


def test_secondary_domain_under_wrong_primary_rejected():
    with pytest.raises(TaskFileError) as exc:
        parse_tasks({"tasks": [_task(primary_domain="NonAcademic")]})
    assert "secondary_domain" in exc.value.diagnostics[0]


def test_all_violations_reported_and_whole_file_rejected():
    doc = {"tasks": [_task(), _task(id="t2", direction="fr-en"), _task(id="t3", source_text="  "),
                     _task(id="t1")]}
    with pytest.raises(TaskFileError) as exc:
        parse_tasks(doc)
    diags = exc.value.diagnostics
    assert any("tasks[1].direction" in d for d in diags)
    assert any("tasks[2].source_text" in d for d in diags)
    assert any("duplicate task id 't1'" in d for d in diags)


def test_duplicate_rubric_ids_rejected():
    rubrics = [{"id": "c1", "description": "a"}, {"id": "c1", "description": "b"}]
    with pytest.raises(TaskFileError, match="duplicate rubric id"):
        parse_tasks({"tasks": [_task(rubrics=rubrics)]})


def test_zero_rubric_task_is_legal():
    (task,) = parse_tasks({"tasks": [_task(rubrics=[])]})
    assert task.rubrics == ()


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "tasks.json"
    path.write_text('{"tasks": [\n  {"id": "t1",}\n]}', encoding="utf-8")
    with pytest.raises(TaskFileError) as exc:
        load_tasks(path)
    assert exc.value.diagnostics[0].startswith("line 2")


def test_task_round_trip(tmp_path, corpus_tasks):
    dump_tasks(corpus_tasks, tmp_path / "t.json")
    assert load_tasks(tmp_path / "t.json") == corpus_tasks


def test_translations_keep_order_and_allow_empty(tmp_path):
    path = tmp_path / "tr.jsonl"
    path.write_text(
        '{"task_id": "t1", "system_id": "b", "output_text": ""}\n'
        '\n'
        '{"task_id": "t1", "system_id": "a", "output_text": "x"}\n', encoding="utf-8")
    records = load_translations(path)
    assert [r.system_id for r in records] == ["b", "a"]
    assert records[0].output_text == ""


def test_translations_reject_duplicate_cell_with_line_numbers(tmp_path):
    path = tmp_path / "tr.jsonl"
    line = json.dumps({"task_id": "t1", "system_id": "a", "output_text": "x"})
    path.write_text(line + "\n" + line + "\n", encoding="utf-8")
    with pytest.raises(TaskFileError, match="line 2: duplicate .* first on line 1"):
        load_translations(path)


def test_translations_malformed_line(tmp_path):
    path = tmp_path / "tr.jsonl"
    path.write_text('{"task_id": "t1"\n', encoding="utf-8")
    with pytest.raises(TaskFileError, match="line 1"):
        load_translations(path)


def test_translation_round_trip(tmp_path, corpus_translations):
    dump_translations(corpus_translations, tmp_path / "tr.jsonl")
    assert load_translations(tmp_path / "tr.jsonl") == corpus_translations


def test_human_scores_range_checked(tmp_path):
    path = tmp_path / "h.jsonl"
    path.write_text('{"task_id": "t1", "system_id": "a", "score": 101}\n', encoding="utf-8")
    with pytest.raises(TaskFileError, match="outside"):
        load_human_scores(path)
    path.write_text('{"task_id": "t1", "system_id": "a", "score": 73.5}\n', encoding="utf-8")
    assert load_human_scores(path)[0].score == 73.5


def test_coverage_reports_missing_and_orphans(corpus_tasks, corpus_translations):
    report = validate_coverage(corpus_tasks, corpus_translations)
    assert report.complete and len(report.present) == 4
    partial = [t for t in corpus_translations if not (t.task_id == "news-001" and t.system_id == "sys-beta")]
    partial.append(CandidateTranslation("ghost", "sys-alpha", "x"))
    report = validate_coverage(corpus_tasks, partial)
    assert report.missing == [("news-001", "sys-beta")]
    assert report.orphans == [("ghost", "sys-alpha")]
