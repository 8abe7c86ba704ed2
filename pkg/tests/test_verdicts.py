from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docjudge.tasks import Rubric
from docjudge.verdicts import (
    Dimension,
    ErrorRecord,
    Severity,
    VerdictParseError,
    VerdictSets,
    VerdictWarning,
    extract_records,
    map_severity,
    parse_checkpoints,
    parse_combined_errors,
    parse_dedup,
    parse_error_list,
    parse_if,
    serialize_checkpoints,
    serialize_errors,
)

from conftest import CORPUS, ckpt, err

REPLIES = json.loads((CORPUS / "replies.json").read_text(encoding="utf-8"))
WORKED = REPLIES["hum-001"]["sys-alpha"]
IF_FAIL = REPLIES["hum-001"]["sys-beta"]["instruction_following"]


def _fence(text: str, lang: str = "") -> str:
    return f"```{lang}\n{text}\n```"


# -- sentinels and fences ---------------------------------------------------------

@pytest.mark.parametrize("raw", [
    "[{问题严重程度：整体无问题}]",
    "[{ 问题严重程度：整体无问题}]",
    '[{"问题严重程度": "整体无问题"}]',
    "```\n[{\n  问题严重程度：整体无问题\n}]\n```",
])
@pytest.mark.parametrize("dim", list(Dimension))
def test_no_problem_sentinel_parses_to_empty(raw, dim):
    assert parse_error_list(raw, dim) == []


@pytest.mark.parametrize("raw", ["[{\n  本次评估无重复问题\n}]", "```\n[{ 本次评估无重复问题 }]\n```"])
def test_no_duplicates_sentinel_parses_to_empty(raw):
    sets = VerdictSets.build([err("accuracy", 1, "major"), err("fluency", 1, "minor")])
    assert parse_dedup(raw, sets) == []


@pytest.mark.parametrize("dim", ["accuracy", "fluency", "appropriateness"])
def test_fenced_and_unfenced_parse_identically(dim):
    raw = WORKED[dim]
    assert parse_error_list(raw, dim) == parse_error_list(_fence(raw), dim) == \
        parse_error_list(_fence(raw, "json"), dim)


def test_garbage_is_a_parse_error():
    with pytest.raises(VerdictParseError):
        parse_error_list("I could not evaluate this.", "accuracy")
    with pytest.raises(VerdictParseError):
        parse_if("lorem ipsum")


# -- quality judges ---------------------------------------------------------------

def test_worked_example_first_judges():
    (acc,) = parse_error_list(WORKED["accuracy"], "accuracy")
    assert (acc.index, acc.paragraph, acc.error_type, acc.severity) == (1, 2, "漏译", Severity.MAJOR)
    flu = parse_error_list(WORKED["fluency"], "fluency")
    assert [(e.index, e.paragraph, e.severity) for e in flu] == [(1, 3, Severity.MINOR), (2, 6, Severity.MINOR)]
    app = parse_error_list(WORKED["appropriateness"], "appropriateness")
    assert [(e.index, e.paragraph, e.severity) for e in app] == [(1, 3, Severity.MAJOR), (2, 7, Severity.MAJOR)]
    assert app[1].analysis.endswith("影响了行文的风格")


@pytest.mark.parametrize("token, expected", [
    ("普通", Severity.MAJOR), ("严重", Severity.CRITICAL), ("非常严重", Severity.EXTREMELY_CRITICAL),
    ("非常严重 (Extremely Critical)", Severity.EXTREMELY_CRITICAL), ("【严重】", Severity.CRITICAL),
])
def test_accuracy_ladder(token, expected):
    assert map_severity(token, Dimension.ACCURACY) is expected


def test_extremely_critical_record():
    raw = "[{问题序号：1，问题段落：4，问题类型：漏译，问题分析：整段缺失，问题严重程度：非常严重}]"
    (rec,) = parse_error_list(raw, "accuracy")
    assert rec.severity is Severity.EXTREMELY_CRITICAL and rec.paragraph == 4


def test_fixed_severities_are_coerced():
    for token in ("有问题", "普通", "严重"):
        assert map_severity(token, Dimension.FLUENCY) is Severity.MINOR
        assert map_severity(token, Dimension.APPROPRIATENESS) is Severity.MAJOR


def test_unknown_and_off_ladder_tokens_raise():
    with pytest.raises(VerdictParseError):
        map_severity("moderate", Dimension.FLUENCY)
    with pytest.raises(VerdictParseError):
        map_severity("有问题", Dimension.ACCURACY)


def test_exact_duplicates_collapse_and_renumber():
    one = {"问题序号": 1, "问题段落": 2, "问题类型": "错译", "问题分析": "x", "问题严重程度": "普通"}
    other = dict(one, 问题序号=3, 问题分析="y")
    raw = json.dumps([one, dict(one, 问题序号=2), other], ensure_ascii=False)
    recs = parse_error_list(raw, "accuracy")
    assert [(r.index, r.analysis) for r in recs] == [(1, "x"), (2, "y")]


def test_ascii_keys_accepted():
    raw = '[{"index": 1, "paragraph": 3, "error_type": "grammar", "analysis": "a", "severity": "minor"}]'
    (rec,) = parse_error_list(raw, "fluency")
    assert (rec.paragraph, rec.error_type, rec.severity) == (3, "grammar", Severity.MINOR)


def test_loose_key_value_text_with_fullwidth_punctuation():
    raw = "[{\n  问题序号：1，\n  问题段落：2，\n  问题类型：错译，\n  问题分析：术语有误，\n  问题严重程度：严重\n}]"
    (rec,) = parse_error_list(raw, "accuracy")
    assert (rec.error_type, rec.analysis, rec.severity) == ("错译", "术语有误", Severity.CRITICAL)


def test_combined_reply_splits_by_dimension():
    recs = parse_combined_errors(WORKED["single_judge"])
    assert [(r.dimension, r.index) for r in recs] == [(Dimension.ACCURACY, 1), (Dimension.FLUENCY, 1)]
    with pytest.raises(VerdictParseError):
        parse_combined_errors('[{"问题序号": 1, "问题严重程度": "普通"}]')


# -- checkpoints --------------------------------------------------------------------

def _rubrics(n):
    return [Rubric(f"r{i}", f"rubric {i}") for i in range(1, n + 1)]


def test_all_correct_checkpoints():
    raw = json.dumps([{"问题序号": i, "问题段落": 1, "问题分析": "ok", "判断结果": "正确"} for i in range(1, 10)],
                     ensure_ascii=False)
    verdicts = parse_checkpoints(raw, _rubrics(9))
    assert [v.rubric_id for v in verdicts] == [f"r{i}" for i in range(1, 10)]
    assert all(v.correct for v in verdicts)


def test_incorrect_checkpoint():
    rubrics = [Rubric("c1", "“全身治疗”必须译为 Systemic therapy", ("Systemic therapy",))]
    raw = "[{ 问题序号: 1,\n  问题段落: 3,\n  问题分析: 译为 whole-body treatment，偏离考点要求,\n  判断结果: 错误}]"
    (v,) = parse_checkpoints(raw, rubrics)
    assert v.correct is False and v.failed and v.paragraph == 3


def test_missing_checkpoint_entry_warns():
    raw = json.dumps([{"问题序号": i, "判断结果": "正确"} for i in range(1, 9)], ensure_ascii=False)
    messages: list[str] = []
    verdicts = parse_checkpoints(raw, _rubrics(9), on_warning=messages.append)
    assert len(verdicts) == 9
    assert verdicts[-1].correct is None and not verdicts[-1].failed
    assert any("8 checkpoint entries for 9 rubrics" in m for m in messages)
    with pytest.warns(VerdictWarning):
        parse_checkpoints(raw, _rubrics(9))


# -- instruction following -----------------------------------------------------------

def test_if_fail_example():
    verdict = parse_if(IF_FAIL)
    assert verdict.has_problem and verdict.level == "major_need_problem"
    assert "未进行翻译" in verdict.details


def test_if_pass_and_template_echo():
    assert not parse_if("是否存在问题：否").has_problem
    echoed = "输出格式\n是否存在问题：是 / 否\n问题等级：主需问题 / 无\n\n是否存在问题：否\n问题等级：无"
    assert not parse_if(echoed).has_problem


# -- de-duplication ------------------------------------------------------------------

def _worked_sets():
    return VerdictSets.build(parse_error_list(WORKED["accuracy"], "accuracy")
                             + parse_error_list(WORKED["fluency"], "fluency")
                             + parse_error_list(WORKED["appropriateness"], "appropriateness"))


def test_worked_example_dedup_directive():
    (d,) = parse_dedup(WORKED["dedup"], _worked_sets())
    assert d.kept == ("accuracy", 1)
    assert set(d.removed) == {("fluency", 1), ("appropriateness", 1)}
    assert "根本原因为内容遗漏" in d.rationale


def test_checkpoint_attribution_directive():
    sets = VerdictSets.build([err("fluency", 1, "minor")], [ckpt(1, True), ckpt(2, True), ckpt(3, False)])
    raw = "[{\n  问题序号：1，\n  重复维度：【checkpoints考点3】与【fluency问题1】，\n  问题分析：同一术语，\n" \
          "  判断结果：此问题属于checkpoints，【fluency问题1】应删除\n}]"
    (d,) = parse_dedup(raw, sets)
    assert d.kept == ("checkpoint", 3) and d.removed == (("fluency", 1),)


def test_unknown_dedup_handle_dropped_with_warning():
    sets = _worked_sets()
    raw = "[{问题序号：1，重复维度：【accuracy问题1】与【fluency问题9】，问题分析：x，判断结果：此问题属于accuracy，【fluency问题9】应删除}]"
    messages: list[str] = []
    assert parse_dedup(raw, sets, on_warning=messages.append) == []
    assert messages == ["dedup handle fluency#9 does not exist; dropped"]


# -- canonical serialization round trip ------------------------------------------------

_TEXT = st.text(st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters="`"), max_size=30) \
    .map(str.strip)
_SEVERITY_FOR = {
    Dimension.ACCURACY: [Severity.MAJOR, Severity.CRITICAL, Severity.EXTREMELY_CRITICAL],
    Dimension.FLUENCY: [Severity.MINOR],
    Dimension.APPROPRIATENESS: [Severity.MAJOR],
}


@st.composite
def error_lists(draw, dimension: Dimension):
    n = draw(st.integers(0, 6))
    out, seen = [], set()
    for _ in range(n):
        para = draw(st.one_of(st.none(), st.integers(1, 40)))
        etype, analysis = draw(_TEXT), draw(_TEXT)
        if (para, etype, analysis) in seen:
            continue
        seen.add((para, etype, analysis))
        sev = draw(st.sampled_from(_SEVERITY_FOR[dimension]))
        out.append(ErrorRecord(dimension, len(out) + 1, para, etype, analysis, sev))
    return out


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(list(Dimension)).flatmap(lambda d: st.tuples(st.just(d), error_lists(d))))
def test_parse_serialize_identity(case):
    dimension, records = case
    text = serialize_errors(records)
    assert parse_error_list(text, dimension) == records
    assert parse_error_list(_fence(text), dimension) == records


def test_checkpoint_serialization_round_trip():
    rubrics = _rubrics(3)
    verdicts = [ckpt(1, True, "r1"), ckpt(2, False, "r2"), ckpt(3, True, "r3")]
    assert parse_checkpoints(serialize_checkpoints(verdicts, rubrics), rubrics) == verdicts


def test_extract_records_prefers_strict_json():
    recs = extract_records('prefix [{"问题序号": 1, "问题严重程度": "普通", "extra": 1}] suffix')
    assert recs == [{"index": 1, "severity": "普通"}]
