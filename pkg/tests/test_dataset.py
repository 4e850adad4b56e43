import csv
import json

import pytest

from conftest import write_jsonl
from parafan.dataset import (
    CSV_FIELDS,
    DatasetStats,
    Record,
    RecordError,
    dataset_stats,
    load_jsonl,
    validate_stream,
    write_report,
)
from parafan.schema import PromptSchema
from parafan.validator import Failure, FailureKind, ValidationReport, ConfidenceTier, validate


def rec(i, **kw):
    base = {"serial": f"Translate {i}", "template": "Translate: {data}", "data": ["a", "b"], "category": "Translation"}
    base.update(kw)
    return base


def test_load_in_order(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [rec(1), rec(2), rec(3)])
    items = list(load_jsonl(path))
    assert [type(i) for i in items] == [Record] * 3
    assert [i.schema.serial for i in items] == ["Translate 1", "Translate 2", "Translate 3"]


def test_load_malformed_in_band(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [rec(1), "{not json", rec(3)])
    items = list(load_jsonl(path))
    assert isinstance(items[1], RecordError) and items[1].line == 2
    assert [i.line for i in items] == [1, 2, 3]


def test_load_empty(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert list(load_jsonl(path)) == []


def test_load_is_lazy(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [rec(1), rec(2)])
    stream = load_jsonl(path)
    assert next(stream).line == 1


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        list(load_jsonl(tmp_path / "nope.jsonl"))


def invalid(*kinds):
    return ValidationReport(failures=tuple(Failure(k, "x") for k in kinds))


def test_failure_distribution():
    schema = PromptSchema(serial="s", template="t {data}", category="c", data=("a", "b"))
    M, C, E = (FailureKind.TEMPLATE_DATA_MISMATCH, FailureKind.CONTEXT_CONTAMINATION,
               FailureKind.MUTUAL_EXCLUSIVITY_VIOLATION)
    stats = dataset_stats([(schema, invalid(M)), (schema, invalid(M)), (schema, invalid(C)), (schema, invalid(E))])
    dist = stats.to_dict()["failure_distribution"]
    assert dist == {
        "mutual_exclusivity_violation": 0.25,
        "template_data_mismatch": 0.5,
        "insufficient_parallelism": 0.0,
        "context_contamination": 0.25,
    }


def test_category_success_rate():
    good = PromptSchema(serial="s", template="t {data}", category="NER", data=("a", "b"))
    ok = ValidationReport(tier=ConfidenceTier.HIGH)
    bad = invalid(FailureKind.INSUFFICIENT_PARALLELISM)
    d = dataset_stats([(good, ok)] * 9 + [(good, bad)]).to_dict()
    assert d["categories"]["NER"]["success_rate"] == pytest.approx(0.9)
    assert d["categories"]["NER"]["failure_distribution"]["insufficient_parallelism"] == 1.0


def test_all_valid_has_empty_failure_distribution():
    good = PromptSchema(serial="s", template="t {data}", category="c", data=("a", "b"), language="zh")
    d = dataset_stats([(good, ValidationReport(tier=ConfidenceTier.MEDIUM))] * 3).to_dict()
    assert d["failure_distribution"] == {}
    assert d["languages"]["zh"]["medium_rate"] == 1.0


def test_stream_counts_and_permutation_invariance(tmp_path):
    from conftest import synthetic_lines
    lines, expected = synthetic_lines(300, seed=4)
    a, b = DatasetStats(), DatasetStats()
    for _ in validate_stream(load_jsonl(write_jsonl(tmp_path / "a.jsonl", lines)), a):
        pass
    for _ in validate_stream(load_jsonl(write_jsonl(tmp_path / "b.jsonl", lines[::-1])), b):
        pass
    assert (a.valid, a.invalid, a.malformed) == (expected["valid"], expected["invalid"], expected["malformed"])
    assert a.to_dict() == b.to_dict()


def _results():
    return {
        "stats": {"completed": 1},
        "per_prompt": [{"id": "p1", "category": "Translation", "status": "ok",
                        "metrics": {"raw_speedup": 2.0, "normalized_speedup": 2.0, "serial_duration": 2.0,
                                    "parallel_duration": 1.0, "serial_tokens": 10, "parallel_tokens": 10,
                                    "aggregation": "ratio_of_means", "n_prompts": 1}}],
        "skipped": [{"line": 4, "reason": "invalid", "detail": ["insufficient_parallelism"]}],
    }


def test_csv_report(tmp_path):
    out = tmp_path / "r.csv"
    write_report(_results(), "csv", out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == list(CSV_FIELDS)
    assert len(rows) == 2 and rows[1][0] == "p1"


def test_json_report_round_trip(tmp_path):
    out = tmp_path / "r.json"
    write_report(_results(), "json", out)
    assert json.loads(out.read_text()) == _results()


def test_report_errors(tmp_path):
    with pytest.raises(ValueError):
        write_report({"per_prompt": []}, "json", tmp_path / "x.json")
    with pytest.raises(ValueError):
        write_report(_results(), "xml", tmp_path / "x.xml")
    with pytest.raises(OSError, match="cannot write"):
        write_report(_results(), "json", tmp_path / "missing-dir" / "x.json")
