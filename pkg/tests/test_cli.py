import json

import pytest

from conftest import write_jsonl
from parafan.cli import bundled, main

GOOD = {"serial": "Translate hola, adios", "template": "Translate: {data}", "data": ["hola", "adios"],
        "category": "Translation"}
BAD = {"serial": "Translate hola", "template": "Translate: {data}", "data": ["hola"], "category": "Translation"}


def test_validate_four_of_five(tmp_path, capsys):
    path = write_jsonl(tmp_path / "d.jsonl", [GOOD] * 4 + [BAD])
    out = tmp_path / "report.json"
    assert main(["validate", str(path), "--report", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["stats"]["success_rate"] == pytest.approx(0.8)
    assert len(report["records"]) == 5
    assert report["records"][4]["failures"][0]["kind"] == "insufficient_parallelism"
    assert "4/5 valid" in capsys.readouterr().out


def test_validate_none_valid(tmp_path):
    assert main(["validate", str(write_jsonl(tmp_path / "d.jsonl", [BAD, "{oops"]))]) == 2


def test_validate_missing_file(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "missing.jsonl")]) == 1
    assert "error" in capsys.readouterr().err


def test_stats(tmp_path):
    out = tmp_path / "stats.json"
    assert main(["stats", str(bundled("sample.jsonl")), "-o", str(out)]) == 0
    stats = json.loads(out.read_text())
    assert stats["total"] == stats["valid"] + stats["invalid"] + stats["malformed"]


def bench(tmp_path, *extra, name="bench.json"):
    out = tmp_path / name
    code = main(["bench", "--seed", "1", "-o", str(out), *extra])
    return code, json.loads(out.read_text()) if out.suffix == ".json" else out.read_text()


def test_bench_bundled_sample(tmp_path, capsys):
    code, report = bench(tmp_path)
    assert code == 0
    table = report["stats"]["table"]
    assert table
    for row in table:
        for col in ("avg_parallel_duration", "avg_serial_duration", "normalized_speedup", "raw_speedup"):
            assert row[col] > 0
    assert {s["reason"] for s in report["skipped"]} == {"invalid"}
    err = capsys.readouterr().err
    assert "Avg Parallel (s)" in err and "×" in err


def test_bench_concurrency_one(tmp_path):
    code, report = bench(tmp_path, "--concurrency", "1")
    assert code == 0
    for entry in report["per_prompt"]:
        par = entry["traces"]["parallel"]
        total = sum(r["end"] - r["start"] for r in par["records"])
        assert par["wall_duration"] == pytest.approx(total)
        assert entry["metrics"]["raw_speedup"] == pytest.approx(
            entry["traces"]["serial"]["wall_duration"] / total)


def test_bench_include_extraction(tmp_path, capsys):
    ext = tmp_path / "ext.json"
    ext.write_text(json.dumps({"base_latency": 1.0, "token_rate": 100, "output_tokens": {"fixed": 10}}))
    code, report = bench(tmp_path, "--include-extraction", "--extraction-sim", str(ext))
    assert code == 0
    for row in report["stats"]["table"]:
        assert row["e2e_speedup"] is not None and row["e2e_speedup"] < row["raw_speedup"]
    assert "E2E" in capsys.readouterr().err


def test_bench_csv(tmp_path):
    code, text = bench(tmp_path, "--format", "csv", name="bench.csv")
    assert code == 0
    assert text.splitlines()[0].startswith("id,category,status,raw_speedup")


def test_bench_is_deterministic(tmp_path):
    bench(tmp_path, name="a.json")
    bench(tmp_path, name="b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_bench_http_without_key(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("PARAFAN_API_KEY", raising=False)
    assert main(["bench", "--backend", "http", "-o", str(tmp_path / "x.json")]) == 1
    assert "PARAFAN_API_KEY" in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


def test_bench_no_valid_prompts(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [BAD])
    assert main(["bench", str(path), "-o", str(tmp_path / "r.json")]) == 2


def test_scaling(tmp_path):
    out = tmp_path / "curve.csv"
    assert main(["scaling", "--n", "2,4,8,16,32", "-o", str(out)]) == 0
    rows = [line.split(",") for line in out.read_text().splitlines()]
    assert rows[0] == ["n", "serial_wall", "parallel_wall", "speedup"]
    serial = [float(r[1]) for r in rows[1:]]
    parallel = [float(r[2]) for r in rows[1:]]
    assert serial == sorted(serial) and len(set(serial)) == 5
    assert parallel[0] == parallel[1] == parallel[2]
    assert float(rows[-1][3]) == pytest.approx(float(rows[-2][3]), rel=0.25)


def test_scaling_single_value(tmp_path, capsys):
    assert main(["scaling", "--n", "5"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 2


def test_scaling_bad_n(capsys):
    assert main(["scaling", "--n", "2,x"]) == 1


def test_judge_all_ties(tmp_path):
    _, _ = bench(tmp_path)
    out_a, out_b = tmp_path / "j1.json", tmp_path / "j2.json"
    args = ["judge", str(tmp_path / "bench.json"), "--judge-sim", str(bundled("judge_tie.json")), "--seed", "3"]
    assert main([*args, "-o", str(out_a)]) == 0
    assert main([*args, "-o", str(out_b)]) == 0
    result = json.loads(out_a.read_text())
    assert result["overall"]["preservation_rate"] == 1.0
    assert out_a.read_bytes() == out_b.read_bytes()
    for v in result["verdicts"]:
        low = v["judge_prompt"].lower()
        assert "serial" not in low.split("user prompt:")[0]


def test_judge_unparseable_not_fatal(tmp_path):
    bench(tmp_path)
    out = tmp_path / "j.json"
    assert main(["judge", str(tmp_path / "bench.json"), "-o", str(out)]) == 0
    result = json.loads(out.read_text())
    assert result["overall"]["unparseable"] == len(result["verdicts"])
    assert result["overall"]["preservation_rate"] is None


def test_extract(tmp_path):
    reply = json.dumps({"template": "Describe a room", "n": 10, "category": "Repeated Generation"})
    sim = tmp_path / "ext.json"
    sim.write_text(json.dumps({"base_latency": 0.5, "token_rate": 100, "output_tokens": {"fixed": 0},
                               "responses": [reply]}))
    prompts = tmp_path / "prompts.txt"
    prompts.write_text("Generate 10 variations of detailed descriptions of a room\n")
    out = tmp_path / "schemas.jsonl"
    assert main(["extract", str(prompts), "--extraction-sim", str(sim), "-o", str(out)]) == 0
    (line,) = out.read_text().splitlines()
    record = json.loads(line)
    assert record["n"] == 10 and record["serial"].startswith("Generate 10")
