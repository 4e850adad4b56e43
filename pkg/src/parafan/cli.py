"""``parafan`` command line: validate, bench, scaling, judge, extract, stats."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .backends import ENV_API_KEY, HttpBackend, PermanentError, SimulatedBackend, SimulatorConfig
from .clock import VirtualClock
from .dataset import DatasetStats, Record, RecordError, load_jsonl, validate_stream, write_report
from .executor import ExecConfig, run_comparison
from .extraction import extract_schema, minimally_clean
from .judge import VerdictUnparseable, judge_pair, quality_preservation
from .metrics import MEAN_OF_RATIOS, RATIO_OF_MEANS, aggregate, scaling_experiment, summarize_run
from .schema import schema_from_dict
from .validator import validate

logger = logging.getLogger("parafan")

EXIT_OK, EXIT_IO, EXIT_NONE = 0, 1, 2

SCALING_SCHEMA = {
    "serial": "Write {n} taglines for a neighborhood coffee shop.",
    "template": "Write a tagline for a neighborhood coffee shop.",
    "n": 2,
    "category": "Repeated Generation",
}


class UsageError(Exception):
    """Bad arguments or environment detected before any work starts."""


def bundled(name: str) -> Path:
    return Path(str(resources.files("parafan") / "data" / name))


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--backend", choices=("sim", "http"), default="sim")
    g.add_argument("--sim", type=Path, help="simulator config JSON (default: bundled)")
    g.add_argument("--concurrency", type=int, default=10)
    g.add_argument("--max-attempts", type=int, default=5)
    g.add_argument("--timeout-s", type=float, default=120.0)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--output", "-o", type=Path)
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parafan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a JSONL schema file")
    p.add_argument("input", type=Path)
    p.add_argument("--report", type=Path, help="write per-record reports and stats as JSON")
    _common(p)

    p = sub.add_parser("stats", help="dataset statistics for a JSONL schema file")
    p.add_argument("input", type=Path)
    _common(p)

    p = sub.add_parser("bench", help="run serial vs parallel on every valid schema")
    p.add_argument("input", type=Path, nargs="?", help="JSONL schema file (default: bundled sample)")
    p.add_argument("--include-extraction", action="store_true",
                   help="time a schema-extraction call per prompt and report end-to-end speedup")
    p.add_argument("--extraction-sim", type=Path, help="simulator config for the extraction backend")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _common(p)

    p = sub.add_parser("scaling", help="sweep n for a count-mode prompt on the simulator")
    p.add_argument("--n", default="2,4,8,16,32", help="comma-separated increasing counts")
    p.add_argument("--schema", type=Path, help="JSON file with a count-mode schema")
    _common(p)

    p = sub.add_parser("judge", help="blinded pairwise judging of a bench report")
    p.add_argument("report", type=Path)
    p.add_argument("--judge-backend", choices=("sim", "http"), default="sim")
    p.add_argument("--judge-sim", type=Path, help="simulator config for the judge backend")
    p.add_argument("--exclude-ties", action="store_true")
    _common(p)

    p = sub.add_parser("extract", help="extract schemas from raw prompts")
    p.add_argument("input", type=Path, help="text file (one prompt per line) or JSONL with a 'prompt' field")
    p.add_argument("--extraction-sim", type=Path, help="simulator config for the extraction backend")
    _common(p)
    return parser


# --- shared plumbing -------------------------------------------------------

def _sim_config(path: Path | None, seed: int | None) -> SimulatorConfig:
    cfg = SimulatorConfig.load(path or bundled("sim_default.json"))
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _make_backend(kind: str, sim_path: Path | None, seed: int | None, clock, env_prefix: str = ""):
    if kind == "http":
        try:
            return HttpBackend.from_env(env_prefix)
        except PermanentError as exc:
            raise UsageError(f"{exc}; the http backend needs {env_prefix}{ENV_API_KEY} or {ENV_API_KEY}")
    return SimulatedBackend(_sim_config(sim_path, seed), clock)


def _exec_config(args, clock) -> ExecConfig:
    return ExecConfig.with_attempts(
        args.max_attempts,
        max_concurrency=args.concurrency,
        per_call_timeout=args.timeout_s,
        clock=clock,
    )


def _clock_for(kind: str):
    # real backends are timed on the wall clock; simulations on virtual time
    return VirtualClock() if kind == "sim" else ExecConfig().clock


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _fmt_x(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}×"


def _record_id(item: Record) -> str:
    return str(item.schema.metadata.get("id", f"line-{item.line}"))


# --- subcommands -----------------------------------------------------------

def cmd_validate(args) -> int:
    stats = DatasetStats()
    out = args.report or args.output
    sink = out.open("w", encoding="utf-8") if out else None
    try:
        if sink:
            sink.write('{"records": [\n')
        first = True
        for item, report in validate_stream(load_jsonl(args.input), stats):
            if isinstance(item, RecordError):
                entry = {"line": item.line, "outcome": "malformed", "error": item.message}
                print(f"line {item.line}: malformed: {item.message}", file=sys.stderr)
            else:
                entry = {"line": item.line, "id": _record_id(item), **report.to_dict()}
                if not report.valid:
                    kinds = ", ".join(f.kind.value for f in report.failures)
                    print(f"line {item.line}: invalid: {kinds}", file=sys.stderr)
            if sink:
                sink.write(("" if first else ",\n") + json.dumps(entry, ensure_ascii=False))
                first = False
        summary = stats.to_dict()
        if sink:
            sink.write('\n],\n"stats": ' + json.dumps(summary, indent=2, sort_keys=True) + "}\n")
    finally:
        if sink:
            sink.close()

    rate = summary["success_rate"]
    print(f"{stats.valid}/{stats.total} valid ({stats.malformed} malformed), "
          f"success rate {rate if rate is None else f'{rate:.2f}'}")
    return EXIT_OK if stats.valid else EXIT_NONE


def cmd_stats(args) -> int:
    stats = DatasetStats()
    for _ in validate_stream(load_jsonl(args.input), stats):
        pass
    _emit(json.dumps(stats.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n", args.output)
    return EXIT_OK


def _table(rows: list[dict], with_e2e: bool) -> str:
    header = ["Task Category", "Avg Parallel (s)", "Avg Serial (s)", "Normalized", "Raw"]
    if with_e2e:
        header.append("E2E")
    lines = [header]
    for r in rows:
        line = [r["category"], f"{r['avg_parallel_duration']:.2f}", f"{r['avg_serial_duration']:.2f}",
                _fmt_x(r["normalized_speedup"]), _fmt_x(r["raw_speedup"])]
        if with_e2e:
            line.append(_fmt_x(r["e2e_speedup"]))
        lines.append(line)
    widths = [max(len(str(row[i])) for row in lines) for i in range(len(header))]
    return "\n".join(
        "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
        for row in lines
    ) + "\n"


def _category_rows(summaries: dict[str, list], method: str) -> list[dict]:
    rows = []
    for category in sorted(summaries):
        agg = aggregate(summaries[category], method)
        rows.append({
            "category": category,
            "n_prompts": agg.n_prompts,
            "avg_parallel_duration": agg.parallel_duration,
            "avg_serial_duration": agg.serial_duration,
            "normalized_speedup": agg.normalized_speedup,
            "raw_speedup": agg.raw_speedup,
            "e2e_speedup": agg.e2e_speedup,
            "aggregation": method,
        })
    return rows


def cmd_bench(args) -> int:
    path = args.input or bundled("sample.jsonl")
    clock = _clock_for(args.backend)
    backend = _make_backend(args.backend, args.sim, args.seed, clock)
    cfg = _exec_config(args, clock)
    extractor = None
    if args.include_extraction:
        extractor = _make_backend(args.backend, args.extraction_sim or args.sim, args.seed, clock, "EXTRACTION_")

    per_prompt, skipped = [], []
    by_category: dict[str, list] = {}
    for item in load_jsonl(path):
        if isinstance(item, RecordError):
            skipped.append({"line": item.line, "reason": "malformed", "detail": item.message})
            continue
        report = validate(item.schema)
        if not report.valid:
            skipped.append({
                "line": item.line, "id": _record_id(item), "reason": "invalid",
                "detail": [f.kind.value for f in report.failures],
            })
            continue

        schema = item.schema
        entry = {"id": _record_id(item), "line": item.line, "category": schema.category,
                 "prompt": schema.serial, "subtasks": schema.subtask_count}
        extraction_duration = None
        if extractor is not None:
            ex = extract_schema(schema.serial, extractor, cfg)
            extraction_duration = ex.extraction_duration
            entry["extraction"] = {"duration": ex.extraction_duration, "parse_ok": ex.parse_ok, "error": ex.error}

        result = run_comparison(schema, backend, cfg, extraction_duration)
        entry["serial_output"] = result.serial_trace.records[0].text
        entry["parallel_output"] = result.reassembled_text
        entry["traces"] = {"serial": result.serial_trace.to_dict(), "parallel": result.parallel_trace.to_dict()}
        if result.serial_trace.ok and result.parallel_trace.ok:
            summary = summarize_run(result)
            entry["status"] = "ok"
            entry["metrics"] = summary.to_dict()
            by_category.setdefault(schema.category, []).append(summary)
        else:
            entry["status"] = "failed"
            entry["metrics"] = None
        per_prompt.append(entry)

    completed = sum(len(v) for v in by_category.values())
    with_e2e = extractor is not None
    table = _category_rows(by_category, RATIO_OF_MEANS)
    stats = {
        "completed": completed,
        "failed": len(per_prompt) - completed,
        "skipped": len(skipped),
        "table": table,
        "table_mean_of_ratios": _category_rows(by_category, MEAN_OF_RATIOS),
    }
    if completed:
        everything = [s for v in by_category.values() for s in v]
        stats["overall"] = {m: aggregate(everything, m).to_dict() for m in (RATIO_OF_MEANS, MEAN_OF_RATIOS)}
    results = {
        "config": {
            "backend": args.backend,
            "concurrency": args.concurrency,
            "max_attempts": args.max_attempts,
            "timeout_s": args.timeout_s,
            "seed": args.seed,
            "include_extraction": with_e2e,
            "max_output_tokens": "shared by serial and parallel runs (unset)",
        },
        "stats": stats,
        "per_prompt": per_prompt,
        "skipped": skipped,
    }
    if args.output:
        write_report(results, args.format, args.output)
    else:
        json.dump(results, sys.stdout, indent=2, ensure_ascii=False, sort_keys=True)
        sys.stdout.write("\n")
    sys.stderr.write(_table(table, with_e2e))
    return EXIT_OK if completed else EXIT_NONE


def cmd_scaling(args) -> int:
    try:
        n_values = [int(x) for x in args.n.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--n must be comma-separated integers, got {args.n!r}")
    schema_obj = json.loads(args.schema.read_text(encoding="utf-8")) if args.schema else SCALING_SCHEMA
    schema = schema_from_dict(schema_obj)
    cfg = _exec_config(args, VirtualClock())
    curve = scaling_experiment(schema, n_values, _sim_config(args.sim, args.seed), cfg)
    rows = curve.to_csv_rows()
    if args.output:
        with args.output.open("w", newline="", encoding="utf-8") as f:
            csv.writer(f).writerows(rows)
    else:
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
    return EXIT_OK


def cmd_judge(args) -> int:
    report = json.loads(args.report.read_text(encoding="utf-8"))
    clock = _clock_for(args.judge_backend)
    backend = _make_backend(args.judge_backend, args.judge_sim or args.sim, args.seed, clock, "JUDGE_")
    cfg = _exec_config(args, clock)
    base_seed = args.seed or 0

    judged: dict[str, list] = {}
    unparseable: dict[str, int] = {}
    entries = []
    for i, entry in enumerate(report.get("per_prompt", [])):
        if entry.get("status") != "ok":
            continue
        category = entry.get("category", "unknown")
        seed = base_seed + i
        try:
            prompt, verdict = judge_pair(
                entry["prompt"], entry["serial_output"], entry["parallel_output"], backend, seed, cfg
            )
        except VerdictUnparseable as exc:
            unparseable[category] = unparseable.get(category, 0) + 1
            entries.append({"id": entry.get("id"), "seed": seed, "error": str(exc)})
            continue
        judged.setdefault(category, []).append(verdict)
        entries.append({"id": entry.get("id"), "seed": seed, "judge_prompt": prompt, **verdict.to_dict()})

    if not entries:
        print("no completed prompts to judge", file=sys.stderr)
        return EXIT_NONE
    include_ties = not args.exclude_ties
    categories = {
        c: quality_preservation(judged.get(c, []), include_ties, unparseable.get(c, 0)).to_dict()
        for c in sorted(set(judged) | set(unparseable))
    }
    overall = quality_preservation(
        [v for vs in judged.values() for v in vs], include_ties, sum(unparseable.values())
    ).to_dict()
    out = {"overall": overall, "categories": categories, "verdicts": entries}
    _emit(json.dumps(out, indent=2, ensure_ascii=False, sort_keys=True) + "\n", args.output)
    rate = overall["preservation_rate"]
    print(f"quality preservation: {'-' if rate is None else f'{rate:.2f}'} "
          f"({sum(unparseable.values())} unparseable)", file=sys.stderr)
    return EXIT_OK


def _read_prompts(path: Path):
    with path.open(encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                yield line.rstrip("\n")
                continue
            yield obj["prompt"] if isinstance(obj, dict) and "prompt" in obj else line.rstrip("\n")


def cmd_extract(args) -> int:
    clock = _clock_for(args.backend)
    backend = _make_backend(args.backend, args.extraction_sim or args.sim, args.seed, clock, "EXTRACTION_")
    cfg = _exec_config(args, clock)
    lines, ok = [], 0
    for raw in _read_prompts(args.input):
        result = extract_schema(raw, backend, cfg)
        if result.parse_ok:
            ok += 1
            record = {**result.schema.to_dict(), "extraction_duration": result.extraction_duration}
            lines.append(json.dumps(record, ensure_ascii=False))
        else:
            print(f"extraction failed for {minimally_clean(raw)[:60]!r}: {result.error}", file=sys.stderr)
    _emit("".join(line + "\n" for line in lines), args.output)
    return EXIT_OK if ok else EXIT_NONE


COMMANDS = {
    "validate": cmd_validate,
    "stats": cmd_stats,
    "bench": cmd_bench,
    "scaling": cmd_scaling,
    "judge": cmd_judge,
    "extract": cmd_extract,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
