"""Streaming JSONL datasets, dataset statistics and report writing."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .schema import PatternUndetectableError, PromptSchema, SchemaError, detect_template_pattern, parse_schema_record
from .validator import FailureKind, ValidationReport, validate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecordError:
    line: int
    message: str

    def to_dict(self) -> dict:
        return {"line": self.line, "error": self.message}


@dataclass(frozen=True)
class Record:
    line: int
    schema: PromptSchema


def load_jsonl(path: str | Path) -> Iterator[Record | RecordError]:
    """Lazily yield one :class:`Record` or :class:`RecordError` per non-blank line."""
    path = Path(path)
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield Record(lineno, parse_schema_record(line))
            except SchemaError as exc:
                yield RecordError(lineno, str(exc))


def _rate(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass
class DatasetStats:
    """Running counters; memory grows with distinct categories, not records."""

    total: int = 0
    valid: int = 0
    malformed: int = 0
    by_category: dict[str, Counter] = field(default_factory=lambda: defaultdict(Counter))
    by_language: dict[str, Counter] = field(default_factory=lambda: defaultdict(Counter))
    failures_by_category: dict[str, Counter] = field(default_factory=lambda: defaultdict(Counter))
    patterns: Counter = field(default_factory=Counter)

    @property
    def invalid(self) -> int:
        return self.total - self.valid - self.malformed

    def add(self, schema: PromptSchema, report: ValidationReport) -> None:
        self.total += 1
        cat = self.by_category[schema.category]
        lang = self.by_language[schema.language or "unknown"]
        cat["total"] += 1
        lang["total"] += 1
        if report.valid:
            self.valid += 1
            cat["valid"] += 1
            lang["valid"] += 1
            lang[report.tier.value] += 1
        else:
            self.failures_by_category[schema.category].update(f.value for f in report.failure_kinds)
        try:
            self.patterns[detect_template_pattern(schema).value] += 1
        except PatternUndetectableError:
            self.patterns["undetectable"] += 1

    def add_malformed(self) -> None:
        self.total += 1
        self.malformed += 1

    @staticmethod
    def _distribution(counts: Counter) -> dict[str, float]:
        n = sum(counts.values())
        if not n:
            return {}
        return {k.value: counts[k.value] / n for k in FailureKind}

    def to_dict(self) -> dict:
        all_failures: Counter = Counter()
        for c in self.failures_by_category.values():
            all_failures.update(c)
        return {
            "total": self.total,
            "valid": self.valid,
            "invalid": self.invalid,
            "malformed": self.malformed,
            "success_rate": _rate(self.valid, self.total),
            "categories": {
                name: {
                    "total": c["total"],
                    "valid": c["valid"],
                    "success_rate": _rate(c["valid"], c["total"]),
                    "failure_distribution": self._distribution(self.failures_by_category.get(name, Counter())),
                }
                for name, c in sorted(self.by_category.items())
            },
            "languages": {
                name: {
                    "total": c["total"],
                    "valid": c["valid"],
                    "high_rate": _rate(c["high"], c["valid"]),
                    "medium_rate": _rate(c["medium"], c["valid"]),
                }
                for name, c in sorted(self.by_language.items())
            },
            "failure_distribution": self._distribution(all_failures),
            "template_patterns": dict(sorted(self.patterns.items())),
        }


def dataset_stats(pairs: Iterable[tuple[PromptSchema, ValidationReport]]) -> DatasetStats:
    stats = DatasetStats()
    for schema, report in pairs:
        stats.add(schema, report)
    return stats


def validate_stream(
    items: Iterable[Record | RecordError], stats: DatasetStats
) -> Iterator[tuple[Record | RecordError, ValidationReport | None]]:
    """Validate records as they stream past, updating ``stats`` in place."""
    for item in items:
        if isinstance(item, RecordError):
            stats.add_malformed()
            yield item, None
            continue
        report = validate(item.schema)
        stats.add(item.schema, report)
        yield item, report


CSV_FIELDS = (
    "id", "category", "status", "raw_speedup", "normalized_speedup", "e2e_speedup",
    "serial_duration", "parallel_duration", "extraction_duration",
    "serial_tokens", "parallel_tokens", "aggregation",
)


def write_report(results: dict, fmt: str, path: str | Path) -> None:
    """Write a bench report as one JSON document or as flat CSV rows.

    ``results`` is ``{"stats": ..., "per_prompt": [...]}``; CSV output keeps
    only per-prompt metric rows.
    """
    path = Path(path)
    if not results.get("per_prompt") and not results.get("skipped"):
        raise ValueError("nothing to report")
    try:
        if fmt == "json":
            path.write_text(json.dumps(results, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
                            encoding="utf-8")
        elif fmt == "csv":
            with path.open("w", newline="", encoding="utf-8") as f:
                writer = csv.DictWriter(f, fieldnames=CSV_FIELDS, extrasaction="ignore")
                writer.writeheader()
                for row in results["per_prompt"]:
                    flat = {"id": row.get("id"), "category": row.get("category"), "status": row.get("status")}
                    flat.update(row.get("metrics") or {})
                    writer.writerow(flat)
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
