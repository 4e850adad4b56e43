"""Rule-based validation of decomposition schemas.

Four constraint families run in a fixed order and never short-circuit, so
co-occurring failures are all counted. A schema that passes every rule gets
a confidence tier from structural cues in the original prompt.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum

from .schema import PromptSchema, extract_placeholders

CONTAMINATION_MIN_LEN = 12


class FailureKind(str, Enum):
    TEMPLATE_DATA_MISMATCH = "template_data_mismatch"
    CONTEXT_CONTAMINATION = "context_contamination"
    MUTUAL_EXCLUSIVITY_VIOLATION = "mutual_exclusivity_violation"
    INSUFFICIENT_PARALLELISM = "insufficient_parallelism"


class ConfidenceTier(str, Enum):
    HIGH = "high"
    MEDIUM = "medium"


@dataclass(frozen=True)
class Failure:
    kind: FailureKind
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    tier: ConfidenceTier | None = None
    failures: tuple[Failure, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if (self.tier is None) == (not self.failures):
            raise ValueError("a report is either valid with a tier or invalid with failures")

    @property
    def valid(self) -> bool:
        return self.tier is not None

    @property
    def outcome(self) -> str:
        return "valid" if self.valid else "invalid"

    @property
    def failure_kinds(self) -> list[FailureKind]:
        return [f.kind for f in self.failures]

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "tier": self.tier.value if self.tier else None,
            "failures": [f.to_dict() for f in self.failures],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def check_mutual_exclusivity(schema: PromptSchema) -> list[Failure]:
    if schema.data is not None and schema.n is not None:
        return [Failure(FailureKind.MUTUAL_EXCLUSIVITY_VIOLATION, "both 'data' and 'n' are set")]
    if schema.data is None and schema.n is None:
        return [Failure(FailureKind.MUTUAL_EXCLUSIVITY_VIOLATION, "neither 'data' nor 'n' is set")]
    return []


def check_template_data_compat(schema: PromptSchema) -> list[Failure]:
    failures = []
    placeholders = extract_placeholders(schema.template)
    names = {p.name for p in placeholders}

    for p in placeholders:
        if not p.known:
            failures.append(Failure(
                FailureKind.TEMPLATE_DATA_MISMATCH,
                f"template: unknown placeholder {p.name!r} at {p.start}",
            ))
    if "data" in names:
        if schema.data is None and schema.n is None:
            failures.append(Failure(
                FailureKind.TEMPLATE_DATA_MISMATCH,
                "template: {data} referenced but neither 'data' nor 'n' is set",
            ))
        elif schema.n is not None:
            failures.append(Failure(
                FailureKind.TEMPLATE_DATA_MISMATCH,
                "template: {data} referenced but the schema is count-based ('n')",
            ))
    elif schema.data is not None:
        # every item would render to the same prompt and the item would be lost
        failures.append(Failure(
            FailureKind.TEMPLATE_DATA_MISMATCH,
            "data: items given but template has no {data} placeholder",
        ))
    if "context" in names and schema.context is None:
        failures.append(Failure(
            FailureKind.TEMPLATE_DATA_MISMATCH,
            "template: {context} referenced but 'context' is not set",
        ))
    return failures


def check_min_parallelism(schema: PromptSchema) -> list[Failure]:
    failures = []
    if schema.data is not None and len(schema.data) < 2:
        failures.append(Failure(
            FailureKind.INSUFFICIENT_PARALLELISM,
            f"data: {len(schema.data)} item(s), at least 2 required",
        ))
    if schema.n is not None and schema.n <= 1:
        failures.append(Failure(
            FailureKind.INSUFFICIENT_PARALLELISM,
            f"n: {schema.n}, must exceed 1",
        ))
    return failures


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def check_context_contamination(
    schema: PromptSchema, min_len: int = CONTAMINATION_MIN_LEN
) -> list[Failure]:
    if not schema.context or not schema.data:
        return []
    context = _normalize(schema.context)
    failures = []
    for i, item in enumerate(schema.data):
        norm = _normalize(item)
        if len(norm) >= min_len and norm in context:
            failures.append(Failure(
                FailureKind.CONTEXT_CONTAMINATION,
                f"data[{i}] appears verbatim in context",
            ))
    return failures


_CJK_NUMERALS = "一二三四五六七八九十〇零"
_NUMBERED_LINE = re.compile(
    rf"^[ \t]*(?:\d+|[{_CJK_NUMERALS}])(?:\. |\) |、|．)", re.MULTILINE
)
_BULLET_LINE = re.compile(r"^[ \t]*[-*•][ \t]+\S", re.MULTILINE)
_LIST_PREFIX = re.compile(rf"^\s*(?:(?:\d+|[{_CJK_NUMERALS}])(?:[.)、．])|[-*•])\s*")

_SPELLED = (
    "two three four five six seven eight nine ten eleven twelve fifteen "
    "twenty thirty fifty hundred"
).split()
_TASK_NOUNS = (
    "variations? versions? examples? sentences? questions? items? names? ideas? "
    "titles? taglines? slogans? descriptions? words? paragraphs? stories? poems? "
    "jokes? summaries summary headlines? options? alternatives? prompts? "
    "tweets? posts? captions? phrases? keywords? points? tips? facts? reasons? "
    "steps? characters? lines? answers? translations? texts? responses? outputs?"
).split()
_CARDINAL_NOUN = re.compile(
    rf"\b(?:\d+|{'|'.join(_SPELLED)})\s+(?:{'|'.join(_TASK_NOUNS)})\b",
    re.IGNORECASE,
)


def _echoed_items(schema: PromptSchema) -> int:
    if not schema.data:
        return 0
    lines = {_LIST_PREFIX.sub("", line).strip() for line in schema.serial.splitlines()}
    lines.discard("")
    return sum(1 for item in schema.data if item.strip() in lines)


def classify_confidence(schema: PromptSchema) -> ConfidenceTier:
    """High when the prompt itself carries explicit list structure.

    Structural cues: a numbered line, two or more bullet lines, a cardinal
    directly before a task noun ("10 variations"), or two or more data items
    repeated on their own lines. Anything else is medium.
    """
    text = schema.serial
    if _NUMBERED_LINE.search(text):
        return ConfidenceTier.HIGH
    if len(_BULLET_LINE.findall(text)) >= 2:
        return ConfidenceTier.HIGH
    if _CARDINAL_NOUN.search(text):
        return ConfidenceTier.HIGH
    if _echoed_items(schema) >= 2:
        return ConfidenceTier.HIGH
    return ConfidenceTier.MEDIUM


def validate(schema: PromptSchema, contamination_min_len: int = CONTAMINATION_MIN_LEN) -> ValidationReport:
    failures = [
        *check_mutual_exclusivity(schema),
        *check_template_data_compat(schema),
        *check_min_parallelism(schema),
        *check_context_contamination(schema, contamination_min_len),
    ]

    warnings = []
    names = {p.name for p in extract_placeholders(schema.template)}
    if schema.context is not None and "context" not in names:
        warnings.append("context is set but the template has no {context} placeholder; it will be prepended")

    if failures:
        return ValidationReport(failures=tuple(failures), warnings=tuple(warnings))
    return ValidationReport(tier=classify_confidence(schema), warnings=tuple(warnings))
