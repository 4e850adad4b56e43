"""Decomposition schema records, placeholder scanning and template patterns.

A schema describes how one user prompt splits into independent subtasks:
a per-subtask ``template`` with ``{data}`` / ``{context}`` placeholders, an
optional shared ``context``, and either a ``data`` list to iterate over or a
generation count ``n``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

KNOWN_PLACEHOLDERS = ("data", "context")

CANONICAL_CATEGORIES = (
    "Repeated Generation",
    "Reading Comprehension",
    "Named Entity Recognition",
    "Keyword Extraction",
    "Translation",
    "Language Correction",
    "Sentiment Analysis",
)

_FIELDS = ("serial", "template", "context", "data", "n", "category", "language", "source")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class SchemaError(ValueError):
    """Base class for schema record problems."""


class SchemaParseError(SchemaError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class MissingFieldError(SchemaError):
    def __init__(self, field_name: str, reason: str = "missing"):
        super().__init__(f"required field {field_name!r} is {reason}")
        self.field = field_name


class SchemaTypeError(SchemaError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"field {field_name!r}: {message}")
        self.field = field_name


class PatternUndetectableError(SchemaError):
    """The template has neither placeholders nor a count to classify by."""


@dataclass(frozen=True)
class PromptSchema:
    serial: str
    template: str
    category: str
    context: str | None = None
    data: tuple[str, ...] | None = None
    n: int | None = None
    language: str | None = None
    source: str | None = None
    metadata: dict[str, Any] = field(default_factory=dict, compare=True, hash=False)

    @property
    def subtask_count(self) -> int:
        if self.data is not None:
            return len(self.data)
        return self.n or 0

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"serial": self.serial, "template": self.template}
        if self.context is not None:
            out["context"] = self.context
        if self.data is not None:
            out["data"] = list(self.data)
        if self.n is not None:
            out["n"] = self.n
        out["category"] = self.category
        if self.language is not None:
            out["language"] = self.language
        if self.source is not None:
            out["source"] = self.source
        out.update(self.metadata)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def _required_text(obj: dict, name: str) -> str:
    if name not in obj or obj[name] is None:
        raise MissingFieldError(name)
    value = obj[name]
    if not isinstance(value, str):
        raise SchemaTypeError(name, f"expected string, got {type(value).__name__}")
    if not value.strip():
        raise MissingFieldError(name, "empty")
    return value


def _optional_text(obj: dict, name: str) -> str | None:
    value = obj.get(name)
    if value is None:
        return None
    if not isinstance(value, str):
        raise SchemaTypeError(name, f"expected string, got {type(value).__name__}")
    return value


def schema_from_dict(obj: Any) -> PromptSchema:
    """Bind a decoded JSON object to a :class:`PromptSchema`.

    Permissive by design: ``data`` and ``n`` may both be present, and counts
    of 0 or 1 are accepted. Those are validation concerns, not parse errors.
    """
    if not isinstance(obj, dict):
        raise SchemaTypeError("<record>", f"expected JSON object, got {type(obj).__name__}")

    serial = _required_text(obj, "serial")
    template = _required_text(obj, "template")
    category = _required_text(obj, "category")

    data = obj.get("data")
    if data is not None:
        if not isinstance(data, list) or not all(isinstance(d, str) for d in data):
            raise SchemaTypeError("data", "expected a list of strings")
        for i, item in enumerate(data):
            if not item.strip():
                raise SchemaTypeError("data", f"item {i} is empty")
        data = tuple(data)

    n = obj.get("n")
    if n is not None:
        # bool is an int subclass; reject it explicitly
        if isinstance(n, bool) or not isinstance(n, int) or n < 0:
            raise SchemaTypeError("n", f"expected non-negative integer, got {n!r}")

    metadata = {k: v for k, v in obj.items() if k not in _FIELDS}
    return PromptSchema(
        serial=serial,
        template=template,
        category=category,
        context=_optional_text(obj, "context"),
        data=data,
        n=n,
        language=_optional_text(obj, "language"),
        source=_optional_text(obj, "source"),
        metadata=metadata,
    )


def parse_schema_record(record_text: str) -> PromptSchema:
    try:
        obj = json.loads(record_text)
    except json.JSONDecodeError as exc:
        raise SchemaParseError(f"malformed JSON: {exc.msg}", exc.pos) from exc
    return schema_from_dict(obj)


@dataclass(frozen=True)
class Placeholder:
    name: str
    start: int
    end: int

    @property
    def known(self) -> bool:
        return self.name in KNOWN_PLACEHOLDERS


def scan_template(template: str):
    """Yield ``("lit", text)`` and ``("ph", Placeholder)`` tokens.

    Doubled braces are literal braces. A single brace not forming
    ``{identifier}`` is kept as literal text.
    """
    i = 0
    buf: list[str] = []
    length = len(template)
    while i < length:
        ch = template[i]
        if ch in "{}" and template.startswith(ch * 2, i):
            buf.append(ch)
            i += 2
            continue
        if ch == "{":
            m = _IDENT.match(template, i + 1)
            if m and m.end() < length and template[m.end()] == "}":
                if buf:
                    yield "lit", "".join(buf)
                    buf = []
                yield "ph", Placeholder(m.group(), i, m.end() + 1)
                i = m.end() + 1
                continue
        buf.append(ch)
        i += 1
    if buf:
        yield "lit", "".join(buf)


def extract_placeholders(template: str) -> list[Placeholder]:
    """Return every ``{name}`` placeholder in textual order.

    Offsets are string indices with an exclusive end. Names other than
    ``data`` and ``context`` are returned too; check ``Placeholder.known``.
    """
    return [tok for kind, tok in scan_template(template) if kind == "ph"]


class TemplatePattern(str, Enum):
    CONTEXT_DATA = "context_data"
    DATA_CONTEXT = "data_context"
    DATA_ONLY = "data_only"
    N_ONLY = "n_only"


def detect_template_pattern(schema: PromptSchema) -> TemplatePattern:
    placeholders = extract_placeholders(schema.template)
    data_at = next((p.start for p in placeholders if p.name == "data"), None)
    context_at = next((p.start for p in placeholders if p.name == "context"), None)

    if schema.n is not None and data_at is None:
        return TemplatePattern.N_ONLY
    if data_at is not None and context_at is None:
        return TemplatePattern.DATA_ONLY
    if data_at is not None and context_at is not None:
        if context_at < data_at:
            return TemplatePattern.CONTEXT_DATA
        return TemplatePattern.DATA_CONTEXT
    raise PatternUndetectableError(
        f"template {schema.template!r} has no data placeholder and no count"
    )
