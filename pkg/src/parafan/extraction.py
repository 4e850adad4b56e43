"""LLM-assisted schema extraction from a raw user prompt."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .backends import Backend, BackendError, CompletionRequest
from .executor import ExecConfig, with_backoff
from .schema import CANONICAL_CATEGORIES, PromptSchema, SchemaError, schema_from_dict

EXTRACTION_PROMPT_VERSION = "1"

EXTRACTION_SYSTEM_PROMPT = f"""\
You analyze a single user prompt and decide whether it contains independent \
subtasks that could be answered in parallel. Do not answer the prompt itself.

A prompt is parallelizable when it asks for several outputs that do not depend \
on each other: the same operation applied to multiple items, several questions \
about one shared passage, or a request for N separate generations. It is NOT \
parallelizable when later parts depend on earlier ones (a story told in order, \
a running total, step-by-step reasoning toward one answer).

Signals of parallel structure: numbered or bulleted lists, an explicit count \
("10 variations", "five titles"), plural task nouns ("these sentences"), and \
repeated instructions over a list of items.

Prefer one of these categories when it fits: {", ".join(CANONICAL_CATEGORIES)}. \
Use a short new category name only when none of them fits.

Respond with a single JSON object and nothing else:
{{"parallelizable": true|false,
  "template": "instruction applied to each subtask, using {{data}} and {{context}} placeholders",
  "context": "shared content for every subtask, or null",
  "data": ["item 1", "item 2"] or null,
  "n": integer or null,
  "category": "category name"}}

Hard rule: set exactly one of "data" or "n". Use "data" for a list of items and \
"n" for a number of generations. Never set both. A list needs at least two items \
and a count must be greater than 1.

Examples:
Prompt: "Translate to French: 1. Good morning 2. Thank you"
Correct: {{"parallelizable": true, "template": "Translate to French: {{data}}", \
"context": null, "data": ["Good morning", "Thank you"], "n": null, "category": "Translation"}}

Prompt: "Write 5 slogans for a bakery"
Wrong: {{"template": "Write a slogan for a bakery: {{data}}", "data": ["bakery"], "n": 5}}
Why: both data and n are set, and the single item is not a list of subtasks.
Correct: {{"parallelizable": true, "template": "Write a slogan for a bakery", \
"context": null, "data": null, "n": 5, "category": "Repeated Generation"}}

Prompt: "Write a story where each chapter builds on the previous one"
Correct: {{"parallelizable": false}}
Why: each part depends on the one before it.
"""


def minimally_clean(prompt: str) -> str:
    return prompt.replace("\r\n", "\n").strip()


@dataclass(frozen=True)
class ExtractionResult:
    raw_prompt: str
    schema: PromptSchema | None
    extraction_duration: float
    parse_ok: bool
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "raw_prompt": self.raw_prompt,
            "schema": self.schema.to_dict() if self.schema else None,
            "extraction_duration": self.extraction_duration,
            "parse_ok": self.parse_ok,
            "error": self.error,
        }


_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)\n\s*```", re.DOTALL)


def _json_object(text: str) -> dict:
    m = _FENCE.search(text)
    if m:
        text = m.group(1)
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end < start:
        raise ValueError("no JSON object in extraction output")
    obj = json.loads(text[start:end + 1])
    if not isinstance(obj, dict):
        raise ValueError("extraction output is not a JSON object")
    return obj


def extract_schema(
    raw_prompt: str,
    backend: Backend,
    cfg: ExecConfig | None = None,
    system_prompt: str = EXTRACTION_SYSTEM_PROMPT,
) -> ExtractionResult:
    """Ask ``backend`` for a decomposition schema and parse its reply.

    The schema's ``serial`` field is always the minimally cleaned raw prompt,
    whatever the model echoes back. Failures come back as
    ``parse_ok=False`` with the reason in ``error``.
    """
    cfg = cfg or ExecConfig()
    clock = cfg.clock
    serial = minimally_clean(raw_prompt)
    request = CompletionRequest(user=serial, system=system_prompt, request_tag="extract")

    start = clock.now()
    try:
        resp, _ = with_backoff(lambda: backend.complete(request, cfg.per_call_timeout), cfg)
    except BackendError as exc:
        return ExtractionResult(raw_prompt, None, clock.now() - start, False, str(exc))
    duration = clock.now() - start

    try:
        obj = _json_object(resp.text)
        if obj.get("parallelizable") is False:
            return ExtractionResult(raw_prompt, None, duration, False, "not parallelizable")
        obj.pop("parallelizable", None)
        obj["serial"] = serial
        for key in ("context", "data", "n"):
            if obj.get(key) is None:
                obj.pop(key, None)
        schema = schema_from_dict(obj)
    except (ValueError, SchemaError) as exc:
        return ExtractionResult(raw_prompt, None, duration, False, f"unparseable extraction: {exc}")
    return ExtractionResult(raw_prompt, schema, duration, True)


def load_prompt(path: str | Path) -> str:
    """Read an alternative extraction system prompt from a text file."""
    return Path(path).read_text(encoding="utf-8")
