"""Render a validated schema into the per-subtask prompts sent to a backend."""

from __future__ import annotations

import string
from dataclasses import dataclass
from enum import Enum

from .schema import PromptSchema, scan_template

DEFAULT_SYSTEM_PROMPT = "You are a helpful assistant."
DIVERSITY_INSTRUCTION = "Try to make your response start with the letter {letter}"


class RenderError(ValueError):
    pass


class ReassemblyError(ValueError):
    pass


class PlanMode(str, Enum):
    DATA = "data_mode"
    COUNT = "count_mode"


@dataclass(frozen=True)
class Subtask:
    index: int
    prompt: str
    system_suffix: str | None = None


@dataclass(frozen=True)
class SubtaskPlan:
    subtasks: tuple[Subtask, ...]
    shared_system: str
    mode: PlanMode

    def __len__(self) -> int:
        return len(self.subtasks)

    def system_for(self, subtask: Subtask) -> str:
        if subtask.system_suffix:
            return f"{self.shared_system}\n{subtask.system_suffix}"
        return self.shared_system


def diversity_letter(index: int) -> str:
    if index < 0:
        raise ValueError(f"subtask index must be non-negative, got {index}")
    return string.ascii_uppercase[index % 26]


def diversity_instruction(index: int) -> str:
    return DIVERSITY_INSTRUCTION.format(letter=diversity_letter(index))


def _fill(template: str, values: dict[str, str | None]) -> str:
    parts = []
    for kind, tok in scan_template(template):
        if kind == "lit":
            parts.append(tok)
            continue
        value = values.get(tok.name)
        if value is None:
            raise RenderError(f"unresolved placeholder {{{tok.name}}} at {tok.start}")
        parts.append(value)
    return "".join(parts)


def render_subtasks(schema: PromptSchema, shared_system: str = DEFAULT_SYSTEM_PROMPT) -> SubtaskPlan:
    """Expand ``schema`` into one prompt per data item, or ``n`` prompts.

    Context without a ``{context}`` placeholder is prepended to every prompt,
    separated by a blank line. Count-mode subtasks get a distinct-letter
    instruction as a system suffix.
    """
    prepend = schema.context is not None and not any(
        kind == "ph" and tok.name == "context" for kind, tok in scan_template(schema.template)
    )

    def finish(prompt: str) -> str:
        return f"{schema.context}\n\n{prompt}" if prepend else prompt

    if schema.data is not None:
        subtasks = tuple(
            Subtask(i, finish(_fill(schema.template, {"data": item, "context": schema.context})))
            for i, item in enumerate(schema.data)
        )
        return SubtaskPlan(subtasks, shared_system, PlanMode.DATA)

    if schema.n is None:
        raise RenderError("schema has neither 'data' nor 'n'")
    prompt = finish(_fill(schema.template, {"context": schema.context}))
    subtasks = tuple(Subtask(i, prompt, diversity_instruction(i)) for i in range(schema.n))
    return SubtaskPlan(subtasks, shared_system, PlanMode.COUNT)


def build_serial_prompt(schema: PromptSchema) -> str:
    return schema.serial


def reassemble(plan: SubtaskPlan, outputs: list[str]) -> str:
    if len(outputs) != len(plan.subtasks):
        raise ReassemblyError(
            f"got {len(outputs)} outputs for {len(plan.subtasks)} subtasks"
        )
    return "\n\n".join(f"{k}. {text}" for k, text in enumerate(outputs, start=1))
