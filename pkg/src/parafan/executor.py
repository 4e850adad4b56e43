"""Serial and parallel execution of a decomposed prompt.

Parallel runs fan out over at most ``max_concurrency`` worker threads that
pull subtasks from a FIFO queue in index order. Every backend call goes
through :func:`with_backoff`. All timing uses the injected clock.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .backends import Backend, BackendError, CompletionRequest, CompletionResponse
from .clock import MonotonicClock
from .schema import PromptSchema
from .templating import (
    DEFAULT_SYSTEM_PROMPT,
    SubtaskPlan,
    build_serial_prompt,
    reassemble,
    render_subtasks,
)

logger = logging.getLogger(__name__)

DEFAULT_BACKOFF_WAITS = (1.0, 2.0, 4.0, 8.0)


def exponential_waits(max_attempts: int, base: float = 1.0) -> tuple[float, ...]:
    return tuple(base * 2**i for i in range(max_attempts - 1))


@dataclass(frozen=True)
class ExecConfig:
    max_concurrency: int = 10
    backoff_waits: tuple[float, ...] = DEFAULT_BACKOFF_WAITS
    max_attempts: int = 5
    per_call_timeout: float | None = 120.0
    max_output_tokens: int | None = None
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    clock: object = field(default_factory=MonotonicClock, compare=False)

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if len(self.backoff_waits) != self.max_attempts - 1:
            raise ValueError(
                f"need {self.max_attempts - 1} backoff waits for {self.max_attempts} attempts, "
                f"got {len(self.backoff_waits)}"
            )

    @classmethod
    def with_attempts(cls, max_attempts: int, **kwargs) -> ExecConfig:
        return cls(max_attempts=max_attempts, backoff_waits=exponential_waits(max_attempts), **kwargs)


class RetryExhausted(BackendError):
    transient = True

    def __init__(self, kind: str, attempts: int):
        super().__init__(kind, f"gave up after {attempts} attempts")
        self.attempts = attempts


def with_backoff(
    call: Callable[[], CompletionResponse], cfg: ExecConfig
) -> tuple[CompletionResponse, int]:
    """Run ``call`` with exponential backoff on transient errors.

    Returns ``(response, attempts)``. Permanent errors propagate on the
    attempt they occur; running out of attempts raises :class:`RetryExhausted`.
    """
    for attempt in range(1, cfg.max_attempts + 1):
        try:
            return call(), attempt
        except BackendError as exc:
            if not exc.transient:
                exc.attempts = attempt
                raise
            if attempt == cfg.max_attempts:
                raise RetryExhausted(exc.kind, attempt) from exc
            wait = cfg.backoff_waits[attempt - 1]
            logger.debug("transient %s on attempt %d, waiting %.1fs", exc.kind, attempt, wait)
            cfg.clock.sleep(wait)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class SubtaskRecord:
    index: int
    start: float
    end: float
    attempts: int
    status: str
    output_tokens: int = 0
    text: str = ""
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def duration(self) -> float:
        return self.end - self.start

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "start": self.start,
            "end": self.end,
            "attempts": self.attempts,
            "status": self.status,
            "output_tokens": self.output_tokens,
            "text": self.text,
            "error": self.error,
        }


@dataclass(frozen=True)
class ExecutionTrace:
    mode: str
    records: tuple[SubtaskRecord, ...]
    wall_duration: float
    extraction_duration: float | None = None
    dispatch_order: tuple[int, ...] = ()

    @property
    def total_output_tokens(self) -> int:
        return sum(r.output_tokens for r in self.records)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.records)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "wall_duration": self.wall_duration,
            "total_output_tokens": self.total_output_tokens,
            "extraction_duration": self.extraction_duration,
            "records": [r.to_dict() for r in self.records],
        }


def _execute(index: int, request: CompletionRequest, backend: Backend, cfg: ExecConfig) -> SubtaskRecord:
    clock = cfg.clock
    start = clock.now()
    try:
        resp, attempts = with_backoff(lambda: backend.complete(request, cfg.per_call_timeout), cfg)
    except BackendError as exc:
        return SubtaskRecord(
            index, start, clock.now(), getattr(exc, "attempts", 1),
            f"failed:{exc.kind}", error=str(exc),
        )
    except Exception as exc:  # a buggy backend must not lose the record
        logger.exception("backend raised unexpectedly on subtask %d", index)
        return SubtaskRecord(index, start, clock.now(), 1, "failed:internal", error=repr(exc))
    return SubtaskRecord(index, start, clock.now(), attempts, "ok", resp.output_tokens, resp.text)


def run_serial(schema: PromptSchema, backend: Backend, cfg: ExecConfig) -> ExecutionTrace:
    """Send the original monolithic prompt as a single request."""
    request = CompletionRequest(
        user=build_serial_prompt(schema),
        system=cfg.system_prompt,
        max_output_tokens=cfg.max_output_tokens,
        request_tag="mono",
        expected_items=max(schema.subtask_count, 1),
    )
    start = cfg.clock.now()
    record = _execute(0, request, backend, cfg)
    return ExecutionTrace("serial", (record,), cfg.clock.now() - start)


def run_parallel(plan: SubtaskPlan, backend: Backend, cfg: ExecConfig) -> ExecutionTrace:
    if not plan.subtasks:
        raise ValueError("cannot run an empty plan")
    clock = cfg.clock
    pending = deque(plan.subtasks)
    records: list[SubtaskRecord | None] = [None] * len(plan.subtasks)
    dispatched: list[int] = []
    lock = threading.Lock()
    n_workers = min(cfg.max_concurrency, len(plan.subtasks))

    def worker():
        try:
            while True:
                with lock:
                    if not pending:
                        return
                    sub = pending.popleft()
                    dispatched.append(sub.index)
                request = CompletionRequest(
                    user=sub.prompt,
                    system=plan.system_for(sub),
                    max_output_tokens=cfg.max_output_tokens,
                    request_tag=f"sub-{sub.index}",
                )
                records[sub.index] = _execute(sub.index, request, backend, cfg)
        finally:
            clock.leave()

    # register every worker before any starts so virtual time cannot run ahead
    clock.expect(n_workers)
    start = clock.now()
    threads = [threading.Thread(target=worker, name=f"parafan-{i}", daemon=True) for i in range(n_workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    end = max(r.end for r in records)
    return ExecutionTrace("parallel", tuple(records), end - start, dispatch_order=tuple(dispatched))


@dataclass(frozen=True)
class RunResult:
    serial_trace: ExecutionTrace
    parallel_trace: ExecutionTrace
    reassembled_text: str
    plan: SubtaskPlan


def run_comparison(
    schema: PromptSchema,
    backend: Backend,
    cfg: ExecConfig,
    extraction_duration: float | None = None,
) -> RunResult:
    """Serial run, then parallel run, then reassembly of the parallel outputs.

    A measured ``extraction_duration`` is attached to the parallel trace so
    end-to-end speedup can be computed downstream.
    """
    plan = render_subtasks(schema, cfg.system_prompt)
    serial = run_serial(schema, backend, cfg)
    parallel = run_parallel(plan, backend, cfg)
    if extraction_duration is not None:
        parallel = ExecutionTrace(
            parallel.mode, parallel.records, parallel.wall_duration,
            extraction_duration, parallel.dispatch_order,
        )
    text = reassemble(plan, [r.text for r in parallel.records])
    return RunResult(serial, parallel, text, plan)
