"""Speedup metrics, cross-prompt aggregation and the n-scaling sweep."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from statistics import fmean

from .backends import SimulatedBackend, SimulatorConfig
from .clock import VirtualClock
from .executor import ExecConfig, RunResult, run_parallel, run_serial
from .schema import PromptSchema
from .templating import render_subtasks

RATIO_OF_MEANS = "ratio_of_means"
MEAN_OF_RATIOS = "mean_of_ratios"


def _positive(name: str, value: float) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


def raw_speedup(serial_duration: float, parallel_duration: float) -> float:
    _positive("serial_duration", serial_duration)
    _positive("parallel_duration", parallel_duration)
    return serial_duration / parallel_duration


def normalized_speedup(raw: float, parallel_tokens: int, serial_tokens: int) -> float:
    """Raw speedup scaled by parallel/serial output-token ratio."""
    if serial_tokens <= 0:
        raise ValueError("serial token count must be positive")
    return raw * (parallel_tokens / serial_tokens)


def e2e_speedup(serial_duration: float, extraction_duration: float, parallel_duration: float) -> float:
    _positive("serial_duration", serial_duration)
    _positive("parallel_duration", parallel_duration)
    if extraction_duration < 0:
        raise ValueError(f"extraction_duration must be non-negative, got {extraction_duration}")
    return serial_duration / (extraction_duration + parallel_duration)


@dataclass(frozen=True)
class MetricsSummary:
    raw_speedup: float
    normalized_speedup: float | None
    serial_duration: float
    parallel_duration: float
    serial_tokens: float
    parallel_tokens: float
    e2e_speedup: float | None = None
    extraction_duration: float | None = None
    aggregation: str = RATIO_OF_MEANS
    n_prompts: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def summarize(serial_duration: float, parallel_duration: float, serial_tokens: int,
              parallel_tokens: int, extraction_duration: float | None = None) -> MetricsSummary:
    raw = raw_speedup(serial_duration, parallel_duration)
    return MetricsSummary(
        raw_speedup=raw,
        normalized_speedup=normalized_speedup(raw, parallel_tokens, serial_tokens) if serial_tokens > 0 else None,
        serial_duration=serial_duration,
        parallel_duration=parallel_duration,
        serial_tokens=serial_tokens,
        parallel_tokens=parallel_tokens,
        e2e_speedup=(
            e2e_speedup(serial_duration, extraction_duration, parallel_duration)
            if extraction_duration is not None else None
        ),
        extraction_duration=extraction_duration,
    )


def summarize_run(result: RunResult) -> MetricsSummary:
    s, p = result.serial_trace, result.parallel_trace
    return summarize(s.wall_duration, p.wall_duration, s.total_output_tokens,
                     p.total_output_tokens, p.extraction_duration)


def aggregate(results: list[MetricsSummary], method: str = RATIO_OF_MEANS) -> MetricsSummary:
    """Combine per-prompt summaries.

    ``ratio_of_means`` divides mean durations (and mean token counts);
    ``mean_of_ratios`` averages each prompt's own ratios. Durations and
    token counts in the output are means either way.
    """
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    if method not in (RATIO_OF_MEANS, MEAN_OF_RATIOS):
        raise ValueError(f"unknown aggregation method {method!r}")

    serial = fmean(r.serial_duration for r in results)
    parallel = fmean(r.parallel_duration for r in results)
    s_tok = fmean(r.serial_tokens for r in results)
    p_tok = fmean(r.parallel_tokens for r in results)
    with_e2e = all(r.extraction_duration is not None for r in results)
    extraction = fmean(r.extraction_duration for r in results) if with_e2e else None

    if method == RATIO_OF_MEANS:
        raw = raw_speedup(serial, parallel)
        norm = normalized_speedup(raw, p_tok, s_tok) if s_tok > 0 else None
        e2e = e2e_speedup(serial, extraction, parallel) if with_e2e else None
    else:
        raw = fmean(r.raw_speedup for r in results)
        norms = [r.normalized_speedup for r in results]
        norm = fmean(norms) if all(x is not None for x in norms) else None
        e2e = fmean(r.e2e_speedup for r in results) if with_e2e else None

    return MetricsSummary(
        raw_speedup=raw,
        normalized_speedup=norm,
        serial_duration=serial,
        parallel_duration=parallel,
        serial_tokens=s_tok,
        parallel_tokens=p_tok,
        e2e_speedup=e2e,
        extraction_duration=extraction,
        aggregation=method,
        n_prompts=len(results),
    )


@dataclass(frozen=True)
class ScalingPoint:
    n: int
    serial_wall: float
    parallel_wall: float
    raw_speedup: float


@dataclass(frozen=True)
class ScalingCurve:
    points: tuple[ScalingPoint, ...]

    def to_csv_rows(self) -> list[list]:
        rows: list[list] = [["n", "serial_wall", "parallel_wall", "speedup"]]
        for p in self.points:
            rows.append([p.n, f"{p.serial_wall:.3f}", f"{p.parallel_wall:.3f}", f"{p.raw_speedup:.3f}"])
        return rows


def scaling_experiment(
    template_schema: PromptSchema,
    n_values: list[int],
    sim_cfg: SimulatorConfig,
    exec_cfg: ExecConfig,
) -> ScalingCurve:
    """Sweep the generation count of a count-mode schema on the simulator.

    The monolithic request asks for ``n`` outputs, so its simulated output
    grows linearly with ``n``; each parallel subtask produces one output.
    Runs on a fresh virtual clock regardless of ``exec_cfg.clock``.
    """
    if template_schema.n is None:
        raise ValueError("scaling experiment needs a count-mode schema")
    if not n_values or any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be non-empty and strictly increasing")

    clock = VirtualClock()
    cfg = dataclasses.replace(exec_cfg, clock=clock)
    backend = SimulatedBackend(sim_cfg, clock)
    points = []
    for n in n_values:
        schema = dataclasses.replace(template_schema, n=n)
        serial = run_serial(schema, backend, cfg)
        parallel = run_parallel(render_subtasks(schema, cfg.system_prompt), backend, cfg)
        points.append(ScalingPoint(
            n, serial.wall_duration, parallel.wall_duration,
            raw_speedup(serial.wall_duration, parallel.wall_duration),
        ))
    return ScalingCurve(tuple(points))
