"""Validate, execute and benchmark intra-query prompt decompositions."""

from .backends import (
    BackendError,
    CompletionRequest,
    CompletionResponse,
    HttpBackend,
    PermanentError,
    SimulatedBackend,
    SimulatorConfig,
    TransientError,
    count_tokens,
    simulated_latency,
)
from .clock import MonotonicClock, VirtualClock
from .executor import (
    ExecConfig,
    ExecutionTrace,
    RetryExhausted,
    RunResult,
    SubtaskRecord,
    run_comparison,
    run_parallel,
    run_serial,
    with_backoff,
)
from .metrics import (
    MetricsSummary,
    ScalingCurve,
    aggregate,
    e2e_speedup,
    normalized_speedup,
    raw_speedup,
    scaling_experiment,
)
from .schema import (
    Placeholder,
    PromptSchema,
    TemplatePattern,
    detect_template_pattern,
    extract_placeholders,
    parse_schema_record,
)
from .templating import SubtaskPlan, build_serial_prompt, diversity_letter, reassemble, render_subtasks
from .validator import ConfidenceTier, FailureKind, ValidationReport, validate

__version__ = "0.1.0"
