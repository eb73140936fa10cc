"""Split annotations: pipeline unmodified library calls over cache-sized batches."""

from .annotation import (
    AnnotatedFunction,
    FunctionSignature,
    SplitAnnotation,
    format_annotation,
    parse_annotation,
    parse_signature,
    validate_annotation,
)
from .dataflow import LazyHandle, Session
from .errors import *  # noqa: F401,F403
from .executor import ExecConfig, StageTiming, compute_batch_size, partition, run_plan, run_stage
from .planner import ExecutionPlan, Stage, plan
from .split_types import (
    END,
    RuntimeInfo,
    SplitKind,
    SplitRegistry,
    SplitType,
    WorkerContext,
    unknown,
)

__version__ = "0.1.0"
