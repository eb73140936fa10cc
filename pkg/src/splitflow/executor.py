"""Batched, pipelined, statically partitioned execution of stages.

Each stage picks a batch size from its inputs' element sizes, then gives
every worker a contiguous element range. Each worker splits its inputs one
batch at a time and runs the whole stage on that batch. Per-batch outputs
are merged once per worker and once more on the coordinating thread.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Optional, Sequence

from .errors import (
    ElementCountMismatch,
    EmptySplit,
    MergeFailure,
    NoSplittableInputs,
    NullData,
    SplitFailure,
    SplitflowError,
    StageFailure,
)
from .split_types import (
    DeferredSplitType,
    RuntimeInfo,
    SplitRegistry,
    SplitType,
    WorkerContext,
)

RETURN = -1

DEFAULT_L2_BYTES = 262144


def _env_bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


@dataclass
class ExecConfig:
    workers: int = 1
    l2_bytes: int = DEFAULT_L2_BYTES
    batch_constant_C: float = 1.0
    batch_override: Optional[int] = None
    pedantic: bool = False
    pipelining_enabled: bool = True

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.l2_bytes <= 0:
            raise ValueError("l2_bytes must be positive")
        if self.batch_constant_C <= 0:
            raise ValueError("batch_constant_C must be positive")
        if self.batch_override is not None and self.batch_override < 1:
            raise ValueError("batch_override must be >= 1")

    @classmethod
    def from_env(cls, environ: Mapping[str, str] = os.environ, prefix: str = "SPLITFLOW_", **overrides):
        """Build a config from ``SPLITFLOW_WORKERS``, ``SPLITFLOW_L2_BYTES``, ``SPLITFLOW_C``,
        ``SPLITFLOW_BATCH``, ``SPLITFLOW_PEDANTIC`` and ``SPLITFLOW_PIPELINE``."""
        kw: dict[str, Any] = {}
        get = lambda key: environ.get(prefix + key)  # noqa: E731
        if get("WORKERS"):
            kw["workers"] = int(get("WORKERS"))
        if get("L2_BYTES"):
            kw["l2_bytes"] = int(get("L2_BYTES"))
        if get("C"):
            kw["batch_constant_C"] = float(get("C"))
        if get("BATCH"):
            kw["batch_override"] = int(get("BATCH"))
        if get("PEDANTIC"):
            kw["pedantic"] = _env_bool(get("PEDANTIC"))
        if get("PIPELINE"):
            kw["pipelining_enabled"] = _env_bool(get("PIPELINE"))
        kw.update(overrides)
        return cls(**kw)


class WorkerRange(NamedTuple):
    worker_id: int
    start_element: int
    end_element: int

    @property
    def size(self) -> int:
        return self.end_element - self.start_element


@dataclass
class StageTiming:
    stage_index: int
    split_ns: int = 0
    exec_ns: int = 0
    merge_ns: int = 0


def compute_batch_size(inputs: Sequence[RuntimeInfo], cfg: ExecConfig) -> int:
    """Elements per batch: ``C * L2 / sum(element sizes)``, at least one."""
    if cfg.batch_override is not None:
        return cfg.batch_override
    if not inputs:
        raise NoSplittableInputs("a stage needs at least one split input")
    per_element = sum(info.element_size_bytes for info in inputs)
    if per_element <= 0:
        # inputs occupy no memory per element (sizes, counters): one batch
        return max(1, max(info.total_elements for info in inputs))
    return max(1, math.floor(cfg.batch_constant_C * cfg.l2_bytes / per_element))


def partition(total: int, workers: int) -> list[WorkerRange]:
    """Contiguous ranges over ``[0, total)`` whose sizes differ by at most one."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    base, extra = divmod(total, workers)
    ranges = []
    start = 0
    for w in range(workers):
        end = start + base + (1 if w < extra else 0)
        ranges.append(WorkerRange(w, start, end))
        start = end
    return ranges


# -- stage compilation --------------------------------------------------------

_SPLIT, _LOCAL, _BCAST = 0, 1, 2


@dataclass
class _Input:
    value_id: int
    declared: SplitType
    st: SplitType
    value: Any
    splitter: Any
    info: RuntimeInfo


@dataclass
class _Call:
    name: str
    func: Any
    sources: list[tuple[int, Any]]
    ret: Optional[int]


@dataclass
class _Compiled:
    inputs: list[_Input]
    calls: list[_Call]
    outputs: list[int]
    total: int
    resolved: dict = field(default_factory=dict)


def _resolve(st: SplitType, value: Any, env: Mapping[int, Any], registry: SplitRegistry, cache: dict):
    """Concrete split type to use for ``value`` in this stage."""
    if registry.is_splittable(st):
        return st
    if isinstance(st, DeferredSplitType):
        if st not in cache:
            cache[st] = registry.construct(st.name, [env[v] for v in st.arg_refs])
        resolved = cache[st]
        if registry.is_splittable(resolved):
            return resolved
    # unknown or merge-only: fall back to the data type's default
    default = registry.default_split_type(value)
    if default is None:
        raise SplitFailure(f"no default split type for {type(value).__name__} value typed {st}")
    return default


def _compile(stage, cfg: ExecConfig, env: Mapping[int, Any], registry: SplitRegistry) -> _Compiled:
    cache: dict = {}
    inputs: list[_Input] = []
    index: dict[tuple[int, SplitType], int] = {}
    for vid, st in stage.input_splits:
        value = env[vid]
        if value is None:
            raise NullData(f"stage {stage.index}: split input v{vid} is absent")
        rst = _resolve(st, value, env, registry, cache)
        kind = registry.get(rst.name)
        try:
            info = kind.info(value, rst.params)
        except (TypeError, AttributeError, ValueError) as exc:
            raise SplitFailure(f"stage {stage.index}: cannot size v{vid} as {rst}: {exc}") from exc
        index[(vid, st)] = len(inputs)
        inputs.append(_Input(vid, st, rst, value, kind.splitter, info))
    if not inputs:
        raise NoSplittableInputs(f"stage {stage.index} has no split inputs")

    totals = {inp.info.total_elements for inp in inputs}
    if len(totals) > 1:
        detail = ", ".join(f"v{i.value_id}:{i.st}={i.info.total_elements}" for i in inputs)
        raise ElementCountMismatch(f"stage {stage.index}: split inputs disagree ({detail})")

    produced: set[int] = set()
    calls = []
    for node in stage.calls:
        sources = []
        for i, snap in enumerate(node.args):
            t = stage.slot_types[(node.node_id, i)]
            if not isinstance(t, SplitType):
                sources.append((_BCAST, env[snap.value_id]))
            elif snap.value_id in produced:
                sources.append((_LOCAL, snap.value_id))
            else:
                sources.append((_SPLIT, index[(snap.value_id, t)]))
        calls.append(_Call(node.name, node.function.func, sources, node.returns))
        if node.returns is not None:
            produced.add(node.returns)
    return _Compiled(inputs, calls, list(stage.output_merges), totals.pop(), cache)


def _check_piece(piece, inp: _Input, start: int, end: int, registry: SplitRegistry):
    if piece is None:
        raise NullData(f"split of v{inp.value_id} over [{start}, {end}) produced no data")
    got = registry.get(inp.st.name).info(piece, inp.st.params).total_elements
    if got == 0:
        raise EmptySplit(f"split of v{inp.value_id} over [{start}, {end}) is empty")
    if got != end - start:
        raise ElementCountMismatch(
            f"split of v{inp.value_id} over [{start}, {end}) holds {got} elements"
        )


# -- execution ----------------------------------------------------------------


class _Worker:
    """One execution lane: a contiguous element range processed batch by batch."""

    def __init__(self, prog: _Compiled, wr: WorkerRange, batch: int, cfg: ExecConfig, registry):
        self.prog = prog
        self.wr = wr
        self.windows = [
            (s, min(s + batch, wr.end_element))
            for s in range(wr.start_element, wr.end_element, batch)
        ]
        self.cfg = cfg
        self.registry = registry
        self.partials: dict[int, list] = {vid: [] for vid in prog.outputs}
        self.split_ns = 0
        self.exec_ns = 0
        self.merge_ns = 0
        # per-batch state, only kept when calls are not pipelined
        self._pieces: list[Optional[list]] = [None] * len(self.windows)
        self._locals: list[dict] = [dict() for _ in self.windows] if not cfg.pipelining_enabled else []

    def _split(self, b: int) -> list:
        start, end = self.windows[b]
        if start >= self.prog.total:  # END
            return []
        ctx = WorkerContext(self.wr.worker_id, self.cfg.workers, b)
        pieces = [inp.splitter(inp.value, start, end, inp.st.params, ctx) for inp in self.prog.inputs]
        if self.cfg.pedantic:
            for piece, inp in zip(pieces, self.prog.inputs):
                _check_piece(piece, inp, start, end, self.registry)
        return pieces

    @staticmethod
    def _invoke(call: _Call, pieces: list, local: dict):
        args = [
            pieces[ref] if kind == _SPLIT else local[ref] if kind == _LOCAL else ref
            for kind, ref in call.sources
        ]
        result = call.func(*args)
        if call.ret is not None:
            local[call.ret] = result

    def run_pipelined(self) -> None:
        clock = time.perf_counter_ns
        calls = self.prog.calls
        outputs = self.prog.outputs
        partials = self.partials
        invoke = self._invoke
        for b in range(len(self.windows)):
            t0 = clock()
            pieces = self._split(b)
            t1 = clock()
            local: dict = {}
            for call in calls:
                invoke(call, pieces, local)
            for vid in outputs:
                partials[vid].append(local[vid])
            self.split_ns += t1 - t0
            self.exec_ns += clock() - t1

    def run_call(self, call_index: int) -> None:
        """Run one call over every batch of this lane (pipelining disabled)."""
        clock = time.perf_counter_ns
        call = self.prog.calls[call_index]
        for b in range(len(self.windows)):
            t0 = clock()
            pieces = self._pieces[b]
            if pieces is None:
                pieces = self._pieces[b] = self._split(b)
            t1 = clock()
            self._invoke(call, pieces, self._locals[b])
            self.split_ns += t1 - t0
            self.exec_ns += clock() - t1

    def collect(self) -> None:
        for local in self._locals:
            for vid in self.prog.outputs:
                self.partials[vid].append(local[vid])
        self._locals = []
        self._pieces = []

    def merge(self, merge_types: dict[int, SplitType]) -> dict[int, Any]:
        t0 = time.perf_counter_ns()
        merged = {}
        for vid, pieces in self.partials.items():
            if pieces:
                merged[vid] = self.registry.merge(pieces, merge_types[vid])
        self.partials = {}
        self.merge_ns += time.perf_counter_ns() - t0
        return merged


def _merge_type(st: SplitType, sample: Any, env, registry: SplitRegistry, cache: dict) -> SplitType:
    if isinstance(st, DeferredSplitType):
        if st not in cache:
            cache[st] = registry.construct(st.name, [env[v] for v in st.arg_refs])
        st = cache[st]
    if st.name in registry and not isinstance(st, DeferredSplitType) and registry.get(st.name).merger:
        return st
    if registry.is_splittable(st) or st.name in registry:
        raise MergeFailure(f"split type {st} cannot merge results")
    default = registry.default_split_type(sample)
    if default is None or registry.get(default.name).merger is None:
        raise MergeFailure(f"no way to merge {type(sample).__name__} pieces typed {st}")
    return default


def _run_whole(stage, prog: _Compiled) -> dict[int, Any]:
    """Run a zero-element stage once over the unsplit values."""
    local: dict = {}
    whole = [inp.value for inp in prog.inputs]
    for call in prog.calls:
        _Worker._invoke(call, whole, local)
    return {vid: local[vid] for vid in prog.outputs}


def _reraise(exc: BaseException, stage_index: int):
    if isinstance(exc, SplitflowError):
        raise exc
    raise StageFailure(f"stage {stage_index}: {type(exc).__name__}: {exc}") from exc


def run_stage(
    stage,
    cfg: ExecConfig,
    env: Mapping[int, Any],
    registry: SplitRegistry,
    timing: Optional[StageTiming] = None,
) -> dict[int, Any]:
    """Execute one stage and return its merged outputs keyed by value id."""
    prog = _compile(stage, cfg, env, registry)
    batch = compute_batch_size([inp.info for inp in prog.inputs], cfg)
    stage.batch_size = batch
    if prog.total == 0:
        stage.piece_count = 0
        try:
            return _run_whole(stage, prog)
        except Exception as exc:  # noqa: BLE001
            _reraise(exc, stage.index)

    workers = [_Worker(prog, wr, batch, cfg, registry) for wr in partition(prog.total, cfg.workers)]
    stage.piece_count = sum(len(w.windows) for w in workers)
    active = [w for w in workers if w.windows]

    merge_types: dict[int, SplitType] = {}
    pool = ThreadPoolExecutor(max_workers=len(active)) if len(active) > 1 else None

    def fan_out(fn):
        if pool is None:
            return [fn(w) for w in active]
        futures = [pool.submit(fn, w) for w in active]
        results, first_error = [], None
        for f in futures:
            try:
                results.append(f.result())
            except BaseException as exc:  # noqa: BLE001
                if first_error is None:
                    first_error = exc
        if first_error is not None:
            raise first_error
        return results

    try:
        if cfg.pipelining_enabled:
            fan_out(lambda w: w.run_pipelined())
        else:
            for i in range(len(prog.calls)):
                fan_out(lambda w, i=i: w.run_call(i))
            for w in active:
                w.collect()
        for vid, st in stage.output_merges.items():
            sample = next(w.partials[vid][0] for w in active)
            merge_types[vid] = _merge_type(st, sample, env, registry, prog.resolved)
        per_worker = fan_out(lambda w: w.merge(merge_types))
        t0 = time.perf_counter_ns()
        outputs = {
            vid: registry.merge([m[vid] for m in per_worker], merge_types[vid])
            for vid in prog.outputs
        }
        final_merge_ns = time.perf_counter_ns() - t0
    except Exception as exc:  # noqa: BLE001
        _reraise(exc, stage.index)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    if timing is not None:
        timing.split_ns += sum(w.split_ns for w in active)
        timing.exec_ns += sum(w.exec_ns for w in active)
        timing.merge_ns += sum(w.merge_ns for w in active) + final_merge_ns
    return outputs


def run_plan(
    plan,
    cfg: ExecConfig,
    env: Mapping[int, Any],
    registry: SplitRegistry,
    timings: Optional[list[StageTiming]] = None,
) -> dict[int, Any]:
    """Run every stage in order; returns the values produced by annotated calls."""
    env = dict(env)
    results: dict[int, Any] = {}
    for stage in plan.stages:
        timing = StageTiming(stage.index)
        out = run_stage(stage, cfg, env, registry, timing)
        if timings is not None:
            timings.append(timing)
        env.update(out)
        results.update(out)
    return results
