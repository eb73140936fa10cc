"""Lazy capture of annotated calls into a dataflow graph.

Calls registered on a :class:`Session` are not run. They are recorded with
snapshots of their arguments, and dependency edges are derived from returned
handles and from buffers marked ``mut``. The graph is planned and executed
when a handle is forced, when ``touch`` is called on a captured buffer, or
when ``evaluate`` is called explicitly.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from numbers import Number
from typing import Any, Optional

import numpy as np

from . import executor, planner
from .annotation import AnnotatedFunction, SplitAnnotation
from .errors import ArityError, GraphSealed
from .executor import ExecConfig, StageTiming
from .split_types import SplitRegistry

trace_log = logging.getLogger("splitflow.trace")

RETURN = -1

_value_ids = itertools.count(1)


def _new_value_id() -> int:
    return next(_value_ids)


class LazyHandle:
    """Deferred result of an annotated call.

    ``get()`` forces evaluation of the captured graph. ``alias()`` creates a
    copy that resolves to the same data once evaluated.
    """

    __slots__ = ("value_id", "_target", "_session", "_evaluated", "_data")

    def __init__(self, session: "Session", value_id: int, target: Optional["LazyHandle"] = None):
        self.value_id = value_id
        self._target = target
        self._session = session
        self._evaluated = False
        self._data = None

    @property
    def alias_of(self) -> Optional[int]:
        return None if self._target is None else self._target.value_id

    @property
    def canonical_id(self) -> int:
        return self._canonical().value_id

    @property
    def state(self) -> str:
        return "Evaluated" if self.evaluated else "Pending"

    @property
    def evaluated(self) -> bool:
        return self._canonical()._evaluated

    def _canonical(self) -> "LazyHandle":
        return self if self._target is None else self._target

    def alias(self) -> "LazyHandle":
        return LazyHandle(self._session, _new_value_id(), self._canonical())

    def get(self) -> Any:
        return self._session.force(self)

    def _set(self, data: Any) -> None:
        self._data = data
        self._evaluated = True

    def __repr__(self) -> str:
        alias = f" alias_of={self.alias_of}" if self.alias_of is not None else ""
        return f"<LazyHandle v{self.value_id}{alias} {self.state}>"


@dataclass
class ArgSnapshot:
    """One captured argument.

    ``role`` is ``"literal"`` for copied scalars, ``"buffer"`` for shared
    references to externally allocated data, and ``"handle"`` for the pending
    result of an earlier call in the same graph.
    """

    role: str
    value_id: int
    data: Any = None

    @property
    def materialized(self) -> bool:
        return self.role != "handle"


@dataclass(eq=False)
class CallNode:
    node_id: int
    function: AnnotatedFunction
    args: list[ArgSnapshot]
    seq: int
    returns: Optional[int] = None

    @property
    def sa(self) -> SplitAnnotation:
        return self.function.annotation

    @property
    def name(self) -> str:
        return self.function.name

    def __repr__(self) -> str:
        return f"<CallNode {self.seq}:{self.name}>"


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    value_id: int
    src_slot: int
    dst_slot: int
    kind: str  # "raw" (read after write), "war" (write after read)


@dataclass
class DataflowGraph:
    nodes: list[CallNode] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    # bookkeeping for edge derivation
    buffer_ids: dict[int, int] = field(default_factory=dict)  # id(obj) -> value_id
    last_writer: dict[int, tuple[int, int]] = field(default_factory=dict)
    readers: dict[int, list[tuple[int, int]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> CallNode:
        return self.nodes[node_id]

    def in_edges(self, node_id: int) -> list[Edge]:
        return [e for e in self.edges if e.dst == node_id]

    def out_edges(self, node_id: int) -> list[Edge]:
        return [e for e in self.edges if e.src == node_id]

    def environment(self) -> dict[int, Any]:
        """Materialized argument values keyed by value id."""
        env: dict[int, Any] = {}
        for node in self.nodes:
            for snap in node.args:
                if snap.materialized:
                    env[snap.value_id] = snap.data
        return env

    def references(self, obj: Any) -> bool:
        return id(obj) in self.buffer_ids

    def add_call(self, function: AnnotatedFunction, args: list[ArgSnapshot]) -> CallNode:
        node = CallNode(len(self.nodes), function, args, len(self.nodes))
        seen: set[Edge] = set()
        params = function.annotation.params
        for idx, snap in enumerate(args):
            if snap.role == "literal":
                continue
            vid = snap.value_id
            writer = self.last_writer.get(vid)
            if writer is not None and writer[0] != node.node_id:
                edge = Edge(writer[0], node.node_id, vid, writer[1], idx, "raw")
                if edge not in seen:
                    seen.add(edge)
                    self.edges.append(edge)
            if params[idx].mutable:
                for reader in self.readers.get(vid, ()):
                    if reader[0] == node.node_id:
                        continue
                    edge = Edge(reader[0], node.node_id, vid, reader[1], idx, "war")
                    if edge not in seen:
                        seen.add(edge)
                        self.edges.append(edge)
        for idx, snap in enumerate(args):
            if snap.role == "literal":
                continue
            if params[idx].mutable:
                self.last_writer[snap.value_id] = (node.node_id, idx)
                self.readers[snap.value_id] = []
            else:
                self.readers.setdefault(snap.value_id, []).append((node.node_id, idx))
        if function.annotation.returns is not None:
            node.returns = _new_value_id()
            self.last_writer[node.returns] = (node.node_id, RETURN)
        self.nodes.append(node)
        return node


_SCALARS = (Number, str, bytes, type(None), np.generic)


class Session:
    """A capture context: one graph at a time, evaluated on demand.

    With ``eager=True`` every registered call runs immediately and no graph
    is built. Benchmarks use this mode as the baseline.
    """

    def __init__(
        self,
        registry: SplitRegistry,
        config: Optional[ExecConfig] = None,
        *,
        eager: bool = False,
        trace: bool = False,
    ):
        self.registry = registry
        self.config = config or ExecConfig()
        self.eager = eager
        self.trace = trace
        self.graph = DataflowGraph()
        self.last_plan: Optional[planner.ExecutionPlan] = None
        self.timings: list[StageTiming] = []
        self.capture_ns = 0
        self.plan_ns = 0
        self.execute_ns = 0
        self._pending: dict[int, LazyHandle] = {}
        self._evaluating = False

    # -- capture -------------------------------------------------------------
    def _snapshot(self, arg: Any) -> ArgSnapshot:
        if isinstance(arg, LazyHandle):
            canonical = arg._canonical()
            if not canonical._evaluated:
                if canonical._session is self and canonical.value_id in self._pending:
                    return ArgSnapshot("handle", canonical.value_id)
                # pending in another session: settle it there first
                arg = canonical._session.force(canonical)
            else:
                arg = canonical._data
        if isinstance(arg, _SCALARS):
            return ArgSnapshot("literal", _new_value_id(), arg)
        vid = self.graph.buffer_ids.get(id(arg))
        if vid is None:
            vid = _new_value_id()
            self.graph.buffer_ids[id(arg)] = vid
        return ArgSnapshot("buffer", vid, arg)

    def register(self, function: AnnotatedFunction, *args: Any) -> Optional[LazyHandle]:
        """Capture ``function(*args)``; returns a pending handle if it has a return value."""
        if self._evaluating:
            raise GraphSealed("cannot register calls while the graph is being evaluated")
        if len(args) != function.signature.arity:
            raise ArityError(
                f"{function.name} takes {function.signature.arity} arguments, got {len(args)}"
            )
        if self.eager:
            return self._run_eagerly(function, args)
        t0 = time.perf_counter_ns()
        snaps = [self._snapshot(a) for a in args]
        node = self.graph.add_call(function, snaps)
        if self.trace:
            mask = "".join("1" if p.mutable else "0" for p in function.annotation.params)
            ids = ",".join(
                f"{'L' if s.role == 'literal' else 'v'}{s.value_id}" for s in snaps
            )
            trace_log.debug("%d %s %s %s", node.seq, function.name, ids, mask)
        handle = None
        if node.returns is not None:
            handle = LazyHandle(self, node.returns)
            self._pending[node.returns] = handle
        self.capture_ns += time.perf_counter_ns() - t0
        return handle

    def _run_eagerly(self, function: AnnotatedFunction, args) -> Optional[LazyHandle]:
        resolved = [a.get() if isinstance(a, LazyHandle) else a for a in args]
        result = function.func(*resolved)
        if function.annotation.returns is None:
            return None
        handle = LazyHandle(self, _new_value_id())
        handle._set(result)
        return handle

    # -- evaluation points ---------------------------------------------------
    def force(self, handle: LazyHandle) -> Any:
        canonical = handle._canonical()
        if not canonical._evaluated:
            canonical._session.evaluate()
        return canonical._data

    def touch(self, buffer: Any) -> None:
        """Declare that non-annotated code is about to access ``buffer``."""
        if self.graph.references(buffer):
            self.evaluate()

    def evaluate(self) -> dict[int, Any]:
        if not self.graph.nodes:
            return {}
        if self._evaluating:
            raise GraphSealed("evaluation is already in progress")
        self._evaluating = True
        try:
            t0 = time.perf_counter_ns()
            plan = planner.plan(self.graph, self.registry, strict=self.config.pedantic)
            t1 = time.perf_counter_ns()
            self.plan_ns += t1 - t0
            self.last_plan = plan
            timings: list[StageTiming] = []
            results = executor.run_plan(
                plan, self.config, self.graph.environment(), self.registry, timings
            )
            self.execute_ns += time.perf_counter_ns() - t1
            self.timings.extend(timings)
        finally:
            self._evaluating = False
        for vid, data in results.items():
            handle = self._pending.pop(vid, None)
            if handle is not None:
                handle._set(data)
        self.graph = DataflowGraph()
        return results
