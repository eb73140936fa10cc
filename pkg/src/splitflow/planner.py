"""Turn a captured dataflow graph into an ordered list of pipelined stages."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .annotation import ConstructorExpr, GenericExpr, MissingExpr, MISSING, UnknownExpr
from .errors import ConstructorFailure, CycleDetected, InferenceConflict
from .split_types import DeferredSplitType, SplitRegistry, SplitType, UnknownSplitType, unknown

RETURN = -1

Slot = tuple[int, int]  # (node_id, argument index or RETURN)
Assigned = Union[SplitType, MissingExpr]


@dataclass(frozen=True)
class GenericVar:
    node_id: int
    name: str


@dataclass(frozen=True)
class TypedArg:
    node_id: int
    arg_index: int
    assigned: Assigned


@dataclass(eq=False)
class Stage:
    index: int
    calls: list = field(default_factory=list)
    slot_types: dict[Slot, Assigned] = field(default_factory=dict)
    input_splits: list[tuple[int, SplitType]] = field(default_factory=list)
    output_merges: dict[int, SplitType] = field(default_factory=dict)
    # filled in by the executor
    piece_count: Optional[int] = None
    batch_size: Optional[int] = None

    @property
    def node_ids(self) -> list[int]:
        return [c.node_id for c in self.calls]

    def describe(self, labels: Optional["_Labels"] = None) -> str:
        labels = labels or _Labels()
        parts = []
        for call in self.calls:
            types = ", ".join(
                labels.type(self.slot_types[(call.node_id, i)]) for i in range(len(call.args))
            )
            text = f"{call.name}({types})"
            if call.returns is not None:
                text += f" -> {labels.type(self.slot_types[(call.node_id, RETURN)])}"
            parts.append(text)
        line = f"stage {self.index}: " + " | ".join(parts)
        if self.output_merges:
            merges = ", ".join(f"{labels.value(v)}:{labels.type(t)}" for v, t in self.output_merges.items())
            line += f"  [merge {merges}]"
        return line


class _Labels:
    """Per-plan numbering of unknown types and values, so printed plans are reproducible."""

    def __init__(self) -> None:
        self._unknowns: dict[int, int] = {}
        self._values: dict[int, int] = {}

    def type(self, t) -> str:
        if isinstance(t, UnknownSplitType):
            return f"unknown#{self._unknowns.setdefault(id(t), len(self._unknowns) + 1)}"
        return str(t)

    def value(self, v: int) -> str:
        return f"v{self._values.setdefault(v, len(self._values))}"


@dataclass
class ExecutionPlan:
    stages: list[Stage] = field(default_factory=list)
    types: dict[Slot, Assigned] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.stages)

    def describe(self) -> str:
        labels = _Labels()
        return "\n".join(s.describe(labels) for s in self.stages)


def format_plan(plan: ExecutionPlan) -> str:
    return plan.describe()


def typed_args(types: dict[Slot, Assigned]) -> list[TypedArg]:
    return [TypedArg(n, i, t) for (n, i), t in sorted(types.items()) if i != RETURN]


# -- split-type assignment ----------------------------------------------------


def _declared(node, slot: int):
    return node.sa.returns if slot == RETURN else node.sa.params[slot].expr


def assign_split_types(graph, registry: SplitRegistry) -> dict[Slot, Any]:
    """Evaluate constructors; generics are left as ``GenericVar`` placeholders."""
    env = graph.environment()
    out: dict[Slot, Any] = {}
    for node in graph.nodes:
        names = node.sa.param_names()
        slots = list(range(len(node.args)))
        if node.sa.returns is not None:
            slots.append(RETURN)
        for slot in slots:
            expr = _declared(node, slot)
            if isinstance(expr, MissingExpr):
                out[(node.node_id, slot)] = MISSING
            elif isinstance(expr, UnknownExpr):
                out[(node.node_id, slot)] = unknown()
            elif isinstance(expr, GenericExpr):
                out[(node.node_id, slot)] = GenericVar(node.node_id, expr.name)
            elif isinstance(expr, ConstructorExpr):
                snaps = [node.args[names.index(a)] for a in expr.args]
                if all(s.materialized for s in snaps):
                    try:
                        st = registry.construct(expr.kind, [s.data for s in snaps])
                    except ConstructorFailure as exc:
                        raise ConstructorFailure(
                            f"call {node.seq} ({node.name}): {exc}"
                        ) from exc
                else:
                    refs = tuple(s.value_id for s in snaps)
                    st = DeferredSplitType(expr.kind, node.node_id, expr.args, refs)
                out[(node.node_id, slot)] = st
            else:  # pragma: no cover - exhaustive over the expression variants
                raise TypeError(f"unexpected split type expression {expr!r}")
    return out


def infer(
    graph, partial: dict[Slot, Any], registry: SplitRegistry, *, strict: bool = False
) -> dict[Slot, Assigned]:
    """Resolve generics by pushing split types forward along graph edges.

    A generic takes the first split type that reaches any of its positions,
    with data edges considered before write-after-read edges. A second,
    different type is a conflict: fatal when ``strict``, otherwise the
    planner separates the two calls into different stages. Generics that
    nothing reaches use the default split type of their argument's data.
    """
    types = dict(partial)
    env = graph.environment()
    incoming: dict[Slot, list] = {}
    for e in graph.edges:
        incoming.setdefault((e.dst, e.dst_slot), []).append(e)
    for edges in incoming.values():
        edges.sort(key=lambda e: (e.kind != "raw", graph.nodes[e.src].seq, e.src_slot))

    for node in graph.nodes:
        slots = [s for s in list(range(len(node.args))) + [RETURN] if (node.node_id, s) in types]
        by_var: dict[GenericVar, list[int]] = {}
        for s in slots:
            t = types[(node.node_id, s)]
            if isinstance(t, GenericVar):
                by_var.setdefault(t, []).append(s)
        for var, var_slots in by_var.items():
            bound: Optional[SplitType] = None
            for s in var_slots:
                for e in incoming.get((node.node_id, s), ()):
                    if graph.nodes[e.src].seq >= node.seq:
                        raise CycleDetected(f"edge {e} runs against program order")
                    src = types[(e.src, e.src_slot)]
                    if not isinstance(src, SplitType):
                        continue
                    if bound is None:
                        bound = src
                    elif bound != src and strict:
                        raise InferenceConflict(
                            f"call {node.seq} ({node.name}): generic {var.name} bound to "
                            f"{bound} and {src}"
                        )
            if bound is None:
                for s in var_slots:
                    if s == RETURN:
                        continue
                    snap = node.args[s]
                    if snap.materialized:
                        bound = registry.default_split_type(env[snap.value_id])
                        if bound is not None:
                            break
            if bound is None:
                # re-split by the data's default once the value exists
                bound = unknown()
            for s in var_slots:
                types[(node.node_id, s)] = bound
    return types


# -- stage construction -------------------------------------------------------


class _StageBuilder:
    def __init__(self, graph, types, registry: SplitRegistry):
        self.graph = graph
        self.types = types
        self.registry = registry
        self.incoming: dict[int, list] = {}
        for e in graph.edges:
            self.incoming.setdefault(e.dst, []).append(e)

    def split_slots(self, node) -> list[int]:
        return [
            i for i in range(len(node.args)) if isinstance(self.types[(node.node_id, i)], SplitType)
        ]

    def counts(self, node) -> tuple[set[int], bool]:
        known: set[int] = set()
        indeterminate = False
        for i in self.split_slots(node):
            c = self.registry.element_count(self.types[(node.node_id, i)])
            if c is None:
                indeterminate = True
            else:
                known.add(c)
        return known, indeterminate

    def edge_pipelines(self, e) -> bool:
        src_t = self.types[(e.src, e.src_slot)]
        dst_t = self.types[(e.dst, e.dst_slot)]
        if not isinstance(src_t, SplitType) or not isinstance(dst_t, SplitType):
            return False
        if isinstance(_declared(self.graph.nodes[e.src], e.src_slot), UnknownExpr):
            return False
        if src_t != dst_t:
            return False
        # merge-only kinds describe partial results that must be combined first
        if src_t.name in self.registry and not self.registry.get(src_t.name).splittable:
            return False
        return True

    def can_join(self, node, stage: "_Open") -> bool:
        if not self.split_slots(node) or stage.solo:
            return False
        connected = False
        for e in self.incoming.get(node.node_id, ()):
            if e.src in stage.members:
                if not self.edge_pipelines(e):
                    return False
                connected = True
        known, indeterminate = self.counts(node)
        if (indeterminate or stage.indeterminate) and not connected:
            return False
        if len(known | stage.known) > 1:
            return False
        return True

    def build(self) -> list[list]:
        groups: list[_Open] = []
        for node in self.graph.nodes:
            if groups and self.can_join(node, groups[-1]):
                groups[-1].add(node, self)
            else:
                groups.append(_Open(node, self))
        return [g.nodes for g in groups]


class _Open:
    def __init__(self, node, builder: _StageBuilder):
        self.nodes: list = []
        self.members: set[int] = set()
        self.known: set[int] = set()
        self.indeterminate = False
        self.solo = not builder.split_slots(node)
        self.add(node, builder)

    def add(self, node, builder: _StageBuilder) -> None:
        self.nodes.append(node)
        self.members.add(node.node_id)
        known, indeterminate = builder.counts(node)
        self.known |= known
        self.indeterminate |= indeterminate


def build_stages(graph, types: dict[Slot, Assigned], registry: SplitRegistry) -> ExecutionPlan:
    for node in graph.nodes:
        for i in range(len(node.args)):
            t = types.get((node.node_id, i))
            if t is None or isinstance(t, GenericVar):
                raise ValueError(f"call {node.seq} argument {i} has no split type")
    plan = ExecutionPlan(types=types)
    for index, nodes in enumerate(_StageBuilder(graph, types, registry).build()):
        stage = Stage(index, list(nodes))
        produced: set[int] = set()
        seen_inputs: set[tuple[int, SplitType]] = set()
        for call in nodes:
            for i, snap in enumerate(call.args):
                t = types[(call.node_id, i)]
                stage.slot_types[(call.node_id, i)] = t
                if isinstance(t, SplitType) and snap.value_id not in produced:
                    key = (snap.value_id, t)
                    if key not in seen_inputs:
                        seen_inputs.add(key)
                        stage.input_splits.append(key)
            if call.returns is not None:
                rt = types[(call.node_id, RETURN)]
                stage.slot_types[(call.node_id, RETURN)] = rt
                stage.output_merges[call.returns] = rt
                produced.add(call.returns)
        plan.stages.append(stage)
    return plan


def plan(graph, registry: SplitRegistry, *, strict: bool = False) -> ExecutionPlan:
    partial = assign_split_types(graph, registry)
    types = infer(graph, partial, registry, strict=strict)
    return build_stages(graph, types, registry)
